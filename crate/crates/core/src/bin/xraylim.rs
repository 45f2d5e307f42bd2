use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xraylim::io::config::{AnalysisKind, RunConfig};
use xraylim::io::run::{run_command, Command};
use xraylim::{Error, Result};

/// Forward modelling and upper limits for low-background X-ray spectra.
#[derive(Parser)]
#[command(name = "xraylim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `analysis.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence level; overrides `analysis.cl`.
    #[arg(long)]
    cl: Option<f64>,
    /// Output directory for the report and artifacts.
    #[arg(long, default_value = "xraylim-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Csl,
    Pep,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a Poisson spectrum (or current-on/off pair) from the configured model.
    Simulate(Common),
    /// Subtract the scaled current-off spectrum from the current-on spectrum.
    Subtract(Common),
    /// Fit the configured model to a spectrum.
    Fit(Common),
    /// Bayesian upper limit on the CSL rate or the forbidden-line probability.
    Limit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Sensitivity projection from an improvement budget.
    Project(Common),
    /// Print the physical constants table.
    Constants(Common),
}

fn resolve(common: &Common, kind: Option<Kind>) -> Result<(RunConfig, PathBuf)> {
    let (mut config, base) = match &common.config {
        Some(p) => {
            let cfg = RunConfig::load(p).map_err(|e| e.in_stage("config"))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = common.seed {
        config.analysis.seed = seed;
    }
    if let Some(cl) = common.cl {
        config.analysis.cl = cl;
    }
    match kind {
        Some(Kind::Csl) => config.analysis.kind = AnalysisKind::Csl,
        Some(Kind::Pep) => config.analysis.kind = AnalysisKind::Pep,
        None => {}
    }
    config.validate().map_err(|e| e.in_stage("config"))?;
    Ok((config, base))
}

fn main_inner() -> std::result::Result<(), Error> {
    let cli = Cli::parse();
    let (command, common, kind) = match &cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Subtract(c) => (Command::Subtract, c, None),
        Cmd::Fit(c) => (Command::Fit, c, None),
        Cmd::Limit { common, kind } => (Command::Limit, common, *kind),
        Cmd::Project(c) => (Command::Project, c, None),
        Cmd::Constants(c) => (Command::Constants, c, None),
    };
    let (config, base) = resolve(common, kind)?;
    let output = run_command(command, &config, &base)?;
    output.write_to(&common.out)?;
    for row in &output.report.rows {
        println!("{row}");
    }
    println!("config_hash {}", output.report.config_hash);
    println!("report {}", common.out.join(xraylim::io::run::REPORT_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xraylim: error: {e}");
            ExitCode::FAILURE
        }
    }
}
