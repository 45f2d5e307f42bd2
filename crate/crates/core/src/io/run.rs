//! Command pipelines behind the CLI.
//!
//! Every command takes a resolved [`RunConfig`] and returns a report plus the
//! artifact files to write. Outputs depend only on the configuration (which
//! includes the seed), so re-running a configuration reproduces them byte for
//! byte.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::constants::{Exposure, CODATA_2018, CONSTANTS_TABLE_VERSION};
use crate::csl::lambda_from_alpha;
use crate::error::{Error, Result, StageExt};
use crate::io::config::{AnalysisKind, RunConfig};
use crate::io::report::{scan_table, Report, Table, DIMENSIONLESS};
use crate::io::spectrum_file::{format_spectrum, load_spectrum_with_header, SpectrumHeader};
use crate::limits::{
    bayesian_upper_limit, cycle_seeds, fit_minimize, run_pseudo_experiments, FitProblem, FreeParam, Observation,
};
use crate::model::{predict_counts, simulate_spectrum, ParamRef, SpectralComponent, SpectralModel};
use crate::pep::{
    pep_expected_counts, pep_pseudo_experiments, pep_upper_limit, OnOffSimulation, PepLimitOptions,
};
use crate::projection::{background_reduction, overall_improvement, summary_rows, total_linear_factor};
use crate::spectrum::{subtract_spectra, BinnedSpectrum, Residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Subtract,
    Fit,
    Limit,
    Project,
    Constants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Subtract => "subtract",
            Command::Fit => "fit",
            Command::Limit => "limit",
            Command::Project => "project",
            Command::Constants => "constants",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "subtract" => Command::Subtract,
            "fit" => Command::Fit,
            "limit" => Command::Limit,
            "project" => Command::Project,
            "constants" => Command::Constants,
            other => return Err(Error::Config(format!("unknown command {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

pub const REPORT_FILE: &str = "report.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

impl RunOutput {
    /// Writes the artifacts and `report.json` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(Error::from).stage("write")?;
        let mut written = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.contents).map_err(Error::from).stage("write")?;
            written.push(p);
        }
        let p = dir.join(REPORT_FILE);
        std::fs::write(&p, self.report.to_json()).map_err(Error::from).stage("write")?;
        written.push(p);
        Ok(written)
    }
}

struct Outputs {
    report: Report,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    fn new(command: Command, config: &RunConfig) -> Self {
        let hash = config.hash();
        let mut report = Report::new(command.name(), hash, config.analysis.seed);
        report.set("confidence_level", config.analysis.cl, DIMENSIONLESS);
        let mut out = Self {
            report,
            artifacts: Vec::new(),
        };
        out.add(RESOLVED_CONFIG_FILE, config.to_toml());
        out
    }

    fn add(&mut self, name: &str, contents: String) {
        self.report.artifacts.push(name.to_string());
        self.artifacts.push(Artifact {
            name: name.to_string(),
            contents,
        });
    }

    fn add_table(&mut self, name: &str, table: &Table) {
        let text = table.to_tsv(&self.report.config_hash);
        self.add(name, text);
    }

    fn add_spectrum(&mut self, name: &str, spectrum: &BinnedSpectrum, config: &RunConfig) {
        let header = SpectrumHeader {
            config_hash: Some(self.report.config_hash.clone()),
            response: config.response().ok(),
            ..SpectrumHeader::default()
        };
        self.add(name, format_spectrum(spectrum, &header));
    }

    fn finish(mut self) -> RunOutput {
        self.report.artifacts.sort();
        self.artifacts.sort_by(|a, b| a.name.cmp(&b.name));
        RunOutput {
            report: self.report,
            artifacts: self.artifacts,
        }
    }
}

/// Independent seeds for the simulation, the minimizer and any ensemble.
struct Seeds {
    simulation: u64,
    fit: u64,
    ensemble: u64,
}

impl Seeds {
    fn from_master(seed: u64) -> Self {
        let s = cycle_seeds(seed, 2);
        Self {
            simulation: s[0].0,
            fit: s[0].1,
            ensemble: s[1].0,
        }
    }
}

/// Runs one pipeline. Relative paths in `config` are resolved against `base_dir`.
pub fn run_command(command: Command, config: &RunConfig, base_dir: &Path) -> Result<RunOutput> {
    config.validate().stage("config")?;
    let mut out = Outputs::new(command, config);
    match command {
        Command::Simulate => simulate(config, &mut out)?,
        Command::Subtract => subtract(config, base_dir, &mut out)?,
        Command::Fit => fit(config, base_dir, &mut out)?,
        Command::Limit => match config.analysis.kind {
            AnalysisKind::Csl => csl_limit(config, base_dir, &mut out)?,
            AnalysisKind::Pep => pep_limit(config, base_dir, &mut out)?,
            other => {
                return Err(Error::Config(format!("limit needs kind csl or pep, not {other:?}")).in_stage("config"))
            }
        },
        Command::Project => project(config, &mut out)?,
        Command::Constants => constants(&mut out),
    }
    Ok(out.finish())
}

fn exposure_of(config: &RunConfig) -> Exposure {
    config.spectrum.exposure().unwrap_or_default()
}

fn simulated_spectrum(config: &RunConfig, seed: u64) -> Result<BinnedSpectrum> {
    let grid = config.grid()?;
    let model = config.model()?;
    Ok(simulate_spectrum(&model, &grid, seed)?
        .with_tag(config.spectrum.tag)
        .with_exposure(exposure_of(config))
        .with_acquisition_days(config.spectrum.acquisition_days))
}

/// The observed spectrum: loaded from `paths.spectrum` or simulated from the
/// configured model.
fn observed_spectrum(config: &RunConfig, base_dir: &Path, seeds: &Seeds) -> Result<(BinnedSpectrum, bool)> {
    match &config.paths.spectrum {
        Some(p) => {
            let (mut s, _) = load_spectrum_with_header(base_dir.join(p)).stage("load")?;
            if !s.exposure.is_positive() {
                s = s.with_exposure(exposure_of(config));
            }
            Ok((s, false))
        }
        None => Ok((simulated_spectrum(config, seeds.simulation).stage("simulate")?, true)),
    }
}

fn on_off_simulation(config: &RunConfig) -> Result<OnOffSimulation> {
    let pep = config.pep()?;
    let sim = OnOffSimulation {
        background: config.model()?,
        grid: config.grid()?,
        transition: pep.transition()?,
        on_days: pep.on_days,
        off_days: pep.off_days,
    };
    sim.validate()?;
    Ok(sim)
}

fn simulate_on_off(config: &RunConfig, seeds: &Seeds) -> Result<(BinnedSpectrum, BinnedSpectrum)> {
    let pep = config.pep().stage("config")?;
    let sim = on_off_simulation(config).stage("config")?;
    let injected = pep_expected_counts(&pep.run().stage("config")?, pep.inject_beta2_over_2).stage("simulate")?;
    sim.simulate(injected, seeds.simulation).stage("simulate")
}

/// Current-on/off spectra from `paths.on`/`paths.off`, or simulated.
fn on_off_spectra(config: &RunConfig, base_dir: &Path, seeds: &Seeds) -> Result<(BinnedSpectrum, BinnedSpectrum, bool)> {
    match (&config.paths.on, &config.paths.off) {
        (Some(on), Some(off)) => {
            let (on, _) = load_spectrum_with_header(base_dir.join(on)).stage("load")?;
            let (off, _) = load_spectrum_with_header(base_dir.join(off)).stage("load")?;
            Ok((on, off, false))
        }
        (None, None) => {
            let (on, off) = simulate_on_off(config, seeds)?;
            Ok((on, off, true))
        }
        _ => Err(Error::Config("paths.on and paths.off must be given together".into()).in_stage("config")),
    }
}

fn spectrum_table(spectrum: &BinnedSpectrum, expected: Option<&[f64]>) -> Table {
    let mut t = if expected.is_some() {
        Table::new(&["low[keV]", "high[keV]", "observed[counts]", "expected[counts]"])
    } else {
        Table::new(&["low[keV]", "high[keV]", "observed[counts]"])
    };
    for (i, (lo, hi)) in spectrum.grid.bins().enumerate() {
        let mut row = vec![lo, hi, spectrum.counts()[i] as f64];
        if let Some(e) = expected {
            row.push(e[i]);
        }
        t.push(row);
    }
    t
}

fn residual_table(r: &Residual) -> Table {
    let mut t = Table::new(&["low[keV]", "high[keV]", "residual[counts]", "uncertainty[counts]"]);
    for (i, (lo, hi)) in r.grid.bins().enumerate() {
        t.push(vec![lo, hi, r.values[i], r.uncertainties[i]]);
    }
    t
}

fn record_spectrum(report: &mut Report, prefix: &str, s: &BinnedSpectrum) {
    report
        .set(format!("{prefix}.total_counts"), s.total() as f64, "counts")
        .set(format!("{prefix}.energy_low"), s.grid.low(), "keV")
        .set(format!("{prefix}.energy_high"), s.grid.high(), "keV")
        .set(format!("{prefix}.bins"), s.grid.n_bins() as f64, "bins")
        .set(format!("{prefix}.exposure"), s.exposure.product(), "kg*day")
        .set(format!("{prefix}.acquisition_days"), s.acquisition_days, "day");
}

fn simulate(config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let seeds = Seeds::from_master(config.analysis.seed);
    if config.analysis.kind == AnalysisKind::Pep {
        let (on, off) = simulate_on_off(config, &seeds)?;
        record_spectrum(&mut out.report, "current_on", &on);
        record_spectrum(&mut out.report, "current_off", &off);
        out.add_spectrum("spectrum_on.txt", &on, config);
        out.add_spectrum("spectrum_off.txt", &off, config);
        return Ok(());
    }
    let spectrum = simulated_spectrum(config, seeds.simulation).stage("simulate")?;
    let expected = predict_counts(&config.model()?, &spectrum.grid).stage("simulate")?;
    record_spectrum(&mut out.report, "spectrum", &spectrum);
    out.report
        .set("spectrum.expected_counts", expected.iter().sum(), "counts");
    out.add_spectrum("spectrum.txt", &spectrum, config);
    out.add_table("spectrum.tsv", &spectrum_table(&spectrum, Some(&expected)));
    Ok(())
}

fn subtract(config: &RunConfig, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let seeds = Seeds::from_master(config.analysis.seed);
    let (on, off, simulated) = on_off_spectra(config, base_dir, &seeds)?;
    let r = subtract_spectra(&on, &off).stage("subtract")?;
    record_spectrum(&mut out.report, "current_on", &on);
    record_spectrum(&mut out.report, "current_off", &off);
    out.report
        .set("residual.scale", r.scale, DIMENSIONLESS)
        .set("residual.sum", r.values.iter().sum(), "counts");
    if simulated {
        out.add_spectrum("spectrum_on.txt", &on, config);
        out.add_spectrum("spectrum_off.txt", &off, config);
    }
    out.add_table("residual.tsv", &residual_table(&r));
    Ok(())
}

fn param_unit(p: ParamRef) -> String {
    match p {
        ParamRef::Amplitude { .. } => "counts".into(),
        ParamRef::Centroid { .. } => "keV".into(),
        ParamRef::Coefficient { power, .. } => format!("counts/keV^{}", power + 1),
    }
}

fn parse_vary(index: usize, comp: &SpectralComponent, field: &str) -> Result<ParamRef> {
    let bad = || Error::Config(format!("components[{index}]: cannot vary {field:?} of {comp:?}"));
    Ok(match (comp, field) {
        (SpectralComponent::GaussianLine { .. }, "amplitude")
        | (SpectralComponent::OneOverE { .. }, "amplitude" | "alpha") => ParamRef::Amplitude { component: index },
        (SpectralComponent::GaussianLine { .. }, "centroid") => ParamRef::Centroid { component: index },
        (SpectralComponent::Polynomial { .. }, f) if f.starts_with('c') => ParamRef::Coefficient {
            component: index,
            power: f[1..].parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

/// Minimizer step: a tenth of the start value, or the parameter change that
/// moves the prediction by one standard deviation of the observed total.
fn initial_step(model: &SpectralModel, p: ParamRef, observed_total: f64, grid: &crate::spectrum::EnergyGrid) -> Result<f64> {
    let init = model.get(p)?;
    if let (ParamRef::Centroid { .. }, SpectralComponent::GaussianLine { centroid, .. }) =
        (p, &model.components[p.component()])
    {
        return model.response.sigma_at(*centroid);
    }
    let mut unit = SpectralModel::new(model.response.clone()).with(match &model.components[p.component()] {
        SpectralComponent::Polynomial { .. } => SpectralComponent::Polynomial { coefficients: Vec::new() },
        other => other.clone(),
    });
    let single = p.from_component(0);
    unit.set(single, 1.0)?;
    if let SpectralComponent::GaussianLine { centroid, .. } = &mut unit.components[0] {
        *centroid = centroid.clamp(grid.low(), grid.high());
    }
    let response: f64 = predict_counts(&unit, grid)?.iter().sum::<f64>().abs();
    let by_noise = if response > 0.0 {
        (observed_total + 1.0).sqrt() / response
    } else {
        1.0
    };
    Ok((0.1 * init.abs()).max(by_noise))
}

fn free_param(model: &SpectralModel, p: ParamRef, total: f64, grid: &crate::spectrum::EnergyGrid) -> Result<FreeParam> {
    let name = match p {
        ParamRef::Amplitude { component } => format!("components[{component}].amplitude"),
        ParamRef::Centroid { component } => format!("components[{component}].centroid"),
        ParamRef::Coefficient { component, power } => format!("components[{component}].c{power}"),
    };
    let fp = FreeParam::new(p, name, model.get(p)?, initial_step(model, p, total, grid)?);
    Ok(match p {
        ParamRef::Amplitude { .. } => fp.bounded(Some(0.0), None),
        ParamRef::Centroid { .. } => fp.bounded(Some(grid.low()), Some(grid.high())),
        ParamRef::Coefficient { .. } => fp,
    })
}

/// Builds the fit problem from the `[[components]]` table. The signal is the
/// amplitude of the component marked `signal`; when none is marked,
/// `default_signal` decides what happens.
fn build_problem(
    config: &RunConfig,
    mut model: SpectralModel,
    observation: Observation,
    default_signal: DefaultSignal,
) -> Result<FitProblem> {
    let grid = observation.grid().clone();
    let total = match &observation {
        Observation::Counts(s) => s.total() as f64,
        Observation::Gaussian(r) => r.values.iter().map(|v| v.abs()).sum(),
    };
    let mut signal_ref = config
        .components
        .iter()
        .position(|c| c.signal)
        .map(|i| ParamRef::Amplitude { component: i });
    let mut varied = Vec::new();
    for (i, c) in config.components.iter().enumerate() {
        for field in &c.vary {
            let p = parse_vary(i, &c.component, field)?;
            if Some(p) != signal_ref && !varied.contains(&p) {
                varied.push(p);
            }
        }
    }
    if signal_ref.is_none() {
        match default_signal {
            DefaultSignal::FirstLinear => {
                let pos = varied
                    .iter()
                    .position(|p| p.is_linear())
                    .ok_or_else(|| Error::Config("no linear parameter is marked to vary".into()))?;
                signal_ref = Some(varied.remove(pos));
            }
            DefaultSignal::Append(component) => {
                model.components.push(component);
                signal_ref = Some(ParamRef::Amplitude {
                    component: model.components.len() - 1,
                });
            }
        }
    }
    let signal_ref = signal_ref.expect("signal resolved above");
    let signal = free_param(&model, signal_ref, total, &grid)?;
    let nuisances = varied
        .into_iter()
        .map(|p| free_param(&model, p, total, &grid))
        .collect::<Result<Vec<_>>>()?;
    let mut problem = FitProblem::new(observation, model, signal, nuisances, config.analysis.statistic)?;
    problem.options.simplex.seed = Seeds::from_master(config.analysis.seed).fit;
    Ok(problem)
}

enum DefaultSignal {
    FirstLinear,
    Append(SpectralComponent),
}

fn fit(config: &RunConfig, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let seeds = Seeds::from_master(config.analysis.seed);
    let (spectrum, simulated) = observed_spectrum(config, base_dir, &seeds)?;
    let model = config.model().stage("config")?;
    let problem = build_problem(config, model, Observation::Counts(spectrum.clone()), DefaultSignal::FirstLinear)
        .stage("fit")?;
    let result = fit_minimize(&problem).stage("fit")?;
    record_spectrum(&mut out.report, "spectrum", &spectrum);
    for (i, p) in problem.params().enumerate() {
        let unit = param_unit(p.param);
        out.report.set(format!("fit.{}.value", p.name), result.values[i], &unit);
        if let Some(u) = &result.uncertainties {
            out.report.set(format!("fit.{}.uncertainty", p.name), u[i], &unit);
        }
    }
    let stat = config.analysis.statistic.name();
    out.report
        .set(format!("fit.{stat}"), result.statistic, DIMENSIONLESS)
        .set("fit.bins", spectrum.grid.n_bins() as f64, "bins")
        .set("fit.free_parameters", result.values.len() as f64, "parameters")
        .set("fit.evaluations", result.evaluations as f64, "evaluations");
    out.report.method = Some(format!("nelder-mead/{stat}"));
    let expected = problem.expected(&result.values).stage("fit")?;
    if simulated {
        out.add_spectrum("spectrum.txt", &spectrum, config);
    }
    out.add_table("fit.tsv", &spectrum_table(&spectrum, Some(&expected)));
    Ok(())
}

const PRIOR_ASSUMPTION: &str =
    "flat prior on the signal amplitude restricted to >= 0; nuisance parameters profiled";

fn csl_limit(config: &RunConfig, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let seeds = Seeds::from_master(config.analysis.seed);
    let (spectrum, simulated) = observed_spectrum(config, base_dir, &seeds)?;
    let exposure = spectrum.exposure;
    if !exposure.is_positive() {
        return Err(Error::Config("a CSL limit needs a positive exposure".into()).in_stage("config"));
    }
    if let Some(c) = config.components.iter().find(|c| c.signal) {
        if !matches!(c.component, SpectralComponent::OneOverE { .. }) {
            return Err(Error::Config("the CSL signal must be a one_over_e component".into()).in_stage("config"));
        }
    }
    let target = config.csl.target(base_dir).stage("config")?;
    let a = config.csl.correlation_length_m;
    let model = config.model().stage("config")?;
    let problem = build_problem(
        config,
        model,
        Observation::Counts(spectrum.clone()),
        DefaultSignal::Append(SpectralComponent::continuum(0.0)),
    )
    .stage("fit")?;
    let cl = config.analysis.cl;
    let mut alpha = bayesian_upper_limit(&problem, cl).stage("limit")?;
    alpha.parameter = "alpha".into();
    alpha.unit = "counts".into();

    let per_alpha = lambda_from_alpha(1.0, &target, &exposure, a, false).stage("limit")?;
    let per_alpha_mass = lambda_from_alpha(1.0, &target, &exposure, a, true).stage("limit")?;
    let lambda = alpha.rescaled(per_alpha, "lambda", "1/s");
    let lambda_mass = alpha.rescaled(per_alpha_mass, "lambda_mass_proportional", "1/s");

    let r = &mut out.report;
    r.kind = Some("csl".into());
    record_spectrum(r, "spectrum", &spectrum);
    r.add_limit("csl.alpha", &alpha);
    r.add_limit("csl.lambda", &lambda);
    r.add_limit("csl.lambda_mass_proportional", &lambda_mass);
    r.set(
        "csl.lambda_ratio",
        lambda_mass.upper_bound / lambda.upper_bound,
        DIMENSIONLESS,
    )
    .set("csl.correlation_length", a, "m")
    .set("csl.quasi_free_electrons_per_atom", target.quasi_free_electrons_per_atom, "electrons")
    .set("csl.quasi_free_electrons", target.electrons_per_kg() * exposure.mass, "electrons")
    .set("csl.lambda_per_alpha", per_alpha, "1/(s*counts)");
    r.rows.push(format!("target {}", target.element));
    r.rows.push(format!("lambda < {:e} 1/s at {cl} CL", lambda.upper_bound));
    r.rows.push(format!(
        "lambda (mass proportional) < {:e} 1/s at {cl} CL",
        lambda_mass.upper_bound
    ));
    r.assumptions.push(PRIOR_ASSUMPTION.into());
    r.assumptions.push("continuum amplitude counts emitted photons; detector efficiency applied in the model".into());

    let n = config.analysis.pseudo_experiments;
    if n > 0 {
        let mut truth = problem.model.clone();
        truth.set(problem.signal.param, 0.0)?;
        let ens = run_pseudo_experiments(&problem, &truth, 0.0, n, cl, seeds.ensemble).stage("limit")?;
        let median_alpha = ens.median_bound();
        let r = &mut out.report;
        r.set("ensemble.requested", n as f64, "pseudo-experiments")
            .set("ensemble.failures", ens.failures.len() as f64, "pseudo-experiments")
            .set("ensemble.coverage", ens.coverage, DIMENSIONLESS)
            .set("ensemble.median.alpha", median_alpha, "counts")
            .set("ensemble.median.lambda", median_alpha * per_alpha, "1/s")
            .set("ensemble.median.lambda_mass_proportional", median_alpha * per_alpha_mass, "1/s");
    }

    let expected = problem
        .expected(&problem.initial_values())
        .stage("limit")?;
    if simulated {
        out.add_spectrum("spectrum.txt", &spectrum, config);
    }
    out.add_table("spectrum.tsv", &spectrum_table(&spectrum, Some(&expected)));
    out.add_table("scan_alpha.tsv", &scan_table(&alpha));
    out.add_table("scan_lambda.tsv", &scan_table(&lambda));
    Ok(())
}

fn pep_limit(config: &RunConfig, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let seeds = Seeds::from_master(config.analysis.seed);
    let pep = config.pep().stage("config")?;
    let run = pep.run().stage("config")?;
    let transition = pep.transition().stage("config")?;
    let response = config.response().stage("config")?;
    let (on, off, simulated) = on_off_spectra(config, base_dir, &seeds)?;
    let residual = subtract_spectra(&on, &off).stage("subtract")?;
    let mut options = PepLimitOptions {
        window_fwhm: pep.window_fwhm,
        ..PepLimitOptions::default()
    };
    options.fit.simplex.seed = seeds.fit;
    let cl = config.analysis.cl;
    let limit = pep_upper_limit(&residual, &transition, &response, &run, cl, &options).stage("limit")?;

    let r = &mut out.report;
    r.kind = Some("pep".into());
    record_spectrum(r, "current_on", &on);
    record_spectrum(r, "current_off", &off);
    r.add_limit("pep.line_counts", &limit.counts);
    r.add_limit("pep.beta2_over_2", &limit.beta2_over_2);
    r.set("pep.yield_per_unit_probability", limit.yield_per_unit_probability, "counts")
        .set("pep.new_electrons", run.new_electron_count(), "electrons")
        .set("pep.forbidden_energy", transition.forbidden_energy(), "keV")
        .set("pep.window_low", limit.window.0, "keV")
        .set("pep.window_high", limit.window.1, "keV")
        .set("pep.injected_beta2_over_2", if simulated { pep.inject_beta2_over_2 } else { 0.0 }, DIMENSIONLESS);
    r.rows.push(format!(
        "beta^2/2 < {:e} at {cl} CL",
        limit.beta2_over_2.upper_bound
    ));
    r.assumptions.push(PRIOR_ASSUMPTION.into());
    r.assumptions.push(format!(
        "capture cascade factor {}, {} interactions per injected electron",
        run.capture_cascade_factor, run.interactions_per_electron
    ));

    let n = config.analysis.pseudo_experiments;
    if n > 0 {
        let sim = on_off_simulation(config).stage("config")?;
        let ens = pep_pseudo_experiments(&sim, &run, 0.0, n, cl, &options, seeds.ensemble).stage("limit")?;
        out.report
            .set("ensemble.requested", n as f64, "pseudo-experiments")
            .set("ensemble.failures", ens.failures.len() as f64, "pseudo-experiments")
            .set("ensemble.coverage", ens.coverage, DIMENSIONLESS)
            .set("ensemble.median.beta2_over_2", ens.median_bound(), DIMENSIONLESS);
    }

    if simulated {
        out.add_spectrum("spectrum_on.txt", &on, config);
        out.add_spectrum("spectrum_off.txt", &off, config);
    }
    out.add_table("residual.tsv", &residual_table(&residual));
    out.add_table("scan_line_counts.tsv", &scan_table(&limit.counts));
    out.add_table("scan_beta2_over_2.tsv", &scan_table(&limit.beta2_over_2));
    Ok(())
}

fn project(config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let budget = config.budget().stage("project")?;
    let linear = total_linear_factor(&budget).stage("project")?;
    let bg = background_reduction(&budget).stage("project")?;
    let overall = overall_improvement(&budget).stage("project")?;
    let r = &mut out.report;
    r.kind = Some("project".into());
    r.set("total_linear_factor", linear, DIMENSIONLESS)
        .set("background_reduction.low", bg.low, DIMENSIONLESS)
        .set("background_reduction.high", bg.high, DIMENSIONLESS)
        .set("overall_improvement.low", overall.low, DIMENSIONLESS)
        .set("overall_improvement.high", overall.high, DIMENSIONLESS);
    r.rows = summary_rows(&budget).stage("project")?;
    r.assumptions
        .push("overall improvement = linear factor * sqrt(background reduction)".into());
    Ok(())
}

fn constants(out: &mut Outputs) {
    let r = &mut out.report;
    for (name, value, unit) in CODATA_2018.table() {
        r.set(format!("constants.{name}"), value, unit);
        r.rows.push(format!("{name} = {value:e} {unit}"));
    }
    r.set("constants.mass_ratio_squared", CODATA_2018.mass_ratio_squared(), DIMENSIONLESS);
    r.rows.push(format!("table {CONSTANTS_TABLE_VERSION}"));
}
