use std::path::{Path, PathBuf};
use std::process::Command;

use xraylim::io::report::Report;
use xraylim::io::spectrum_file::load_spectrum;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_xraylim")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_report(dir: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn project_reproduces_budget_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("budget_upgrade.toml");
    let o = run(&["project", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("total linear factor 8\n"));
    assert!(stdout.contains("background reduction 200 - 400\n"));
    let r = read_report(tmp.path());
    assert_eq!(r.get("total_linear_factor"), Some(8.0));
    assert_eq!(r.get("background_reduction.low"), Some(200.0));
    assert_eq!(r.get("background_reduction.high"), Some(400.0));
}

#[test]
fn csl_limit_reports_both_mass_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("csl_ge_80kgday.toml");
    let o = run(&["limit", "--kind", "csl", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(tmp.path());
    let ratio = r.get("csl.lambda_mass_proportional.upper_bound").unwrap() / r.get("csl.lambda.upper_bound").unwrap();
    let expected = (938_272.088_16f64 / 510.998_95).powi(2);
    assert!((ratio / expected - 1.0).abs() < 1e-6);
    assert_eq!(r.get("spectrum.exposure"), Some(80.0));
    assert_eq!(r.get("spectrum.energy_low"), Some(4.5));
    assert_eq!(r.get("spectrum.energy_high"), Some(48.5));
    assert!(r.quantities.values().all(|q| !q.unit.is_empty()));
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = configs().join("pep_vip.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let o = run(&["limit", "--config", cfg.to_str().unwrap(), "--seed", "31"], d);
        assert!(o.status.success());
    }
    assert_eq!(dir_snapshot(a.path()), dir_snapshot(b.path()));
    let c = tempfile::tempdir().unwrap();
    run(&["limit", "--config", cfg.to_str().unwrap(), "--seed", "32"], c.path());
    assert_ne!(
        std::fs::read(a.path().join("report.json")).unwrap(),
        std::fs::read(c.path().join("report.json")).unwrap()
    );
}

#[test]
fn rerun_from_resolved_config_reproduces_outputs() {
    let cfg = configs().join("csl_ge_80kgday.toml");
    let a = tempfile::tempdir().unwrap();
    run(&["limit", "--config", cfg.to_str().unwrap(), "--seed", "5", "--cl", "0.9"], a.path());
    let resolved = a.path().join("config.resolved.toml");
    let b = tempfile::tempdir().unwrap();
    let o = run(&["limit", "--config", resolved.to_str().unwrap()], b.path());
    assert!(o.status.success());
    assert_eq!(dir_snapshot(a.path()), dir_snapshot(b.path()));
    assert_eq!(read_report(b.path()).seed, 5);
}

#[test]
fn zero_amplitude_simulation_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("zero.toml");
    std::fs::write(
        &cfg_path,
        "[analysis]\nkind = \"simulate\"\n[grid]\nlow_kev = 1.0\nhigh_kev = 11.0\nbins = 20\n\
         [response]\nfwhm_ref_kev = 0.17\n[[components]]\nkind = \"gaussian_line\"\ncentroid = 5.0\namplitude = 0.0\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", cfg_path.to_str().unwrap()], &out);
    assert!(o.status.success());
    let s = load_spectrum(out.join("spectrum.txt")).unwrap();
    assert_eq!(s.grid.n_bins(), 20);
    assert!(s.counts().iter().all(|&c| c == 0));
}

#[test]
fn fit_on_file_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_lines.toml");
    let sim_dir = tmp.path().join("sim");
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap()], &sim_dir).status.success());
    let text = std::fs::read_to_string(&cfg).unwrap()
        + &format!("\n[paths]\nspectrum = {:?}\n", sim_dir.join("spectrum.txt").to_str().unwrap());
    let cfg2 = tmp.path().join("fit.toml");
    std::fs::write(&cfg2, text).unwrap();
    let fit_dir = tmp.path().join("fit");
    let o = run(&["fit", "--config", cfg2.to_str().unwrap()], &fit_dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&fit_dir);
    assert!((r.get("fit.components[0].centroid.value").unwrap() - 8.0).abs() < 0.01);
    assert!((r.get("fit.components[1].centroid.value").unwrap() - 7.7).abs() < 0.01);
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = run(&["limit", "--config", missing.to_str().unwrap()], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "# xraylim-spectrum v1\n# energy_unit: keV\n1 2 5\n1.5 3 4\n").unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(
        &cfg,
        format!(
            "[analysis]\nkind = \"csl\"\n[response]\nfwhm_ref_kev = 0.17\n[paths]\nspectrum = {:?}\n",
            bad.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["limit", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[load]") && err.contains("row 2"), "{err}");

    let o = run(&["limit", "--config", cfg.to_str().unwrap(), "--cl", "1.2"], &tmp.path().join("o"));
    assert!(!o.status.success());
}

#[test]
fn constants_command_lists_units() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["constants"], tmp.path());
    assert!(o.status.success());
    let r = read_report(tmp.path());
    assert_eq!(r.get("constants.electron_mass"), Some(510.99895));
    assert_eq!(r.quantities["constants.electron_mass"].unit, "keV");
}
