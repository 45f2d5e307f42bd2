use xraylim::constants::Exposure;
use xraylim::limits::{
    bayesian_upper_limit, binned_chi2, fit_minimize, run_pseudo_experiments, FitProblem, FreeParam, Observation,
    Statistic,
};
use xraylim::model::{predict_counts, simulate_spectrum, DetectorResponse, ParamRef, SpectralComponent, SpectralModel};
use xraylim::spectrum::{BinnedSpectrum, EnergyGrid, Residual, SpectrumTag};

fn unit_measurement(value: f64, sigma: f64) -> FitProblem {
    let grid = EnergyGrid::uniform(1.0, 2.0, 1).unwrap();
    let obs = Observation::Gaussian(Residual {
        grid,
        values: vec![value],
        uncertainties: vec![sigma],
        scale: 1.0,
    });
    let model = SpectralModel::new(DetectorResponse::new(0.1).unwrap()).with(SpectralComponent::flat(0.0));
    FitProblem::new(
        obs,
        model,
        FreeParam::new(ParamRef::Coefficient { component: 0, power: 0 }, "s", 0.0, 1.0),
        vec![],
        Statistic::Chi2,
    )
    .unwrap()
}

/// Upper quantile of a unit normal truncated to s >= 0 around mean `m`.
fn truncated_normal_bound(m: f64, cl: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    let p0 = n.cdf(-m);
    m + n.inverse_cdf(p0 + cl * (1.0 - p0))
}

#[test]
fn truncated_gaussian_oracle() {
    let r = bayesian_upper_limit(&unit_measurement(0.0, 1.0), 0.9).unwrap();
    assert!((r.upper_bound - 1.6448536269514722).abs() < 1e-3, "{}", r.upper_bound);
    for (m, cl) in [(0.0, 0.95), (1.0, 0.9), (-1.0, 0.95), (2.5, 0.68)] {
        let r = bayesian_upper_limit(&unit_measurement(m, 1.0), cl).unwrap();
        let exact = truncated_normal_bound(m, cl);
        assert!((r.upper_bound - exact).abs() < 1e-3, "m={m} cl={cl}: {} vs {exact}", r.upper_bound);
    }
}

#[test]
fn bound_scales_with_sigma_and_grows_with_cl() {
    let a = bayesian_upper_limit(&unit_measurement(0.0, 1.0), 0.9).unwrap().upper_bound;
    let b = bayesian_upper_limit(&unit_measurement(0.0, 3.0), 0.9).unwrap().upper_bound;
    assert!((b / a - 3.0).abs() < 3e-3);
    let mut last = 0.0;
    for cl in [0.5, 0.68, 0.8, 0.9, 0.95, 0.99] {
        let u = bayesian_upper_limit(&unit_measurement(0.5, 1.0), cl).unwrap().upper_bound;
        assert!(u > last);
        last = u;
    }
}

fn three_component_truth() -> SpectralModel {
    SpectralModel::new(DetectorResponse::new(0.17).unwrap())
        .with(SpectralComponent::line(8.0, 5000.0))
        .with(SpectralComponent::continuum(3000.0))
        .with(SpectralComponent::flat(200.0))
}

fn free_all(start_scale: f64) -> (FreeParam, Vec<FreeParam>) {
    let signal = FreeParam::new(ParamRef::Amplitude { component: 0 }, "line", 5000.0 * start_scale, 200.0);
    let nuisances = vec![
        FreeParam::new(ParamRef::Centroid { component: 0 }, "centroid", 8.0 + 0.02 * (start_scale - 1.0), 0.01),
        FreeParam::new(ParamRef::Amplitude { component: 1 }, "alpha", 3000.0 * start_scale, 100.0),
        FreeParam::new(ParamRef::Coefficient { component: 2, power: 0 }, "flat", 200.0 * start_scale, 10.0),
    ];
    (signal, nuisances)
}

#[test]
fn noiseless_fit_recovers_every_parameter() {
    let truth = three_component_truth();
    let grid = EnergyGrid::uniform(3.0, 20.0, 340).unwrap();
    let mu = predict_counts(&truth, &grid).unwrap();
    let obs = Observation::Gaussian(Residual {
        grid,
        uncertainties: mu.iter().map(|m| m.sqrt()).collect(),
        values: mu,
        scale: 1.0,
    });
    let (signal, nuisances) = free_all(1.1);
    let problem = FitProblem::new(obs, truth.clone(), signal, nuisances, Statistic::Chi2).unwrap();
    let fit = fit_minimize(&problem).unwrap();
    let expect = [5000.0, 8.0, 3000.0, 200.0];
    for (got, want) in fit.values.iter().zip(expect) {
        assert!(((got - want) / want).abs() < 1e-6, "{:?}", fit.values);
    }
    assert!(fit.statistic < 1e-6);
}

#[test]
fn chi2_of_truth_has_expected_mean() {
    // 40 bins at ~1e4 counts: <chi2> = 40 with standard error sqrt(80/2000) = 0.2.
    let truth = SpectralModel::new(DetectorResponse::new(0.17).unwrap()).with(SpectralComponent::flat(1e4));
    let grid = EnergyGrid::uniform(1.0, 41.0, 40).unwrap();
    let n = 2000;
    let mean = (0..n)
        .map(|i| {
            let s = simulate_spectrum(&truth, &grid, 1000 + i).unwrap();
            binned_chi2(&Observation::Counts(s), &truth).unwrap()
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 40.0).abs() < 2.0, "{mean}");
}

#[test]
fn background_only_ensemble_is_reproducible_and_covers() {
    let grid = EnergyGrid::uniform(4.5, 48.5, 44).unwrap();
    let truth = SpectralModel::new(DetectorResponse::new(0.17).unwrap())
        .with(SpectralComponent::flat(20.0))
        .with(SpectralComponent::continuum(0.0));
    let template_spec = BinnedSpectrum::new(grid.clone(), vec![20; 44], SpectrumTag::Simulated)
        .unwrap()
        .with_exposure(Exposure::new(80.0, 1.0).unwrap());
    let problem = FitProblem::new(
        Observation::Counts(template_spec),
        truth.clone(),
        FreeParam::new(ParamRef::Amplitude { component: 1 }, "alpha", 0.0, 10.0),
        vec![FreeParam::new(ParamRef::Coefficient { component: 0, power: 0 }, "flat", 20.0, 1.0)],
        Statistic::PoissonNll,
    )
    .unwrap();
    let a = run_pseudo_experiments(&problem, &truth, 0.0, 40, 0.95, 99).unwrap();
    let b = run_pseudo_experiments(&problem, &truth, 0.0, 40, 0.95, 99).unwrap();
    assert_eq!(a, b);
    assert!(a.failures.is_empty());
    assert_eq!(a.coverage, 1.0);
    assert!(a.median_bound() > 0.0);

    // A real signal is covered at roughly the nominal rate.
    let mut injected = truth.clone();
    injected.set(ParamRef::Amplitude { component: 1 }, 60.0).unwrap();
    let c = run_pseudo_experiments(&problem, &injected, 60.0, 200, 0.9, 5).unwrap();
    assert!(c.coverage >= 0.84 && c.coverage <= 0.97, "{}", c.coverage);
}

#[test]
fn different_seeds_change_the_ensemble() {
    let grid = EnergyGrid::uniform(1.0, 11.0, 10).unwrap();
    let truth = SpectralModel::new(DetectorResponse::new(0.17).unwrap()).with(SpectralComponent::flat(5.0));
    let spec = BinnedSpectrum::new(grid, vec![5; 10], SpectrumTag::Simulated).unwrap();
    let problem = FitProblem::new(
        Observation::Counts(spec),
        truth.clone(),
        FreeParam::new(ParamRef::Coefficient { component: 0, power: 0 }, "flat", 5.0, 1.0),
        vec![],
        Statistic::PoissonNll,
    )
    .unwrap();
    let a = run_pseudo_experiments(&problem, &truth, 5.0, 10, 0.9, 1).unwrap();
    let b = run_pseudo_experiments(&problem, &truth, 5.0, 10, 0.9, 2).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_ne!(a.bounds(), b.bounds());
}
