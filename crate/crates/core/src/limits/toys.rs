//! Pseudo-experiment ensembles: simulate → fit → limit, repeated with
//! per-cycle seeds derived from one master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bayes::{bayesian_upper_limit, LimitResult};
use super::fit::FitProblem;
use super::stats::Observation;
use crate::error::{Error, Result};
use crate::model::{simulate_spectrum, SpectralModel};
use crate::util::content_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub seed: u64,
    /// Hash of everything but the seed.
    pub config_hash: String,
    pub requested: usize,
    pub true_signal: f64,
    pub results: Vec<LimitResult>,
    pub failures: Vec<CycleFailure>,
    /// Fraction of successful cycles whose bound is >= the true signal.
    pub coverage: f64,
}

impl Ensemble {
    pub fn bounds(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.upper_bound).collect()
    }

    pub fn median_bound(&self) -> f64 {
        median(&self.bounds())
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-cycle (simulation seed, minimizer seed) pairs.
pub fn cycle_seeds(seed: u64, n: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.next_u64(), rng.next_u64())).collect()
}

/// Runs `n` independent cycles. `template` supplies the fit model, free
/// parameters and statistic; its observation grid and metadata are reused for
/// the simulated spectra drawn from `truth`.
pub fn run_pseudo_experiments(
    template: &FitProblem,
    truth: &SpectralModel,
    true_signal: f64,
    n: usize,
    cl: f64,
    seed: u64,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::domain("an ensemble needs at least one pseudo-experiment"));
    }
    let base = match &template.observation {
        Observation::Counts(s) => s.clone(),
        Observation::Gaussian(_) => {
            return Err(Error::Config("pseudo-experiments need a counts template".into()))
        }
    };
    let config_hash = content_hash(&(
        &template.model,
        &template.signal,
        &template.nuisances,
        template.statistic,
        &template.options,
        truth,
        true_signal,
        n,
        cl,
    ));

    let outcomes: Vec<Result<LimitResult>> = cycle_seeds(seed, n)
        .into_par_iter()
        .map(|(sim_seed, fit_seed)| {
            let sim = simulate_spectrum(truth, &base.grid, sim_seed)?;
            let spectrum = sim
                .with_exposure(base.exposure)
                .with_acquisition_days(base.acquisition_days);
            let problem = template
                .clone()
                .with_observation(Observation::Counts(spectrum))
                .with_seed(fit_seed);
            bayesian_upper_limit(&problem, cl)
        })
        .collect();

    let mut results = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => results.push(r),
            Err(e) => failures.push(CycleFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    let covered = results.iter().filter(|r| r.upper_bound >= true_signal).count();
    let coverage = if results.is_empty() {
        f64::NAN
    } else {
        covered as f64 / results.len() as f64
    };
    Ok(Ensemble {
        seed,
        config_hash,
        requested: n,
        true_signal,
        results,
        failures,
        coverage,
    })
}
