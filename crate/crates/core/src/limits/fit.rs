//! Fit problems: a model with one designated non-negative signal parameter
//! and any number of nuisance parameters, compared against an observation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bayes::ScanOptions;
use super::simplex::{self, SimplexOptions};
use super::stats::{self, Observation, Statistic};
use crate::error::{Error, Result};
use crate::model::{predict_counts, ParamRef, SpectralModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: ParamRef,
    pub name: String,
    pub initial: f64,
    /// Initial simplex step; also the unit for the convergence diameter.
    pub step: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl FreeParam {
    pub fn new(param: ParamRef, name: impl Into<String>, initial: f64, step: f64) -> Self {
        Self {
            param,
            name: name.into(),
            initial,
            step,
            lower: None,
            upper: None,
        }
    }

    pub fn bounded(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn clamp(&self, x: f64) -> f64 {
        let x = self.lower.map_or(x, |l| x.max(l));
        self.upper.map_or(x, |u| x.min(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    pub scan: ScanOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub observation: Observation,
    pub model: SpectralModel,
    /// The parameter limits are set on; constrained to be >= 0.
    pub signal: FreeParam,
    pub nuisances: Vec<FreeParam>,
    pub statistic: Statistic,
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Signal first, then nuisances in declaration order.
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// One-σ errors from the curvature at the minimum, when it is positive definite.
    pub uncertainties: Option<Vec<f64>>,
    pub statistic: f64,
    pub signal_at_boundary: bool,
    pub evaluations: usize,
    pub restarts: usize,
}

impl FitResult {
    pub fn signal(&self) -> f64 {
        self.values[0]
    }

    pub fn nuisances(&self) -> &[f64] {
        &self.values[1..]
    }
}

impl FitProblem {
    pub fn new(
        observation: Observation,
        model: SpectralModel,
        mut signal: FreeParam,
        nuisances: Vec<FreeParam>,
        statistic: Statistic,
    ) -> Result<Self> {
        if !signal.param.is_linear() {
            return Err(Error::Config(format!(
                "signal parameter {} must be an amplitude or coefficient",
                signal.name
            )));
        }
        signal.lower = Some(signal.lower.unwrap_or(0.0).max(0.0));
        signal.initial = signal.clamp(signal.initial);
        let all: Vec<&FreeParam> = std::iter::once(&signal).chain(&nuisances).collect();
        for (i, p) in all.iter().enumerate() {
            model.get(p.param)?;
            if all[..i].iter().any(|q| q.param == p.param) {
                return Err(Error::Config(format!("parameter {} declared twice", p.name)));
            }
            if !(p.step.abs() > 0.0) || !p.step.is_finite() {
                return Err(Error::Config(format!("parameter {} needs a non-zero step", p.name)));
            }
        }
        if statistic == Statistic::PoissonNll && matches!(observation, Observation::Gaussian(_)) {
            return Err(Error::Config("Poisson likelihood requires a counts observation".into()));
        }
        let problem = Self {
            observation,
            model,
            signal,
            nuisances,
            statistic,
            options: FitOptions::default(),
        };
        problem.expected(&problem.initial_values())?;
        Ok(problem)
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.options.simplex.seed = seed;
        self
    }

    pub fn with_observation(mut self, observation: Observation) -> Self {
        self.observation = observation;
        self
    }

    pub fn params(&self) -> impl Iterator<Item = &FreeParam> {
        std::iter::once(&self.signal).chain(&self.nuisances)
    }

    pub fn initial_values(&self) -> Vec<f64> {
        self.params().map(|p| p.initial).collect()
    }

    /// Model with the given parameter vector (signal first) applied.
    pub fn model_with(&self, values: &[f64]) -> Result<SpectralModel> {
        let mut m = self.model.clone();
        for (p, &v) in self.params().zip(values) {
            m.set(p.param, v)?;
        }
        Ok(m)
    }

    pub fn expected(&self, values: &[f64]) -> Result<Vec<f64>> {
        predict_counts(&self.model_with(values)?, self.observation.grid())
    }

    /// Statistic at an explicit parameter vector (no bounds applied).
    pub fn statistic_at(&self, values: &[f64]) -> Result<f64> {
        let expected = self.expected(values)?;
        stats::evaluate(self.statistic, &self.observation, &expected)
    }

    fn clamped(&self, values: &[f64]) -> Vec<f64> {
        self.params().zip(values).map(|(p, &v)| p.clamp(v)).collect()
    }

    fn objective(&self, values: &[f64]) -> f64 {
        self.statistic_at(&self.clamped(values)).unwrap_or(f64::INFINITY)
    }

    /// Minimum of the statistic over the nuisances with the signal held at `signal`.
    /// Returns the statistic and the nuisance values.
    pub fn profile(&self, signal: f64, warm_start: &[f64]) -> Result<(f64, Vec<f64>)> {
        if warm_start.len() != self.nuisances.len() {
            return Err(Error::shape("warm start must hold one value per nuisance"));
        }
        let steps: Vec<f64> = self.nuisances.iter().map(|p| p.step).collect();
        let start: Vec<f64> = self.nuisances.iter().zip(warm_start).map(|(p, &v)| p.clamp(v)).collect();
        let mut full = vec![signal; 1 + start.len()];
        let r = simplex::minimize(
            |x| {
                full[1..].copy_from_slice(x);
                self.objective(&full)
            },
            &start,
            &steps,
            &self.options.simplex,
        )?;
        let nuis: Vec<f64> = self.nuisances.iter().zip(&r.x).map(|(p, &v)| p.clamp(v)).collect();
        Ok((r.f, nuis))
    }

    fn curvature(&self, at: &[f64], h: &[f64]) -> Option<DMatrix<f64>> {
        let n = at.len();
        let f = |x: &[f64]| self.statistic_at(x).ok().filter(|v| v.is_finite());
        let f0 = f(at)?;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut x = at.to_vec();
        for i in 0..n {
            x[i] = at[i] + h[i];
            let fp = f(&x)?;
            x[i] = at[i] - h[i];
            let fm = f(&x)?;
            x[i] = at[i];
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
            for j in 0..i {
                let corner = |si: f64, sj: f64| {
                    let mut y = at.to_vec();
                    y[i] += si * h[i];
                    y[j] += sj * h[j];
                    f(&y)
                };
                let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                    / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Some(hess)
    }

    /// Parameter covariance from the numerical curvature of the statistic.
    pub fn covariance(&self, at: &[f64]) -> Option<DMatrix<f64>> {
        let scale = self.statistic.covariance_scale();
        // First pass sets each probe step to about a tenth of that parameter's σ.
        let h0: Vec<f64> = self
            .params()
            .zip(at)
            .map(|(p, &v)| (1e-3 * p.step.abs()).max(1e-6 * v.abs()))
            .collect();
        let rough = self.curvature(at, &h0)?;
        let h: Vec<f64> = (0..at.len())
            .map(|i| {
                let c = rough[(i, i)];
                if c > 0.0 {
                    0.1 * (scale / c).sqrt()
                } else {
                    h0[i]
                }
            })
            .collect();
        let hess = self.curvature(at, &h)?;
        let inv = hess.try_inverse()?;
        let cov = inv * scale;
        (0..at.len()).all(|i| cov[(i, i)] > 0.0).then_some(cov)
    }
}

/// Minimizes the statistic over signal and nuisances.
pub fn fit_minimize(problem: &FitProblem) -> Result<FitResult> {
    let steps: Vec<f64> = problem.params().map(|p| p.step).collect();
    let r = simplex::minimize(
        |x| problem.objective(x),
        &problem.initial_values(),
        &steps,
        &problem.options.simplex,
    )?;
    let values = problem.clamped(&r.x);
    let statistic = problem.statistic_at(&values)?;
    let signal_at_boundary = problem.signal.lower == Some(values[0]);
    let uncertainties = problem
        .covariance(&values)
        .map(|c| (0..values.len()).map(|i| c[(i, i)].sqrt()).collect());
    Ok(FitResult {
        names: problem.params().map(|p| p.name.clone()).collect(),
        values,
        uncertainties,
        statistic,
        signal_at_boundary,
        evaluations: r.evaluations,
        restarts: r.restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectorResponse, SpectralComponent};
    use crate::spectrum::{BinnedSpectrum, EnergyGrid, SpectrumTag};

    fn continuum_problem(counts: Vec<u64>, grid: EnergyGrid) -> FitProblem {
        let model = SpectralModel::new(DetectorResponse::new(0.17).unwrap())
            .with(SpectralComponent::continuum(0.0))
            .with(SpectralComponent::flat(0.0));
        let spec = BinnedSpectrum::new(grid, counts, SpectrumTag::Measured).unwrap();
        FitProblem::new(
            Observation::Counts(spec),
            model,
            FreeParam::new(ParamRef::Amplitude { component: 0 }, "alpha", 10.0, 5.0),
            vec![FreeParam::new(ParamRef::Coefficient { component: 1, power: 0 }, "flat", 50.0, 5.0)],
            Statistic::Chi2,
        )
        .unwrap()
    }

    #[test]
    fn signal_free_fit_sits_on_boundary() {
        // Flat counts with a falling-continuum signal: the best signal is at 0.
        let grid = EnergyGrid::uniform(4.5, 48.5, 44).unwrap();
        let p = continuum_problem(vec![100; 44], grid);
        let r = fit_minimize(&p).unwrap();
        assert_eq!(r.signal(), 0.0);
        assert!(r.signal_at_boundary);
        assert!((r.nuisances()[0] - 100.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_declarations() {
        let grid = EnergyGrid::uniform(4.5, 48.5, 4).unwrap();
        let p = continuum_problem(vec![1; 4], grid);
        let dup = FitProblem::new(
            p.observation.clone(),
            p.model.clone(),
            p.signal.clone(),
            vec![p.signal.clone()],
            Statistic::Chi2,
        );
        assert!(dup.is_err());
        let centroid_signal = FitProblem::new(
            p.observation.clone(),
            p.model.clone().with(SpectralComponent::line(8.0, 1.0)),
            FreeParam::new(ParamRef::Centroid { component: 2 }, "c", 8.0, 0.1),
            vec![],
            Statistic::Chi2,
        );
        assert!(centroid_signal.is_err());
    }

    #[test]
    fn profile_matches_global_minimum_at_best_signal() {
        let grid = EnergyGrid::uniform(4.5, 48.5, 44).unwrap();
        let truth = SpectralModel::new(DetectorResponse::new(0.17).unwrap())
            .with(SpectralComponent::continuum(300.0))
            .with(SpectralComponent::flat(20.0));
        let counts: Vec<u64> = predict_counts(&truth, &grid).unwrap().iter().map(|x| x.round() as u64).collect();
        let p = continuum_problem(counts, grid);
        let r = fit_minimize(&p).unwrap();
        let (prof, nuis) = p.profile(r.signal(), r.nuisances()).unwrap();
        assert!((prof - r.statistic).abs() < 1e-6);
        assert!((nuis[0] - r.nuisances()[0]).abs() < 1e-4);
    }
}
