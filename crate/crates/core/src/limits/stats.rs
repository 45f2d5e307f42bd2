//! Binned test statistics.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::model::{predict_counts, SpectralModel};
use crate::spectrum::{BinnedSpectrum, EnergyGrid, Residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Neyman χ² with variance max(n, 1) for counts.
    #[default]
    Chi2,
    PoissonNll,
}

impl Statistic {
    /// Converts a statistic difference to a log-likelihood difference:
    /// `ln L − ln L_max = −Δχ²/2` or `−ΔNLL`.
    pub fn delta_log_likelihood(self, delta: f64) -> f64 {
        match self {
            Statistic::Chi2 => -0.5 * delta,
            Statistic::PoissonNll => -delta,
        }
    }

    /// Multiplier turning the inverse Hessian of the statistic into a covariance.
    pub(crate) fn covariance_scale(self) -> f64 {
        match self {
            Statistic::Chi2 => 2.0,
            Statistic::PoissonNll => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Chi2 => "chi2",
            Statistic::PoissonNll => "poisson_nll",
        }
    }
}

/// Data a model is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Counts(BinnedSpectrum),
    /// Values with Gaussian uncertainties, e.g. an on/off residual.
    Gaussian(Residual),
}

impl Observation {
    pub fn grid(&self) -> &EnergyGrid {
        match self {
            Observation::Counts(s) => &s.grid,
            Observation::Gaussian(r) => &r.grid,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.grid().n_bins()
    }
}

fn check_len(obs_len: usize, expected: &[f64]) -> Result<()> {
    if obs_len != expected.len() {
        return Err(Error::shape(format!(
            "observation has {obs_len} bins, model prediction has {}",
            expected.len()
        )));
    }
    Ok(())
}

/// `Σ (n_i − μ_i)² / σ_i²`.
pub fn chi2_statistic(obs: &Observation, expected: &[f64]) -> Result<f64> {
    check_len(obs.n_bins(), expected)?;
    let chi2 = match obs {
        Observation::Counts(s) => s
            .counts()
            .iter()
            .zip(expected)
            .map(|(&n, &mu)| {
                let n = n as f64;
                let d = n - mu;
                d * d / n.max(1.0)
            })
            .sum(),
        Observation::Gaussian(r) => r
            .values
            .iter()
            .zip(&r.uncertainties)
            .zip(expected)
            .map(|((&v, &s), &mu)| {
                let var = if s > 0.0 { s * s } else { 1.0 };
                let d = v - mu;
                d * d / var
            })
            .sum(),
    };
    Ok(chi2)
}

/// `−Σ (n_i ln μ_i − μ_i − ln n_i!)`.
pub fn poisson_nll(counts: &[u64], expected: &[f64]) -> Result<f64> {
    check_len(counts.len(), expected)?;
    let mut nll = 0.0;
    for (i, (&n, &mu)) in counts.iter().zip(expected).enumerate() {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Model(format!("bin {i} has invalid expectation {mu}")));
        }
        if n == 0 {
            nll += mu;
        } else if mu == 0.0 {
            return Err(Error::InfiniteNll { bin: i, observed: n });
        } else {
            nll -= n as f64 * mu.ln() - mu - ln_factorial(n);
        }
    }
    Ok(nll)
}

pub fn evaluate(statistic: Statistic, obs: &Observation, expected: &[f64]) -> Result<f64> {
    match (statistic, obs) {
        (Statistic::Chi2, _) => chi2_statistic(obs, expected),
        (Statistic::PoissonNll, Observation::Counts(s)) => poisson_nll(s.counts(), expected),
        (Statistic::PoissonNll, Observation::Gaussian(_)) => Err(Error::Config(
            "the Poisson likelihood needs integer counts, not a Gaussian residual".into(),
        )),
    }
}

fn check_grid(obs: &Observation, model_grid: &EnergyGrid) -> Result<()> {
    if !obs.grid().same_as(model_grid) {
        return Err(Error::shape("observation and model grids differ"));
    }
    Ok(())
}

/// χ² of `model` predicted on the observation's own grid.
pub fn binned_chi2(obs: &Observation, model: &SpectralModel) -> Result<f64> {
    let expected = predict_counts(model, obs.grid())?;
    chi2_statistic(obs, &expected)
}

/// χ² against a model prediction made on `grid`, which must match the observation.
pub fn binned_chi2_on(obs: &Observation, model: &SpectralModel, grid: &EnergyGrid) -> Result<f64> {
    check_grid(obs, grid)?;
    binned_chi2(obs, model)
}

pub fn binned_poisson_nll(spectrum: &BinnedSpectrum, model: &SpectralModel) -> Result<f64> {
    let expected = predict_counts(model, &spectrum.grid)?;
    poisson_nll(spectrum.counts(), &expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumTag;

    fn counts(v: Vec<u64>) -> Observation {
        let grid = EnergyGrid::uniform(1.0, 1.0 + v.len() as f64, v.len()).unwrap();
        Observation::Counts(BinnedSpectrum::new(grid, v, SpectrumTag::Measured).unwrap())
    }

    #[test]
    fn chi2_exact_match_is_zero() {
        let obs = counts(vec![5, 9, 0]);
        assert_eq!(chi2_statistic(&obs, &[5.0, 9.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn chi2_three_sigma_bin() {
        let obs = counts(vec![100, 100]);
        // sigma = 10, off by 30
        assert!((chi2_statistic(&obs, &[70.0, 100.0]).unwrap() - 9.0).abs() < 1e-12);
        let r = Residual {
            grid: EnergyGrid::uniform(0.0, 1.0, 1).unwrap(),
            values: vec![3.0],
            uncertainties: vec![1.0],
            scale: 1.0,
        };
        assert_eq!(chi2_statistic(&Observation::Gaussian(r), &[0.0]).unwrap(), 9.0);
    }

    #[test]
    fn chi2_empty_bin_variance_floor() {
        let obs = counts(vec![0]);
        assert_eq!(chi2_statistic(&obs, &[2.0]).unwrap(), 4.0);
    }

    #[test]
    fn shape_mismatch() {
        let obs = counts(vec![1, 2]);
        assert!(matches!(chi2_statistic(&obs, &[1.0]), Err(Error::Shape(_))));
        assert!(matches!(poisson_nll(&[1, 2], &[1.0]), Err(Error::Shape(_))));
        let other = EnergyGrid::uniform(0.0, 5.0, 2).unwrap();
        let model = SpectralModel::new(crate::model::DetectorResponse::new(0.1).unwrap());
        assert!(matches!(binned_chi2_on(&obs, &model, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn nll_single_empty_bin_is_mu() {
        for mu in [0.0, 0.5, 3.0] {
            assert!((poisson_nll(&[0], &[mu]).unwrap() - mu).abs() < 1e-15);
        }
    }

    #[test]
    fn nll_infinite_when_mu_zero() {
        assert!(matches!(poisson_nll(&[3], &[0.0]), Err(Error::InfiniteNll { bin: 0, observed: 3 })));
    }

    #[test]
    fn nll_minimum_at_observed_counts() {
        let n = [3u64, 17, 250];
        let mu: Vec<f64> = n.iter().map(|&x| x as f64).collect();
        let best = poisson_nll(&n, &mu).unwrap();
        for s in [0.9, 0.99, 1.01, 1.1] {
            let m: Vec<f64> = mu.iter().map(|x| x * s).collect();
            assert!(poisson_nll(&n, &m).unwrap() > best);
        }
    }

    #[test]
    fn nll_matches_direct_pmf() {
        let (n, mu) = (4u64, 2.5f64);
        let pmf = mu.powi(4) * (-mu).exp() / 24.0;
        assert!((poisson_nll(&[n], &[mu]).unwrap() + pmf.ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_limit_agreement() {
        // 2·ΔNLL against Δχ² for bins with μ ≥ 1000.
        let n: Vec<u64> = vec![1000, 1500, 2000, 1200];
        let obs = counts(n.clone());
        let truth: Vec<f64> = n.iter().map(|&x| x as f64).collect();
        for shift in [0.98, 0.99, 1.01, 1.02] {
            let m: Vec<f64> = truth.iter().map(|x| x * shift).collect();
            let dchi = chi2_statistic(&obs, &m).unwrap() - chi2_statistic(&obs, &truth).unwrap();
            let dnll = poisson_nll(&n, &m).unwrap() - poisson_nll(&n, &truth).unwrap();
            assert!(((2.0 * dnll - dchi) / dchi).abs() < 0.02, "{shift}: {dnll} {dchi}");
        }
    }

    #[test]
    fn nll_rejects_residual() {
        let r = Residual {
            grid: EnergyGrid::uniform(0.0, 1.0, 1).unwrap(),
            values: vec![0.0],
            uncertainties: vec![1.0],
            scale: 1.0,
        };
        assert!(evaluate(Statistic::PoissonNll, &Observation::Gaussian(r), &[0.0]).is_err());
    }
}
