//! Forward model: emission components folded with the detector response.
//!
//! Lines are treated as zero natural width and broadened by a Gaussian of the
//! detector resolution. All bin integrals are closed-form (error functions for
//! lines, logarithms for the 1/E continuum, power sums for polynomials).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::constants::fwhm_to_sigma;
use crate::error::{Error, Result};
use crate::spectrum::{BinnedSpectrum, EnergyGrid, SpectrumTag};

/// Energy at which `DetectorResponse::fwhm_ref` is quoted, keV.
pub const RESOLUTION_REFERENCE_ENERGY: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionModel {
    #[default]
    Constant,
    /// FWHM grows as sqrt(E / 8 keV).
    SqrtScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Efficiency {
    Scalar(f64),
    PerBin(Vec<f64>),
}

impl Default for Efficiency {
    fn default() -> Self {
        Efficiency::Scalar(1.0)
    }
}

impl Efficiency {
    fn validate(&self) -> Result<()> {
        let ok = |e: &f64| (0.0..=1.0).contains(e);
        let valid = match self {
            Efficiency::Scalar(e) => ok(e),
            Efficiency::PerBin(v) => v.iter().all(ok),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::domain("detector efficiency must lie in [0, 1]"))
        }
    }

    fn per_bin(&self, n_bins: usize) -> Result<Vec<f64>> {
        match self {
            Efficiency::Scalar(e) => Ok(vec![*e; n_bins]),
            Efficiency::PerBin(v) if v.len() == n_bins => Ok(v.clone()),
            Efficiency::PerBin(v) => Err(Error::shape(format!(
                "per-bin efficiency has {} entries, grid has {n_bins} bins",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResponse {
    /// FWHM at 8 keV, keV.
    pub fwhm_ref: f64,
    #[serde(default)]
    pub resolution_model: ResolutionModel,
    #[serde(default)]
    pub efficiency: Efficiency,
}

impl DetectorResponse {
    pub fn new(fwhm_ref: f64) -> Result<Self> {
        let r = Self {
            fwhm_ref,
            resolution_model: ResolutionModel::Constant,
            efficiency: Efficiency::default(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_resolution_model(mut self, model: ResolutionModel) -> Self {
        self.resolution_model = model;
        self
    }

    pub fn with_efficiency(mut self, efficiency: Efficiency) -> Result<Self> {
        self.efficiency = efficiency;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_ref > 0.0) || !self.fwhm_ref.is_finite() {
            return Err(Error::domain(format!(
                "reference FWHM must be positive, got {}",
                self.fwhm_ref
            )));
        }
        self.efficiency.validate()
    }

    pub fn fwhm_at(&self, energy: f64) -> Result<f64> {
        match self.resolution_model {
            ResolutionModel::Constant => Ok(self.fwhm_ref),
            ResolutionModel::SqrtScaling => {
                if !(energy > 0.0) {
                    return Err(Error::domain(format!(
                        "sqrt resolution scaling needs E > 0, got {energy}"
                    )));
                }
                Ok(self.fwhm_ref * (energy / RESOLUTION_REFERENCE_ENERGY).sqrt())
            }
        }
    }

    pub fn sigma_at(&self, energy: f64) -> Result<f64> {
        fwhm_to_sigma(self.fwhm_at(energy)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralComponent {
    /// Detector-broadened line; `amplitude` is the total emitted count.
    GaussianLine { centroid: f64, amplitude: f64 },
    /// Continuum with density `alpha / E` counts per keV.
    OneOverE { alpha: f64 },
    /// Density `Σ c_k E^k` counts per keV.
    Polynomial { coefficients: Vec<f64> },
}

impl SpectralComponent {
    pub fn line(centroid: f64, amplitude: f64) -> Self {
        SpectralComponent::GaussianLine { centroid, amplitude }
    }

    pub fn continuum(alpha: f64) -> Self {
        SpectralComponent::OneOverE { alpha }
    }

    pub fn flat(density: f64) -> Self {
        SpectralComponent::Polynomial {
            coefficients: vec![density],
        }
    }

    fn bin_integral(&self, response: &DetectorResponse, low: f64, high: f64) -> Result<f64> {
        match self {
            SpectralComponent::GaussianLine { centroid, amplitude } => {
                let sigma = response.sigma_at(*centroid)?;
                Ok(amplitude * normal_mass(low, high, *centroid, sigma))
            }
            SpectralComponent::OneOverE { alpha } => {
                if !(low > 0.0) {
                    return Err(Error::domain(format!(
                        "1/E continuum undefined on bin [{low}, {high}] keV (needs E > 0)"
                    )));
                }
                // ln(high/low) via ln_1p keeps precision on narrow bins.
                Ok(alpha * ((high - low) / low).ln_1p())
            }
            SpectralComponent::Polynomial { coefficients } => {
                let mut total = 0.0;
                let (mut hp, mut lp) = (high, low);
                for (k, c) in coefficients.iter().enumerate() {
                    total += c * (hp - lp) / (k as f64 + 1.0);
                    hp *= high;
                    lp *= low;
                }
                Ok(total)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpectralComponent::GaussianLine { centroid, .. } if !(*centroid > 0.0) => Err(
                Error::domain(format!("line centroid must be positive, got {centroid}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Mass of N(center, sigma²) inside [low, high], computed without cancellation in the tails.
pub(crate) fn normal_mass(low: f64, high: f64, center: f64, sigma: f64) -> f64 {
    let scale = sigma * std::f64::consts::SQRT_2;
    let zl = (low - center) / scale;
    let zh = (high - center) / scale;
    if zl >= 0.0 {
        0.5 * (erfc(zl) - erfc(zh))
    } else if zh <= 0.0 {
        0.5 * (erfc(-zh) - erfc(-zl))
    } else {
        0.5 * (erf(zh) - erf(zl))
    }
}

/// Which scalar of which component a fit parameter refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum ParamRef {
    /// Line amplitude or continuum `alpha` of component `component`.
    Amplitude { component: usize },
    Centroid { component: usize },
    Coefficient { component: usize, power: usize },
}

impl ParamRef {
    pub fn component(&self) -> usize {
        match *self {
            ParamRef::Amplitude { component }
            | ParamRef::Centroid { component }
            | ParamRef::Coefficient { component, .. } => component,
        }
    }

    /// The same field on component `component`.
    pub fn from_component(self, component: usize) -> Self {
        match self {
            ParamRef::Amplitude { .. } => ParamRef::Amplitude { component },
            ParamRef::Centroid { .. } => ParamRef::Centroid { component },
            ParamRef::Coefficient { power, .. } => ParamRef::Coefficient { component, power },
        }
    }

    /// True for parameters the prediction depends on linearly.
    pub fn is_linear(&self) -> bool {
        !matches!(self, ParamRef::Centroid { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    pub components: Vec<SpectralComponent>,
    pub response: DetectorResponse,
}

impl SpectralModel {
    pub fn new(response: DetectorResponse) -> Self {
        Self {
            components: Vec::new(),
            response,
        }
    }

    pub fn with(mut self, component: SpectralComponent) -> Self {
        self.components.push(component);
        self
    }

    pub fn get(&self, param: ParamRef) -> Result<f64> {
        let comp = self.components.get(param.component()).ok_or_else(|| {
            Error::Config(format!("parameter refers to missing component {}", param.component()))
        })?;
        match (param, comp) {
            (ParamRef::Amplitude { .. }, SpectralComponent::GaussianLine { amplitude, .. }) => {
                Ok(*amplitude)
            }
            (ParamRef::Amplitude { .. }, SpectralComponent::OneOverE { alpha }) => Ok(*alpha),
            (ParamRef::Centroid { .. }, SpectralComponent::GaussianLine { centroid, .. }) => {
                Ok(*centroid)
            }
            (ParamRef::Coefficient { power, .. }, SpectralComponent::Polynomial { coefficients }) => {
                coefficients.get(power).copied().ok_or_else(|| {
                    Error::Config(format!("polynomial has no coefficient of power {power}"))
                })
            }
            _ => Err(Error::Config(format!("parameter {param:?} does not apply to {comp:?}"))),
        }
    }

    pub fn set(&mut self, param: ParamRef, value: f64) -> Result<()> {
        let idx = param.component();
        let comp = self.components.get_mut(idx).ok_or_else(|| {
            Error::Config(format!("parameter refers to missing component {idx}"))
        })?;
        match (param, comp) {
            (ParamRef::Amplitude { .. }, SpectralComponent::GaussianLine { amplitude, .. }) => {
                *amplitude = value
            }
            (ParamRef::Amplitude { .. }, SpectralComponent::OneOverE { alpha }) => *alpha = value,
            (ParamRef::Centroid { .. }, SpectralComponent::GaussianLine { centroid, .. }) => {
                *centroid = value
            }
            (ParamRef::Coefficient { power, .. }, SpectralComponent::Polynomial { coefficients }) => {
                if power >= coefficients.len() {
                    coefficients.resize(power + 1, 0.0);
                }
                coefficients[power] = value;
            }
            (param, comp) => {
                return Err(Error::Config(format!("parameter {param:?} does not apply to {comp:?}")))
            }
        }
        Ok(())
    }

    /// Copy with every amplitude-like parameter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            match c {
                SpectralComponent::GaussianLine { amplitude, .. } => *amplitude *= factor,
                SpectralComponent::OneOverE { alpha } => *alpha *= factor,
                SpectralComponent::Polynomial { coefficients } => {
                    coefficients.iter_mut().for_each(|k| *k *= factor)
                }
            }
        }
        out
    }
}

/// Gaussian line density in counts/keV at `energy`.
pub fn gaussian_line_density(energy: f64, centroid: f64, fwhm: f64, amplitude: f64) -> Result<f64> {
    let sigma = fwhm_to_sigma(fwhm)?;
    if !(amplitude >= 0.0) {
        return Err(Error::domain(format!("line amplitude must be >= 0, got {amplitude}")));
    }
    let z = (energy - centroid) / sigma;
    Ok(amplitude * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Expected counts per bin: each component integrated over the bin, times
/// the bin efficiency.
pub fn predict_counts(model: &SpectralModel, grid: &EnergyGrid) -> Result<Vec<f64>> {
    model.response.validate()?;
    let eff = model.response.efficiency.per_bin(grid.n_bins())?;
    let mut out = vec![0.0; grid.n_bins()];
    for comp in &model.components {
        comp.validate()?;
        for (slot, (low, high)) in out.iter_mut().zip(grid.bins()) {
            *slot += comp.bin_integral(&model.response, low, high)?;
        }
    }
    for (o, e) in out.iter_mut().zip(eff) {
        *o *= e;
    }
    Ok(out)
}

/// Independent Poisson draw per bin around `predict_counts`.
pub fn simulate_spectrum(model: &SpectralModel, grid: &EnergyGrid, seed: u64) -> Result<BinnedSpectrum> {
    let expected = predict_counts(model, grid)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let counts = sample_poisson(&expected, &mut rng)?;
    BinnedSpectrum::new(grid.clone(), counts, SpectrumTag::Simulated)
}

pub(crate) fn sample_poisson<R: rand::Rng>(expected: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    expected
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            if !mu.is_finite() || mu < 0.0 {
                return Err(Error::Model(format!("bin {i} has invalid expectation {mu}")));
            }
            if mu == 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(mu).map_err(|e| Error::Model(format!("bin {i}: {e}")))?;
            Ok(d.sample(rng) as u64)
        })
        .collect()
}

/// Separation of two centroids in units of the Gaussian σ for a given FWHM.
pub fn separation_in_sigma(a: f64, b: f64, fwhm: f64) -> Result<f64> {
    Ok((a - b).abs() / fwhm_to_sigma(fwhm)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::FWHM_PER_SIGMA;

    fn response() -> DetectorResponse {
        DetectorResponse::new(0.17).unwrap()
    }

    // Composite Simpson, used only as an independent check on the closed forms.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn line_density_peak_and_zero() {
        let d = gaussian_line_density(5.0, 5.0, FWHM_PER_SIGMA, 1.0).unwrap();
        assert!((d - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((gaussian_line_density(5.0, 5.0, 2.3548, 1.0).unwrap() - 0.39894).abs() < 1e-4);
        for e in [0.0, 3.0, 5.0, 100.0] {
            assert_eq!(gaussian_line_density(e, 5.0, 0.2, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(
            gaussian_line_density(1.0, 1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn line_density_integrates_to_amplitude() {
        let (c, fwhm) = (7.7, 0.17);
        let s = fwhm / FWHM_PER_SIGMA;
        let total = simpson(
            |e| gaussian_line_density(e, c, fwhm, 100.0).unwrap(),
            c - 6.0 * s,
            c + 6.0 * s,
            4000,
        );
        // ±6σ holds all but 2e-9 of the mass.
        assert!((total - 100.0).abs() < 1e-6, "{total}");
        let left = gaussian_line_density(c - 0.05, c, fwhm, 3.0).unwrap();
        let right = gaussian_line_density(c + 0.05, c, fwhm, 3.0).unwrap();
        assert!((left - right).abs() < 1e-15);
    }

    #[test]
    fn predict_empty_and_continuum() {
        let grid = EnergyGrid::new(vec![1.0, 2.0]).unwrap();
        let empty = SpectralModel::new(response());
        assert_eq!(predict_counts(&empty, &grid).unwrap(), vec![0.0]);
        let m = empty.with(SpectralComponent::continuum(1.0));
        let p = predict_counts(&m, &grid).unwrap();
        assert!((p[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn continuum_needs_positive_energy() {
        let grid = EnergyGrid::new(vec![-1.0, 1.0]).unwrap();
        let m = SpectralModel::new(response()).with(SpectralComponent::continuum(1.0));
        assert!(matches!(predict_counts(&m, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn line_mass_conserved_under_binning() {
        let grid = EnergyGrid::uniform(6.0, 10.0, 400).unwrap();
        let resp = response().with_efficiency(Efficiency::Scalar(0.8)).unwrap();
        let m = SpectralModel::new(resp).with(SpectralComponent::line(7.7, 1234.0));
        let total: f64 = predict_counts(&m, &grid).unwrap().iter().sum();
        assert!(((total - 0.8 * 1234.0) / (0.8 * 1234.0)).abs() < 1e-6);
    }

    #[test]
    fn line_bins_match_quadrature() {
        let grid = EnergyGrid::uniform(7.0, 8.5, 15).unwrap();
        let resp = response().with_resolution_model(ResolutionModel::SqrtScaling);
        let fwhm = resp.fwhm_at(7.7).unwrap();
        let m = SpectralModel::new(resp).with(SpectralComponent::line(7.7, 50.0));
        let p = predict_counts(&m, &grid).unwrap();
        for (i, (a, b)) in grid.bins().enumerate() {
            let q = simpson(|e| gaussian_line_density(e, 7.7, fwhm, 50.0).unwrap(), a, b, 2000);
            assert!((p[i] - q).abs() < 1e-9, "bin {i}: {} vs {q}", p[i]);
        }
    }

    #[test]
    fn polynomial_bins_match_quadrature() {
        let grid = EnergyGrid::uniform(4.5, 48.5, 11).unwrap();
        let coeffs = vec![3.0, -0.02, 1e-4];
        let m = SpectralModel::new(response()).with(SpectralComponent::Polynomial {
            coefficients: coeffs.clone(),
        });
        let p = predict_counts(&m, &grid).unwrap();
        for (i, (a, b)) in grid.bins().enumerate() {
            let q = simpson(|e| coeffs[0] + coeffs[1] * e + coeffs[2] * e * e, a, b, 10);
            assert!((p[i] - q).abs() < 1e-9);
        }
    }

    #[test]
    fn per_bin_efficiency_shape_checked() {
        let grid = EnergyGrid::uniform(1.0, 2.0, 3).unwrap();
        let resp = response()
            .with_efficiency(Efficiency::PerBin(vec![0.5, 0.5]))
            .unwrap();
        let m = SpectralModel::new(resp).with(SpectralComponent::flat(1.0));
        assert!(matches!(predict_counts(&m, &grid), Err(Error::Shape(_))));
        assert!(response().with_efficiency(Efficiency::Scalar(1.5)).is_err());
    }

    #[test]
    fn two_peak_separation() {
        let s = separation_in_sigma(7.7, 8.0, 0.170).unwrap();
        assert!((s - 4.15).abs() / 4.15 < 0.01, "{s}");
    }

    #[test]
    fn simulation_determinism_and_zero_model() {
        let grid = EnergyGrid::uniform(4.5, 48.5, 44).unwrap();
        let zero = SpectralModel::new(response())
            .with(SpectralComponent::line(8.0, 0.0))
            .with(SpectralComponent::continuum(0.0));
        for seed in [0, 1, 99] {
            assert!(simulate_spectrum(&zero, &grid, seed).unwrap().counts().iter().all(|&c| c == 0));
        }
        let m = SpectralModel::new(response()).with(SpectralComponent::flat(20.0));
        let a = simulate_spectrum(&m, &grid, 7).unwrap();
        let b = simulate_spectrum(&m, &grid, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tag, SpectrumTag::Simulated);
        let c = simulate_spectrum(&m, &grid, 8).unwrap();
        assert_ne!(a.counts(), c.counts());
    }

    #[test]
    fn simulation_mean_matches_expectation() {
        let grid = EnergyGrid::new(vec![1.0, 2.0]).unwrap();
        let m = SpectralModel::new(response()).with(SpectralComponent::flat(100.0));
        let n = 10_000;
        let mean = (0..n)
            .map(|s| simulate_spectrum(&m, &grid, s).unwrap().counts()[0] as f64)
            .sum::<f64>()
            / n as f64;
        // 3σ of the standard error sqrt(100/10000) = 0.1.
        assert!((mean - 100.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn negative_expectation_rejected() {
        let grid = EnergyGrid::new(vec![1.0, 2.0]).unwrap();
        let m = SpectralModel::new(response()).with(SpectralComponent::flat(-1.0));
        assert!(matches!(simulate_spectrum(&m, &grid, 0), Err(Error::Model(_))));
    }

    #[test]
    fn param_access() {
        let mut m = SpectralModel::new(response())
            .with(SpectralComponent::line(8.0, 10.0))
            .with(SpectralComponent::flat(2.0));
        m.set(ParamRef::Centroid { component: 0 }, 7.9).unwrap();
        m.set(ParamRef::Coefficient { component: 1, power: 1 }, 0.5).unwrap();
        assert_eq!(m.get(ParamRef::Centroid { component: 0 }).unwrap(), 7.9);
        assert_eq!(m.get(ParamRef::Coefficient { component: 1, power: 1 }).unwrap(), 0.5);
        assert!(m.get(ParamRef::Centroid { component: 1 }).is_err());
        assert!(m.get(ParamRef::Amplitude { component: 5 }).is_err());
    }

    proptest::proptest! {
        #[test]
        fn prediction_is_linear_in_amplitudes(
            amps in proptest::collection::vec(0.0f64..1e4, 3),
            centroid in 5.0f64..45.0,
            factor in 0.0f64..10.0,
        ) {
            let grid = EnergyGrid::uniform(4.5, 48.5, 44).unwrap();
            let m = SpectralModel::new(response())
                .with(SpectralComponent::line(centroid, amps[0]))
                .with(SpectralComponent::continuum(amps[1]))
                .with(SpectralComponent::flat(amps[2]));
            let base = predict_counts(&m, &grid).unwrap();
            let scaled = predict_counts(&m.scaled(factor), &grid).unwrap();
            for (b, s) in base.iter().zip(&scaled) {
                proptest::prop_assert!((s - factor * b).abs() <= 1e-9 * (1.0 + s.abs()));
            }
            // superposition: sum of single-component predictions
            let parts: Vec<Vec<f64>> = m.components.iter().map(|c| {
                predict_counts(&SpectralModel::new(response()).with(c.clone()), &grid).unwrap()
            }).collect();
            for i in 0..grid.n_bins() {
                let sum: f64 = parts.iter().map(|p| p[i]).sum();
                proptest::prop_assert!((sum - base[i]).abs() <= 1e-9 * (1.0 + sum.abs()));
            }
        }

        #[test]
        fn continuum_shape_is_one_over_e(alpha in 1e-3f64..1e6) {
            let grid = EnergyGrid::uniform(4.5, 48.5, 88).unwrap();
            let m = SpectralModel::new(response()).with(SpectralComponent::continuum(alpha));
            let p = predict_counts(&m, &grid).unwrap();
            for (i, (a, b)) in grid.bins().enumerate() {
                proptest::prop_assert!((p[i] - alpha * (b / a).ln()).abs() < 1e-9 * alpha.max(1.0));
            }
        }
    }
}
