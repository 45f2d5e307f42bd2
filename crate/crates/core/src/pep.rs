//! Search for the Pauli-forbidden 2p→1s line in copper and conversion of a
//! counts limit into a bound on the violation probability β²/2.
//!
//! Expected forbidden-line counts follow the yield chain
//!
//! ```text
//! N = β²/2 · N_new · n_int · f_capture · acceptance · efficiency,   N_new = I·t/e
//! ```
//!
//! where `n_int` is the number of capture opportunities per injected electron
//! (1 unless configured, e.g. conductor length over scattering length).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::CODATA_2018;
use crate::error::{Error, Result};
use crate::limits::{
    bayesian_upper_limit, cycle_seeds, CycleFailure, Ensemble, FitOptions, FitProblem, FreeParam, LimitResult,
    Observation, Statistic,
};
use crate::model::{predict_counts, sample_poisson, DetectorResponse, Efficiency, ParamRef, SpectralComponent, SpectralModel};
use crate::spectrum::{subtract_spectra, BinnedSpectrum, EnergyGrid, Residual, SpectrumTag};
use crate::util::content_hash;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PepTransition {
    /// Allowed Kα energy, keV.
    pub normal_energy: f64,
    /// Downward shift of the forbidden line, keV.
    pub shift: f64,
}

impl Default for PepTransition {
    fn default() -> Self {
        Self {
            normal_energy: 8.0,
            shift: 0.30,
        }
    }
}

impl PepTransition {
    pub fn new(normal_energy: f64, shift: f64) -> Result<Self> {
        if !(shift > 0.0) || !(normal_energy > shift) {
            return Err(Error::domain(format!(
                "need 0 < shift < normal energy, got shift {shift} keV at {normal_energy} keV"
            )));
        }
        Ok(Self { normal_energy, shift })
    }

    pub fn forbidden_energy(&self) -> f64 {
        self.normal_energy - self.shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PepRunConfig {
    /// A
    pub current: f64,
    /// Current-on live time, s.
    pub duration: f64,
    pub capture_cascade_factor: f64,
    pub geometric_acceptance: f64,
    pub detection_efficiency: f64,
    #[serde(default = "one")]
    pub interactions_per_electron: f64,
}

fn one() -> f64 {
    1.0
}

/// Cascade factor conventionally used for capture followed by the 2p→1s step.
pub const DEFAULT_CAPTURE_CASCADE_FACTOR: f64 = 0.1;

impl PepRunConfig {
    pub fn new(current: f64, duration: f64, geometric_acceptance: f64, detection_efficiency: f64) -> Result<Self> {
        let c = Self {
            current,
            duration,
            capture_cascade_factor: DEFAULT_CAPTURE_CASCADE_FACTOR,
            geometric_acceptance,
            detection_efficiency,
            interactions_per_electron: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    /// 40 A copper cylinder read out by CCDs: ~1% acceptance, 8.8 cm of
    /// conductor over a 3.9e-6 cm electron scattering length.
    pub fn vip_era(duration_s: f64) -> Result<Self> {
        let mut c = Self::new(40.0, duration_s, 0.01, 1.0)?;
        c.interactions_per_electron = 8.8e-2 / 3.9e-8;
        Ok(c)
    }

    /// 100 A copper strips read out by SDDs: 12% acceptance, 3 cm of conductor.
    pub fn vip2_era(duration_s: f64) -> Result<Self> {
        let mut c = Self::new(100.0, duration_s, 0.12, 0.5)?;
        c.interactions_per_electron = 3.0e-2 / 3.9e-8;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("capture_cascade_factor", self.capture_cascade_factor),
            ("geometric_acceptance", self.geometric_acceptance),
            ("detection_efficiency", self.detection_efficiency),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.current >= 0.0) || !(self.duration >= 0.0) || !(self.interactions_per_electron >= 0.0) {
            return Err(Error::domain("current, duration and interactions per electron must be >= 0"));
        }
        Ok(())
    }

    /// Electrons injected by the current: `I·t/e`.
    pub fn new_electron_count(&self) -> f64 {
        self.current * self.duration / CODATA_2018.elementary_charge
    }

    /// Expected forbidden-line counts at β²/2 = 1.
    pub fn yield_per_unit_probability(&self) -> f64 {
        self.new_electron_count()
            * self.interactions_per_electron
            * self.capture_cascade_factor
            * self.geometric_acceptance
            * self.detection_efficiency
    }
}

pub fn pep_expected_counts(config: &PepRunConfig, beta2_over_2: f64) -> Result<f64> {
    config.validate()?;
    if !(0.0..=1.0).contains(&beta2_over_2) {
        return Err(Error::domain(format!("beta^2/2 must lie in [0, 1], got {beta2_over_2}")));
    }
    Ok(beta2_over_2 * config.yield_per_unit_probability())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PepLimitOptions {
    /// Half-width of the fit window in units of the line FWHM.
    pub window_fwhm: f64,
    pub fit: FitOptions,
}

impl Default for PepLimitOptions {
    fn default() -> Self {
        Self {
            window_fwhm: 1.5,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepLimit {
    /// Bound on detected forbidden-line counts.
    pub counts: LimitResult,
    pub beta2_over_2: LimitResult,
    pub yield_per_unit_probability: f64,
    /// Fit window, keV.
    pub window: (f64, f64),
}

/// Fits a Gaussian line at the forbidden energy plus a flat offset to the
/// residual inside the window and converts the counts limit to β²/2.
pub fn pep_upper_limit(
    residual: &Residual,
    transition: &PepTransition,
    response: &DetectorResponse,
    config: &PepRunConfig,
    cl: f64,
    options: &PepLimitOptions,
) -> Result<PepLimit> {
    config.validate()?;
    let per_unit = config.yield_per_unit_probability();
    if !(per_unit > 0.0) {
        return Err(Error::Degenerate("forbidden-line yield chain is zero".into()));
    }
    // Detection efficiency lives in the yield chain, not the line model.
    let response = DetectorResponse {
        efficiency: Efficiency::Scalar(1.0),
        ..response.clone()
    };
    response.validate()?;
    let centroid = transition.forbidden_energy();
    let half = options.window_fwhm * response.fwhm_at(centroid)?;
    let (lo, hi) = (centroid - half, centroid + half);
    let grid = &residual.grid;
    if !(options.window_fwhm > 0.0) || lo < grid.low() || hi > grid.high() {
        return Err(Error::domain(format!(
            "forbidden-line window [{lo:.4}, {hi:.4}] keV is not inside the grid [{}, {}] keV",
            grid.low(),
            grid.high()
        )));
    }
    let bins = grid.bins_overlapping(lo, hi);
    let (first, last) = (bins[0], bins[bins.len() - 1]);
    let window = Residual {
        grid: grid.slice(first, last)?,
        values: residual.values[first..=last].to_vec(),
        uncertainties: residual.uncertainties[first..=last].to_vec(),
        scale: residual.scale,
    };

    let width = window.grid.high() - window.grid.low();
    let noise = window.uncertainties.iter().map(|s| s * s).sum::<f64>().sqrt().max(1.0);
    let offset = window.values.iter().sum::<f64>() / width;
    let model = SpectralModel::new(response)
        .with(SpectralComponent::line(centroid, 0.0))
        .with(SpectralComponent::flat(offset));
    let problem = FitProblem::new(
        Observation::Gaussian(window),
        model,
        FreeParam::new(ParamRef::Amplitude { component: 0 }, "forbidden_line_counts", 0.0, noise),
        vec![FreeParam::new(
            ParamRef::Coefficient { component: 1, power: 0 },
            "residual_offset",
            offset,
            noise / width,
        )],
        Statistic::Chi2,
    )?
    .with_options(options.fit);

    let mut counts = bayesian_upper_limit(&problem, cl)?;
    counts.unit = "counts".into();
    let beta2_over_2 = counts.rescaled(1.0 / per_unit, "beta2_over_2", "dimensionless");
    Ok(PepLimit {
        counts,
        beta2_over_2,
        yield_per_unit_probability: per_unit,
        window: (lo, hi),
    })
}

/// Current-on/current-off acquisition simulator. `background` gives the
/// expected spectrum for the current-on period; the current-off spectrum is
/// the same model scaled by `off_days / on_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnOffSimulation {
    pub background: SpectralModel,
    pub grid: EnergyGrid,
    pub transition: PepTransition,
    pub on_days: f64,
    pub off_days: f64,
}

impl OnOffSimulation {
    pub fn validate(&self) -> Result<()> {
        if !(self.on_days > 0.0) || !(self.off_days > 0.0) {
            return Err(Error::domain("on and off acquisition durations must be > 0"));
        }
        Ok(())
    }

    /// Expected (on, off) bin contents with `injected` detected forbidden-line
    /// counts in the current-on spectrum.
    pub fn expected(&self, injected: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        if !(injected >= 0.0) {
            return Err(Error::domain(format!("injected counts must be >= 0, got {injected}")));
        }
        let bg = predict_counts(&self.background, &self.grid)?;
        // The yield chain already contains the detection efficiency.
        let line_model = SpectralModel::new(DetectorResponse {
            efficiency: Efficiency::Scalar(1.0),
            ..self.background.response.clone()
        })
        .with(SpectralComponent::line(self.transition.forbidden_energy(), injected));
        let line = predict_counts(&line_model, &self.grid)?;
        let ratio = self.off_days / self.on_days;
        let on = bg.iter().zip(&line).map(|(b, l)| b + l).collect();
        let off = bg.iter().map(|b| b * ratio).collect();
        Ok((on, off))
    }

    pub fn simulate(&self, injected: f64, seed: u64) -> Result<(BinnedSpectrum, BinnedSpectrum)> {
        use rand::SeedableRng;
        let (on_mu, off_mu) = self.expected(injected)?;
        let (on_seed, off_seed) = cycle_seeds(seed, 1)[0];
        let draw = |mu: &[f64], seed: u64, tag: SpectrumTag, days: f64| -> Result<BinnedSpectrum> {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let counts = sample_poisson(mu, &mut rng)?;
            Ok(BinnedSpectrum::new(self.grid.clone(), counts, tag)?.with_acquisition_days(days))
        };
        Ok((
            draw(&on_mu, on_seed, SpectrumTag::CurrentOn, self.on_days)?,
            draw(&off_mu, off_seed, SpectrumTag::CurrentOff, self.off_days)?,
        ))
    }
}

/// Repeated simulate → subtract → limit cycles. Coverage is evaluated on the
/// β²/2 bound against the injected `beta2_over_2`.
pub fn pep_pseudo_experiments(
    sim: &OnOffSimulation,
    config: &PepRunConfig,
    beta2_over_2: f64,
    n: usize,
    cl: f64,
    options: &PepLimitOptions,
    seed: u64,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::domain("an ensemble needs at least one pseudo-experiment"));
    }
    let injected = pep_expected_counts(config, beta2_over_2)?;
    sim.expected(injected)?;
    let config_hash = content_hash(&(sim, config, beta2_over_2, n, cl, options));
    let outcomes: Vec<Result<LimitResult>> = cycle_seeds(seed, n)
        .into_par_iter()
        .map(|(sim_seed, fit_seed)| {
            let (on, off) = sim.simulate(injected, sim_seed)?;
            let residual = subtract_spectra(&on, &off)?;
            let mut opts = *options;
            opts.fit.simplex.seed = fit_seed;
            let limit = pep_upper_limit(&residual, &sim.transition, &sim.background.response, config, cl, &opts)?;
            Ok(limit.beta2_over_2)
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
    let covered = results.iter().filter(|r| r.upper_bound >= beta2_over_2).count();
    let coverage = if results.is_empty() {
        f64::NAN
    } else {
        covered as f64 / results.len() as f64
    };
    Ok(Ensemble {
        seed,
        config_hash,
        requested: n,
        true_signal: beta2_over_2,
        results,
        failures,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::EnergyGrid;

    #[test]
    fn transition_geometry() {
        let t = PepTransition::default();
        assert!((t.forbidden_energy() - 7.7).abs() < 1e-12);
        assert!(t.forbidden_energy() < t.normal_energy);
        assert!(PepTransition::new(8.0, 0.0).is_err());
        assert!(PepTransition::new(8.0, -0.1).is_err());
    }

    #[test]
    fn expected_counts_chain() {
        let c = PepRunConfig::new(100.0, 1.0, 1.0, 1.0).unwrap();
        assert!((c.new_electron_count() - 6.2415e20).abs() / 6.2415e20 < 1e-4);
        assert_eq!(pep_expected_counts(&c, 0.0).unwrap(), 0.0);
        let c2 = PepRunConfig::new(200.0, 1.0, 1.0, 1.0).unwrap();
        let a = pep_expected_counts(&c, 1e-20).unwrap();
        let b = pep_expected_counts(&c2, 1e-20).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        let long = PepRunConfig::new(100.0, 3.0, 1.0, 1.0).unwrap();
        assert!((pep_expected_counts(&long, 1e-20).unwrap() - 3.0 * a).abs() <= 1e-12 * a);
    }

    #[test]
    fn out_of_range_probabilities() {
        assert!(PepRunConfig::new(1.0, 1.0, 1.5, 1.0).is_err());
        let c = PepRunConfig::new(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!(pep_expected_counts(&c, 2.0).is_err());
        let mut bad = c;
        bad.capture_cascade_factor = -0.1;
        assert!(pep_expected_counts(&bad, 0.1).is_err());
    }

    fn zero_residual(sigma: f64) -> Residual {
        let grid = EnergyGrid::uniform(7.0, 8.5, 60).unwrap();
        Residual {
            values: vec![0.0; 60],
            uncertainties: vec![sigma; 60],
            grid,
            scale: 1.0,
        }
    }

    #[test]
    fn window_and_yield_errors() {
        let resp = DetectorResponse::new(0.17).unwrap();
        let cfg = PepRunConfig::new(100.0, 1e6, 0.1, 1.0).unwrap();
        let r = zero_residual(1.0);
        let far = PepTransition::new(20.0, 0.3).unwrap();
        let opts = PepLimitOptions::default();
        assert!(matches!(
            pep_upper_limit(&r, &far, &resp, &cfg, 0.9, &opts),
            Err(Error::Domain(_))
        ));
        let dead = PepRunConfig::new(0.0, 1e6, 0.1, 1.0).unwrap();
        assert!(matches!(
            pep_upper_limit(&r, &PepTransition::default(), &resp, &dead, 0.9, &opts),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bound_shrinks_with_exposure() {
        // Background counts grow with t, so residual σ ∝ sqrt(t) while the yield ∝ t.
        let resp = DetectorResponse::new(0.17).unwrap();
        let t = PepTransition::default();
        let opts = PepLimitOptions::default();
        let mut last = f64::INFINITY;
        for k in [1.0f64, 4.0, 16.0, 64.0] {
            let cfg = PepRunConfig::new(100.0, 1e6 * k, 0.1, 1.0).unwrap();
            let r = zero_residual(10.0 * k.sqrt());
            let lim = pep_upper_limit(&r, &t, &resp, &cfg, 0.9, &opts).unwrap();
            assert!(lim.beta2_over_2.upper_bound < last);
            last = lim.beta2_over_2.upper_bound;
        }
    }

    #[test]
    fn bound_scales_inversely_with_yield() {
        let resp = DetectorResponse::new(0.17).unwrap();
        let t = PepTransition::default();
        let r = zero_residual(5.0);
        let opts = PepLimitOptions::default();
        let base = PepRunConfig::new(100.0, 1e6, 0.1, 0.5).unwrap();
        let b0 = pep_upper_limit(&r, &t, &resp, &base, 0.95, &opts).unwrap();
        for (acc, eff, cur) in [(0.2, 0.5, 100.0), (0.1, 1.0, 100.0), (0.1, 0.5, 300.0)] {
            let c = PepRunConfig::new(cur, 1e6, acc, eff).unwrap();
            let b = pep_upper_limit(&r, &t, &resp, &c, 0.95, &opts).unwrap();
            let expect = b0.beta2_over_2.upper_bound * base.yield_per_unit_probability() / c.yield_per_unit_probability();
            assert!((b.beta2_over_2.upper_bound - expect).abs() <= 1e-9 * expect);
        }
    }
}
