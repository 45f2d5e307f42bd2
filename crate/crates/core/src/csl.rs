//! Spontaneous photon emission predicted by continuous spontaneous
//! localization, and the linear map between the collapse rate λ and the
//! amplitude of the observable 1/E continuum.
//!
//! Per quasi-free electron the emission density is
//!
//! ```text
//! dΓ/dE = e² λ / (4π² a² m² E)
//! ```
//!
//! in Gaussian natural units. With `e² = α_em` and the correlation length
//! converted through `ħc`, the prefactor `α_em (ħc/a)² / (4π² m_e²)` is
//! dimensionless and the density comes out in s⁻¹ keV⁻¹. Mass-proportional
//! coupling multiplies the rate by `(m_e/m_N)²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{Exposure, CODATA_2018};
use crate::error::{Error, Result};
use crate::limits::{bayesian_upper_limit, FitProblem, FreeParam, LimitResult, Observation, Statistic};
use crate::model::{DetectorResponse, ParamRef, SpectralComponent, SpectralModel};
use crate::spectrum::{BinnedSpectrum, EnergyGrid};

/// Upper end of the non-relativistic validity window, keV.
pub const MAX_VALID_ENERGY: f64 = 100.0;

const MATERIALS_TOML: &str = include_str!("../data/materials.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CslParams {
    /// Collapse rate, 1/s.
    pub lambda: f64,
    /// Correlation length, m.
    pub correlation_length: f64,
    pub mass_proportional: bool,
}

impl CslParams {
    pub fn new(lambda: f64, correlation_length: f64, mass_proportional: bool) -> Result<Self> {
        let p = Self {
            lambda,
            correlation_length,
            mass_proportional,
        };
        p.validate()?;
        Ok(p)
    }

    /// λ with the default correlation length of 1e-7 m.
    pub fn with_lambda(lambda: f64, mass_proportional: bool) -> Result<Self> {
        Self::new(lambda, CODATA_2018.correlation_length_default, mass_proportional)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::domain(format!("collapse rate must be >= 0, got {}", self.lambda)));
        }
        check_correlation_length(self.correlation_length)
    }
}

fn check_correlation_length(a: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("correlation length must be > 0, got {a}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMaterial {
    pub element: String,
    pub quasi_free_electrons_per_atom: f64,
    /// 1/kg
    pub atoms_per_kg: f64,
}

impl TargetMaterial {
    pub fn new(element: impl Into<String>, quasi_free_electrons_per_atom: f64, atoms_per_kg: f64) -> Result<Self> {
        if !(quasi_free_electrons_per_atom >= 0.0) {
            return Err(Error::domain("quasi-free electron count must be >= 0"));
        }
        if !(atoms_per_kg > 0.0) || !atoms_per_kg.is_finite() {
            return Err(Error::domain("atoms per kg must be > 0"));
        }
        Ok(Self {
            element: element.into(),
            quasi_free_electrons_per_atom,
            atoms_per_kg,
        })
    }

    pub fn from_molar_mass(element: impl Into<String>, quasi_free_electrons_per_atom: f64, molar_mass_g_per_mol: f64) -> Result<Self> {
        if !(molar_mass_g_per_mol > 0.0) {
            return Err(Error::domain("molar mass must be > 0"));
        }
        let atoms_per_kg = CODATA_2018.avogadro / (molar_mass_g_per_mol * 1e-3);
        Self::new(element, quasi_free_electrons_per_atom, atoms_per_kg)
    }

    /// Looks up an element in the bundled material table.
    pub fn builtin(element: &str) -> Result<Self> {
        MaterialTable::builtin()?.get(element)
    }

    pub fn electrons_per_kg(&self) -> f64 {
        self.quasi_free_electrons_per_atom * self.atoms_per_kg
    }
}

#[derive(Debug, Clone, Deserialize)]
struct MaterialRow {
    element: String,
    molar_mass_g_per_mol: f64,
    quasi_free_electrons: f64,
}

/// Versioned table of target materials.
#[derive(Debug, Clone, Deserialize)]
pub struct MaterialTable {
    pub version: u32,
    #[serde(rename = "material")]
    rows: Vec<MaterialRow>,
}

impl MaterialTable {
    pub fn builtin() -> Result<Self> {
        Self::parse(MATERIALS_TOML)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: MaterialTable =
            toml::from_str(text).map_err(|e| Error::Config(format!("material table: {e}")))?;
        if table.version != 1 {
            return Err(Error::Config(format!(
                "unsupported material table version {}",
                table.version
            )));
        }
        Ok(table)
    }

    pub fn get(&self, element: &str) -> Result<TargetMaterial> {
        let row = self
            .rows
            .iter()
            .find(|r| r.element.eq_ignore_ascii_case(element))
            .ok_or_else(|| Error::Config(format!("material {element:?} not in table")))?;
        TargetMaterial::from_molar_mass(&row.element, row.quasi_free_electrons, row.molar_mass_g_per_mol)
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.element.as_str())
    }
}

/// `E · dΓ/dE` per unit λ, i.e. the dimensionless prefactor of the 1/E law.
fn rate_prefactor(correlation_length: f64, mass_proportional: bool) -> f64 {
    let c = &CODATA_2018;
    let inv_a = c.hbar_c / correlation_length;
    let base = c.electron_charge_squared * inv_a * inv_a / (4.0 * PI * PI * c.electron_mass * c.electron_mass);
    if mass_proportional {
        base * c.mass_ratio_squared()
    } else {
        base
    }
}

/// Photons per second per keV emitted by one quasi-free electron.
pub fn csl_rate_density(energy: f64, params: &CslParams) -> Result<f64> {
    params.validate()?;
    if !(energy > 0.0) {
        return Err(Error::domain(format!("photon energy must be > 0, got {energy} keV")));
    }
    if energy >= MAX_VALID_ENERGY {
        return Err(Error::Validity(format!(
            "{energy} keV is outside the non-relativistic window E < {MAX_VALID_ENERGY} keV \
             (analysed window ΔE = 4.5÷48.5 keV ≪ m_e)"
        )));
    }
    Ok(params.lambda * rate_prefactor(params.correlation_length, params.mass_proportional) / energy)
}

/// Continuum amplitude α produced by unit collapse rate, in counts.
pub fn alpha_per_unit_lambda(
    target: &TargetMaterial,
    exposure: &Exposure,
    correlation_length: f64,
    mass_proportional: bool,
) -> Result<f64> {
    check_correlation_length(correlation_length)?;
    let electrons = target.electrons_per_kg() * exposure.mass;
    Ok(rate_prefactor(correlation_length, mass_proportional) * electrons * exposure.live_seconds())
}

pub fn alpha_from_lambda(params: &CslParams, target: &TargetMaterial, exposure: &Exposure) -> Result<f64> {
    params.validate()?;
    Ok(params.lambda * alpha_per_unit_lambda(target, exposure, params.correlation_length, params.mass_proportional)?)
}

/// Inverts the linear map α(λ).
pub fn lambda_from_alpha(
    alpha: f64,
    target: &TargetMaterial,
    exposure: &Exposure,
    correlation_length: f64,
    mass_proportional: bool,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::domain(format!("continuum amplitude must be >= 0, got {alpha}")));
    }
    let slope = alpha_per_unit_lambda(target, exposure, correlation_length, mass_proportional)?;
    if !(slope > 0.0) {
        return Err(Error::Degenerate(format!(
            "alpha(lambda) has zero slope (exposure {} kg*day, {} quasi-free electrons/atom)",
            exposure.product(),
            target.quasi_free_electrons_per_atom
        )));
    }
    Ok(alpha / slope)
}

/// Expected emitted counts per bin (no detector efficiency applied).
pub fn expected_csl_counts(
    params: &CslParams,
    target: &TargetMaterial,
    exposure: &Exposure,
    grid: &EnergyGrid,
) -> Result<Vec<f64>> {
    if !exposure.is_positive() {
        return Err(Error::domain("exposure must be > 0"));
    }
    if !(grid.low() > 0.0) {
        return Err(Error::domain(format!(
            "grid starts at {} keV; the emission density needs E > 0",
            grid.low()
        )));
    }
    if grid.high() > MAX_VALID_ENERGY {
        return Err(Error::Validity(format!(
            "grid extends to {} keV, beyond the non-relativistic window",
            grid.high()
        )));
    }
    let alpha = alpha_from_lambda(params, target, exposure)?;
    Ok(grid.bins().map(|(a, b)| alpha * ((b - a) / a).ln_1p()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CslLimit {
    /// Bound on the 1/E continuum amplitude, counts.
    pub alpha: LimitResult,
    pub lambda: LimitResult,
    pub lambda_mass_proportional: LimitResult,
}

/// Bound on λ from a spectrum modelled as a free flat background plus the
/// 1/E emission continuum. The spectrum must carry its exposure.
pub fn csl_upper_limit(
    spectrum: &BinnedSpectrum,
    response: &DetectorResponse,
    target: &TargetMaterial,
    correlation_length: f64,
    cl: f64,
    seed: u64,
) -> Result<CslLimit> {
    let exposure = spectrum.exposure;
    if !exposure.is_positive() {
        return Err(Error::domain("the spectrum carries no exposure"));
    }
    let width = spectrum.grid.high() - spectrum.grid.low();
    let total = spectrum.total() as f64;
    let flat = total / width;
    let log_span = (spectrum.grid.high() / spectrum.grid.low()).ln();
    let model = SpectralModel::new(response.clone())
        .with(SpectralComponent::flat(flat))
        .with(SpectralComponent::continuum(0.0));
    let problem = FitProblem::new(
        Observation::Counts(spectrum.clone()),
        model,
        FreeParam::new(ParamRef::Amplitude { component: 1 }, "alpha", 0.0, (total + 1.0).sqrt() / log_span),
        vec![FreeParam::new(
            ParamRef::Coefficient { component: 0, power: 0 },
            "flat",
            flat,
            (total + 1.0).sqrt() / width,
        )],
        Statistic::PoissonNll,
    )?
    .with_seed(seed);
    let mut alpha = bayesian_upper_limit(&problem, cl)?;
    alpha.unit = "counts".into();
    let per = |mass_proportional| lambda_from_alpha(1.0, target, &exposure, correlation_length, mass_proportional);
    Ok(CslLimit {
        lambda: alpha.rescaled(per(false)?, "lambda", "1/s"),
        lambda_mass_proportional: alpha.rescaled(per(true)?, "lambda_mass_proportional", "1/s"),
        alpha,
    })
}
