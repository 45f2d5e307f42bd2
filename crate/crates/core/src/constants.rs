//! Physical constants and the handful of unit conversions the toolkit needs.
//!
//! Internal units: energy in keV, time in s, length in m. Values are the
//! CODATA 2018 recommended set and are frozen here; changing any of them
//! changes every downstream limit.
//!
//! The collapse-model emission rate is written in Gaussian units with
//! `ħ = c = 1`, so the squared elementary charge is the fine-structure
//! constant `α_em = e²/(ħc)`. Converting the correlation length to natural
//! units goes through `ħc` in keV·m; see [`PhysicalConstants::hbar_c`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONSTANTS_TABLE_VERSION: &str = "CODATA-2018/v1";

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// `2·sqrt(2·ln 2)`, the FWHM of a unit-σ Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Electron rest energy, keV.
    pub electron_mass: f64,
    /// Nucleon rest energy (proton), keV.
    pub nucleon_mass: f64,
    /// Squared electron charge in Gaussian natural units, i.e. `α_em`.
    pub electron_charge_squared: f64,
    /// Reduced Planck constant, keV·s.
    pub hbar: f64,
    /// `ħc`, keV·m.
    pub hbar_c: f64,
    /// Elementary charge, C.
    pub elementary_charge: f64,
    /// Avogadro constant, 1/mol.
    pub avogadro: f64,
    /// Default collapse correlation length, m.
    pub correlation_length_default: f64,
    /// Reference localization rate of the original spontaneous-localization model, 1/s.
    pub lambda_qmsl_reference: f64,
}

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    electron_mass: 510.998_950_00,
    nucleon_mass: 938_272.088_16,
    electron_charge_squared: 7.297_352_569_3e-3,
    hbar: 6.582_119_569e-19,
    hbar_c: 1.973_269_804e-10,
    elementary_charge: 1.602_176_634e-19,
    avogadro: 6.022_140_76e23,
    correlation_length_default: 1e-7,
    lambda_qmsl_reference: 1e-16,
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA_2018
    }
}

impl PhysicalConstants {
    /// `(m_e / m_N)²`.
    pub fn mass_ratio_squared(&self) -> f64 {
        let r = self.electron_mass / self.nucleon_mass;
        r * r
    }

    /// Key/value rows for audit dumps: (name, value, unit).
    pub fn table(&self) -> Vec<(&'static str, f64, &'static str)> {
        vec![
            ("electron_mass", self.electron_mass, "keV"),
            ("nucleon_mass", self.nucleon_mass, "keV"),
            ("electron_charge_squared", self.electron_charge_squared, "dimensionless (alpha_em, Gaussian units)"),
            ("hbar", self.hbar, "keV*s"),
            ("hbar_c", self.hbar_c, "keV*m"),
            ("elementary_charge", self.elementary_charge, "C"),
            ("avogadro", self.avogadro, "1/mol"),
            ("correlation_length_default", self.correlation_length_default, "m"),
            ("lambda_qmsl_reference", self.lambda_qmsl_reference, "1/s"),
            ("mass_ratio_squared", self.mass_ratio_squared(), "dimensionless"),
            ("seconds_per_day", SECONDS_PER_DAY, "s/day"),
        ]
    }
}

/// Published reference bounds, kept for comparison lines in reports. None of
/// these are re-derived by the toolkit.
pub mod reference {
    /// Upper bound on the PEP-violation probability β²/2 from the copper-current run.
    pub const PEP_BETA2_OVER_2_LIMIT: f64 = 4.7e-29;
    /// Collapse-rate bound (1/s) from the germanium low-energy spectrum fit, no mass coupling.
    pub const CSL_LAMBDA_LIMIT: f64 = 2.5e-18;
    /// Same bound under mass-proportional coupling, 1/s.
    pub const CSL_LAMBDA_LIMIT_MASS_PROPORTIONAL: f64 = 8.5e-12;
    /// Earlier germanium-slab bound (1/s) and its re-analysed value.
    pub const CSL_LAMBDA_LIMIT_SLAB: f64 = 0.55e-16;
    pub const CSL_LAMBDA_LIMIT_SLAB_CORRECTED: f64 = 2e-16;
    /// Enhanced collapse rate proposal, 1/s (central value, ±2 decades).
    pub const CSL_LAMBDA_ADLER: f64 = 1e-8;
}

pub fn mass_ratio_squared() -> f64 {
    CODATA_2018.mass_ratio_squared()
}

pub fn fwhm_to_sigma(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::domain(format!("FWHM must be positive and finite, got {fwhm}")));
    }
    Ok(fwhm / FWHM_PER_SIGMA)
}

pub fn sigma_to_fwhm(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(sigma * FWHM_PER_SIGMA)
}

pub fn kev_to_ev(kev: f64) -> f64 {
    kev * 1e3
}

pub fn ev_to_kev(ev: f64) -> f64 {
    ev * 1e-3
}

pub fn days_to_seconds(days: f64) -> f64 {
    days * SECONDS_PER_DAY
}

pub fn seconds_to_days(seconds: f64) -> f64 {
    seconds / SECONDS_PER_DAY
}

/// Detector mass times live time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Exposure {
    /// kg
    pub mass: f64,
    /// days
    pub live_time: f64,
}

impl Exposure {
    pub fn new(mass_kg: f64, live_days: f64) -> Result<Self> {
        if !(mass_kg >= 0.0) || !(live_days >= 0.0) || !mass_kg.is_finite() || !live_days.is_finite() {
            return Err(Error::domain(format!(
                "exposure mass and live time must be finite and non-negative, got {mass_kg} kg, {live_days} d"
            )));
        }
        Ok(Self {
            mass: mass_kg,
            live_time: live_days,
        })
    }

    /// kg·day
    pub fn product(&self) -> f64 {
        self.mass * self.live_time
    }

    pub fn live_seconds(&self) -> f64 {
        days_to_seconds(self.live_time)
    }

    pub fn is_positive(&self) -> bool {
        self.product() > 0.0
    }
}
