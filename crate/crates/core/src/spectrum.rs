//! Binned spectra and the on/off subtraction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::Exposure;
use crate::error::{Error, Result};

/// Energy bin edges in keV, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    edges: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::domain("an energy grid needs at least two edges"));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::domain("energy grid edges must be finite"));
        }
        if let Some(i) = edges.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::domain(format!(
                "energy grid edges must be strictly increasing (edge {} = {} is not above {})",
                i + 1,
                edges[i + 1],
                edges[i]
            )));
        }
        Ok(Self { edges })
    }

    /// `n_bins` equal-width bins spanning `[low, high]`.
    pub fn uniform(low: f64, high: f64, n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::domain("grid needs at least one bin"));
        }
        let width = (high - low) / n_bins as f64;
        let mut edges: Vec<f64> = (0..n_bins).map(|i| low + width * i as f64).collect();
        edges.push(high);
        Self::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn low(&self) -> f64 {
        self.edges[0]
    }

    pub fn high(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn bin(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.edges.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bins().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bins().map(|(a, b)| b - a).collect()
    }

    /// Indices of bins that overlap `[low, high]`.
    pub fn bins_overlapping(&self, low: f64, high: f64) -> Vec<usize> {
        self.bins()
            .enumerate()
            .filter(|(_, (a, b))| *b > low && *a < high)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sub-grid made of the contiguous bin range `first..=last`.
    pub fn slice(&self, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= self.n_bins() {
            return Err(Error::shape(format!(
                "bin range {first}..={last} outside grid with {} bins",
                self.n_bins()
            )));
        }
        Self::new(self.edges[first..=last + 1].to_vec())
    }

    pub fn same_as(&self, other: &EnergyGrid) -> bool {
        self.edges.len() == other.edges.len()
            && self
                .edges
                .iter()
                .zip(&other.edges)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumTag {
    CurrentOn,
    CurrentOff,
    Simulated,
    Measured,
}

impl fmt::Display for SpectrumTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectrumTag::CurrentOn => "current_on",
            SpectrumTag::CurrentOff => "current_off",
            SpectrumTag::Simulated => "simulated",
            SpectrumTag::Measured => "measured",
        })
    }
}

impl std::str::FromStr for SpectrumTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "current_on" => Ok(SpectrumTag::CurrentOn),
            "current_off" => Ok(SpectrumTag::CurrentOff),
            "simulated" => Ok(SpectrumTag::Simulated),
            "measured" => Ok(SpectrumTag::Measured),
            other => Err(Error::Config(format!("unknown spectrum tag {other:?}"))),
        }
    }
}

/// Energy-binned counts with exposure metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSpectrum {
    pub grid: EnergyGrid,
    counts: Vec<u64>,
    pub exposure: Exposure,
    pub tag: SpectrumTag,
    /// Wall-clock acquisition duration in days; used for on/off normalisation.
    pub acquisition_days: f64,
}

impl BinnedSpectrum {
    pub fn new(grid: EnergyGrid, counts: Vec<u64>, tag: SpectrumTag) -> Result<Self> {
        if counts.len() != grid.n_bins() {
            return Err(Error::shape(format!(
                "{} counts for a grid with {} bins",
                counts.len(),
                grid.n_bins()
            )));
        }
        Ok(Self {
            grid,
            counts,
            exposure: Exposure::default(),
            tag,
            acquisition_days: 0.0,
        })
    }

    pub fn with_exposure(mut self, exposure: Exposure) -> Self {
        self.exposure = exposure;
        self
    }

    pub fn with_acquisition_days(mut self, days: f64) -> Self {
        self.acquisition_days = days;
        self
    }

    pub fn with_tag(mut self, tag: SpectrumTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Background-subtracted spectrum with Gaussian per-bin uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub grid: EnergyGrid,
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
    /// on/off time ratio applied to the off spectrum.
    pub scale: f64,
}

/// `on − r·off` with `r` the ratio of acquisition durations.
pub fn subtract_spectra(on: &BinnedSpectrum, off: &BinnedSpectrum) -> Result<Residual> {
    if !on.grid.same_as(&off.grid) {
        return Err(Error::shape("on and off spectra are binned on different grids"));
    }
    if !(on.acquisition_days > 0.0) || !(off.acquisition_days > 0.0) {
        return Err(Error::domain(format!(
            "on/off acquisition durations must be positive (on {} d, off {} d)",
            on.acquisition_days, off.acquisition_days
        )));
    }
    let r = on.acquisition_days / off.acquisition_days;
    let (values, uncertainties) = on
        .counts
        .iter()
        .zip(&off.counts)
        .map(|(&n_on, &n_off)| {
            let (n_on, n_off) = (n_on as f64, n_off as f64);
            (n_on - r * n_off, (n_on + r * r * n_off).sqrt())
        })
        .unzip();
    Ok(Residual {
        grid: on.grid.clone(),
        values,
        uncertainties,
        scale: r,
    })
}
