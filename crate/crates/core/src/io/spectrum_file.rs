//! Plain-text spectrum files.
//!
//! ```text
//! # xraylim-spectrum v1
//! # energy_unit: keV
//! # tag: current_on
//! # acquisition_days: 34
//! # exposure_mass_kg: 1
//! # exposure_live_days: 34
//! # exposure_kg_day: 34
//! # config_hash: 3f2a...
//! # columns: low_keV high_keV counts
//! 7.000 7.025 112
//! ...
//! ```
//!
//! Header keys are `# key: value`; unknown keys are kept verbatim. Rows are
//! whitespace separated and must tile the energy axis without gaps or overlaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::constants::Exposure;
use crate::error::{Error, Result};
use crate::model::DetectorResponse;
use crate::spectrum::{BinnedSpectrum, EnergyGrid, SpectrumTag};

pub const FORMAT_MAGIC: &str = "xraylim-spectrum v1";

/// Header fields that are not part of `BinnedSpectrum` itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpectrumHeader {
    pub config_hash: Option<String>,
    pub response: Option<DetectorResponse>,
    pub extra: BTreeMap<String, String>,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_spectrum(text: &str) -> Result<(BinnedSpectrum, SpectrumHeader)> {
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut rows: Vec<(usize, f64, f64, u64)> = Vec::new();
    let mut seen_magic = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest == FORMAT_MAGIC {
                seen_magic = true;
            } else if let Some((k, v)) = rest.split_once(':') {
                header.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let row = rows.len() + 1;
        if fields.len() != 3 {
            return Err(perr(line_no, format!("row {row}: expected 3 columns, found {}", fields.len())));
        }
        let low: f64 = fields[0]
            .parse()
            .map_err(|_| perr(line_no, format!("row {row}: bad low edge {:?}", fields[0])))?;
        let high: f64 = fields[1]
            .parse()
            .map_err(|_| perr(line_no, format!("row {row}: bad high edge {:?}", fields[1])))?;
        if fields[2].starts_with('-') {
            return Err(perr(line_no, format!("row {row}: negative counts {}", fields[2])));
        }
        let counts: u64 = fields[2]
            .parse()
            .map_err(|_| perr(line_no, format!("row {row}: counts must be a non-negative integer, got {:?}", fields[2])))?;
        rows.push((line_no, low, high, counts));
    }

    if !seen_magic {
        return Err(perr(1, format!("missing format line '# {FORMAT_MAGIC}'")));
    }
    let (unit_line, unit) = header
        .get("energy_unit")
        .cloned()
        .ok_or_else(|| perr(1, "missing units: header needs '# energy_unit: keV' (or eV)"))?;
    let to_kev = match unit.as_str() {
        "keV" => 1.0,
        "eV" => 1e-3,
        other => return Err(perr(unit_line, format!("unsupported energy unit {other:?}"))),
    };
    if rows.is_empty() {
        return Err(perr(text.lines().count().max(1), "no bins"));
    }

    let mut edges = Vec::with_capacity(rows.len() + 1);
    let mut counts = Vec::with_capacity(rows.len());
    for (i, &(line_no, low, high, c)) in rows.iter().enumerate() {
        let row = i + 1;
        let (low, high) = (low * to_kev, high * to_kev);
        if !(high > low) {
            return Err(perr(line_no, format!("row {row}: high edge {high} is not above low edge {low}")));
        }
        if let Some(&prev_high) = edges.last() {
            let tol = 1e-12 * f64::max(1.0, low.abs());
            if low < prev_high - tol {
                return Err(perr(
                    line_no,
                    format!("row {row} overlaps row {}: starts at {low} before {prev_high}", row - 1),
                ));
            }
            if low > prev_high + tol {
                return Err(perr(
                    line_no,
                    format!("row {row} leaves a gap after row {}: {prev_high} to {low}", row - 1),
                ));
            }
        } else {
            edges.push(low);
        }
        edges.push(high);
        counts.push(c);
    }

    let get = |k: &str| header.get(k).cloned();
    let num = |k: &str| -> Result<Option<f64>> {
        match get(k) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| perr(line, format!("header {k}: not a number: {v:?}"))),
        }
    };

    let tag = match get("tag") {
        Some((line, v)) => v.parse::<SpectrumTag>().map_err(|e| perr(line, e.to_string()))?,
        None => SpectrumTag::Measured,
    };
    let mass = num("exposure_mass_kg")?.unwrap_or(0.0);
    let live = num("exposure_live_days")?.unwrap_or(0.0);
    let exposure = Exposure::new(mass, live).map_err(|e| perr(1, e.to_string()))?;
    if let (Some(prod), true) = (num("exposure_kg_day")?, exposure.is_positive()) {
        if ((prod - exposure.product()) / prod).abs() > 1e-9 {
            return Err(perr(
                header["exposure_kg_day"].0,
                format!("exposure_kg_day {prod} disagrees with mass × live time {}", exposure.product()),
            ));
        }
    }
    let acquisition_days = num("acquisition_days")?.unwrap_or(0.0);

    let response = match num("fwhm_ref_keV")? {
        Some(fwhm) => {
            let mut r = DetectorResponse::new(fwhm).map_err(|e| perr(header["fwhm_ref_keV"].0, e.to_string()))?;
            if let Some((line, v)) = get("resolution_model") {
                r.resolution_model = serde_json::from_value(serde_json::Value::String(v.clone()))
                    .map_err(|_| perr(line, format!("unknown resolution model {v:?}")))?;
            }
            if let Some(e) = num("efficiency")? {
                r = r
                    .with_efficiency(crate::model::Efficiency::Scalar(e))
                    .map_err(|err| perr(header["efficiency"].0, err.to_string()))?;
            }
            Some(r)
        }
        None => None,
    };

    const KNOWN: &[&str] = &[
        "energy_unit",
        "tag",
        "acquisition_days",
        "exposure_mass_kg",
        "exposure_live_days",
        "exposure_kg_day",
        "fwhm_ref_keV",
        "resolution_model",
        "efficiency",
        "config_hash",
        "columns",
    ];
    let extra = header
        .iter()
        .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
        .map(|(k, (_, v))| (k.clone(), v.clone()))
        .collect();

    let grid = EnergyGrid::new(edges).map_err(|e| perr(1, e.to_string()))?;
    let spectrum = BinnedSpectrum::new(grid, counts, tag)?
        .with_exposure(exposure)
        .with_acquisition_days(acquisition_days);
    Ok((
        spectrum,
        SpectrumHeader {
            config_hash: get("config_hash").map(|(_, v)| v),
            response,
            extra,
        },
    ))
}

pub fn format_spectrum(spectrum: &BinnedSpectrum, header: &SpectrumHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_MAGIC}");
    let _ = writeln!(out, "# energy_unit: keV");
    let _ = writeln!(out, "# tag: {}", spectrum.tag);
    let _ = writeln!(out, "# acquisition_days: {}", spectrum.acquisition_days);
    let _ = writeln!(out, "# exposure_mass_kg: {}", spectrum.exposure.mass);
    let _ = writeln!(out, "# exposure_live_days: {}", spectrum.exposure.live_time);
    let _ = writeln!(out, "# exposure_kg_day: {}", spectrum.exposure.product());
    if let Some(r) = &header.response {
        let _ = writeln!(out, "# fwhm_ref_keV: {}", r.fwhm_ref);
        let model = serde_json::to_value(r.resolution_model).expect("enum serializes");
        let _ = writeln!(out, "# resolution_model: {}", model.as_str().unwrap_or("constant"));
        if let crate::model::Efficiency::Scalar(e) = r.efficiency {
            let _ = writeln!(out, "# efficiency: {e}");
        }
    }
    if let Some(h) = &header.config_hash {
        let _ = writeln!(out, "# config_hash: {h}");
    }
    for (k, v) in &header.extra {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "# columns: low_keV high_keV counts");
    for ((low, high), c) in spectrum.grid.bins().zip(spectrum.counts()) {
        let _ = writeln!(out, "{low} {high} {c}");
    }
    out
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<BinnedSpectrum> {
    load_spectrum_with_header(path).map(|(s, _)| s)
}

pub fn load_spectrum_with_header(path: impl AsRef<Path>) -> Result<(BinnedSpectrum, SpectrumHeader)> {
    let text = std::fs::read_to_string(path)?;
    parse_spectrum(&text)
}

pub fn write_spectrum(path: impl AsRef<Path>, spectrum: &BinnedSpectrum, header: &SpectrumHeader) -> Result<()> {
    std::fs::write(path, format_spectrum(spectrum, header))?;
    Ok(())
}
