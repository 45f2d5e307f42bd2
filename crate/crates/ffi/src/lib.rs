//! C ABI for xraylim.
//!
//! Conventions:
//! - every fallible function returns an [`XrlStatus`]; `XRL_STATUS_OK` is 0;
//! - on failure a message is kept per thread and read with
//!   [`xrl_last_error_message`];
//! - spectra and models are opaque handles created by `*_new`/`*_load`
//!   functions and released with the matching `*_free`;
//! - outputs are written through caller-provided pointers, arrays are
//!   `(pointer, length)` pairs.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use xraylim::constants::{fwhm_to_sigma, Exposure, CODATA_2018};
use xraylim::csl::{csl_rate_density, csl_upper_limit, lambda_from_alpha, CslParams, TargetMaterial};
use xraylim::io::config::RunConfig;
use xraylim::io::run::{run_command, Command};
use xraylim::io::spectrum_file::{load_spectrum_with_header, write_spectrum, SpectrumHeader};
use xraylim::model::{predict_counts, simulate_spectrum, DetectorResponse, SpectralComponent, SpectralModel};
use xraylim::projection::{background_reduction, overall_improvement, total_linear_factor, ImprovementBudget};
use xraylim::spectrum::{BinnedSpectrum, EnergyGrid};
use xraylim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Shape = 4,
    Validity = 5,
    Model = 6,
    Numerical = 7,
    Parse = 8,
    Config = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> XrlStatus {
    match err {
        Error::Domain(_) => XrlStatus::Domain,
        Error::Shape(_) => XrlStatus::Shape,
        Error::Validity(_) => XrlStatus::Validity,
        Error::Model(_) | Error::InfiniteNll { .. } => XrlStatus::Model,
        Error::Degenerate(_) | Error::NonConvergence { .. } | Error::Range(_) => XrlStatus::Numerical,
        Error::Parse { .. } => XrlStatus::Parse,
        Error::Config(_) => XrlStatus::Config,
        Error::Io(_) => XrlStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Fail(XrlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> XrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XrlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            XrlStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(XrlStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(XrlStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, need: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len < need {
        return Err(Fail(
            XrlStatus::BufferTooSmall,
            format!("{name} holds {len} elements, {need} needed"),
        ));
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Opaque binned spectrum.
pub struct XrlSpectrum {
    inner: BinnedSpectrum,
}

/// Opaque spectral model (components plus detector response).
pub struct XrlModel {
    inner: SpectralModel,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xrl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn xrl_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

#[no_mangle]
pub unsafe extern "C" fn xrl_fwhm_to_sigma(fwhm: f64, out: *mut f64) -> XrlStatus {
    guard(|| {
        *out_arg(out, "out")? = fwhm_to_sigma(fwhm)?;
        Ok(())
    })
}

/// `(m_e / m_N)^2`.
#[no_mangle]
pub extern "C" fn xrl_mass_ratio_squared() -> f64 {
    CODATA_2018.mass_ratio_squared()
}

/// Emission density per quasi-free electron, photons / (s keV).
#[no_mangle]
pub unsafe extern "C" fn xrl_csl_rate_density(
    energy_kev: f64,
    lambda: f64,
    correlation_length_m: f64,
    mass_proportional: bool,
    out: *mut f64,
) -> XrlStatus {
    guard(|| {
        let p = CslParams::new(lambda, correlation_length_m, mass_proportional)?;
        *out_arg(out, "out")? = csl_rate_density(energy_kev, &p)?;
        Ok(())
    })
}

/// Collapse rate (1/s) producing continuum amplitude `alpha` (counts) in a
/// built-in target material ("Ge", "Si", "Cu").
#[no_mangle]
pub unsafe extern "C" fn xrl_lambda_from_alpha(
    alpha: f64,
    element: *const c_char,
    mass_kg: f64,
    live_days: f64,
    correlation_length_m: f64,
    mass_proportional: bool,
    out: *mut f64,
) -> XrlStatus {
    guard(|| {
        let target = TargetMaterial::builtin(str_arg(element, "element")?)?;
        let exposure = Exposure::new(mass_kg, live_days)?;
        *out_arg(out, "out")? = lambda_from_alpha(alpha, &target, &exposure, correlation_length_m, mass_proportional)?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct XrlBudgetSummary {
    pub total_linear_factor: f64,
    pub background_reduction_low: f64,
    pub background_reduction_high: f64,
    pub overall_improvement_low: f64,
    pub overall_improvement_high: f64,
}

/// Summary of the built-in copper-strip upgrade budget.
#[no_mangle]
pub unsafe extern "C" fn xrl_budget_summary_default(out: *mut XrlBudgetSummary) -> XrlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let b = ImprovementBudget::vip2_over_vip();
        let bg = background_reduction(&b)?;
        let all = overall_improvement(&b)?;
        *out = XrlBudgetSummary {
            total_linear_factor: total_linear_factor(&b)?,
            background_reduction_low: bg.low,
            background_reduction_high: bg.high,
            overall_improvement_low: all.low,
            overall_improvement_high: all.high,
        };
        Ok(())
    })
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_load(path: *const c_char, out: *mut *mut XrlSpectrum) -> XrlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (inner, _) = load_spectrum_with_header(str_arg(path, "path")?)?;
        *out = boxed(XrlSpectrum { inner });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_save(spectrum: *const XrlSpectrum, path: *const c_char) -> XrlStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        write_spectrum(str_arg(path, "path")?, &s.inner, &SpectrumHeader::default())?;
        Ok(())
    })
}

/// Number of bins, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_n_bins(spectrum: *const XrlSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.grid.n_bins())
}

/// Copies the `n_bins` counts into `out`.
#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_counts(spectrum: *const XrlSpectrum, out: *mut u64, len: usize) -> XrlStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let c = s.inner.counts();
        slice_out(out, len, c.len(), "out")?.copy_from_slice(c);
        Ok(())
    })
}

/// Copies the `n_bins + 1` bin edges (keV) into `out`.
#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_edges(spectrum: *const XrlSpectrum, out: *mut f64, len: usize) -> XrlStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let e = s.inner.grid.edges();
        slice_out(out, len, e.len(), "out")?.copy_from_slice(e);
        Ok(())
    })
}

/// Attaches an exposure (kg, days) to the spectrum.
#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_set_exposure(
    spectrum: *mut XrlSpectrum,
    mass_kg: f64,
    live_days: f64,
) -> XrlStatus {
    guard(|| {
        let s = spectrum.as_mut().ok_or_else(|| null("spectrum"))?;
        s.inner.exposure = Exposure::new(mass_kg, live_days)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xrl_spectrum_free(spectrum: *mut XrlSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Empty model with a constant-resolution response (FWHM in keV at 8 keV).
#[no_mangle]
pub unsafe extern "C" fn xrl_model_new(fwhm_ref_kev: f64, out: *mut *mut XrlModel) -> XrlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = SpectralModel::new(DetectorResponse::new(fwhm_ref_kev)?);
        *out = boxed(XrlModel { inner });
        Ok(())
    })
}

unsafe fn push(model: *mut XrlModel, c: SpectralComponent) -> Result<(), Fail> {
    let m = model.as_mut().ok_or_else(|| null("model"))?;
    m.inner.components.push(c);
    Ok(())
}

#[no_mangle]
pub unsafe extern "C" fn xrl_model_add_line(model: *mut XrlModel, centroid_kev: f64, amplitude: f64) -> XrlStatus {
    guard(|| push(model, SpectralComponent::line(centroid_kev, amplitude)))
}

/// Adds an `alpha / E` continuum.
#[no_mangle]
pub unsafe extern "C" fn xrl_model_add_continuum(model: *mut XrlModel, alpha: f64) -> XrlStatus {
    guard(|| push(model, SpectralComponent::continuum(alpha)))
}

/// Adds a polynomial density `sum_k c[k] E^k`.
#[no_mangle]
pub unsafe extern "C" fn xrl_model_add_polynomial(
    model: *mut XrlModel,
    coefficients: *const f64,
    n: usize,
) -> XrlStatus {
    guard(|| {
        let c = slice_arg(coefficients, n, "coefficients")?.to_vec();
        push(model, SpectralComponent::Polynomial { coefficients: c })
    })
}

unsafe fn grid_arg(edges: *const f64, n_edges: usize) -> Result<EnergyGrid, Fail> {
    Ok(EnergyGrid::new(slice_arg(edges, n_edges, "edges")?.to_vec())?)
}

/// Expected counts in the `n_edges - 1` bins defined by `edges`.
#[no_mangle]
pub unsafe extern "C" fn xrl_model_predict(
    model: *const XrlModel,
    edges: *const f64,
    n_edges: usize,
    out: *mut f64,
    len: usize,
) -> XrlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let mu = predict_counts(&m.inner, &grid_arg(edges, n_edges)?)?;
        slice_out(out, len, mu.len(), "out")?.copy_from_slice(&mu);
        Ok(())
    })
}

/// Seeded Poisson realisation of the model.
#[no_mangle]
pub unsafe extern "C" fn xrl_model_simulate(
    model: *const XrlModel,
    edges: *const f64,
    n_edges: usize,
    seed: u64,
    out: *mut *mut XrlSpectrum,
) -> XrlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out_arg(out, "out")?;
        let inner = simulate_spectrum(&m.inner, &grid_arg(edges, n_edges)?, seed)?;
        *out = boxed(XrlSpectrum { inner });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xrl_model_free(model: *mut XrlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct XrlCslLimit {
    /// Continuum amplitude bound, counts.
    pub alpha_upper: f64,
    /// Collapse-rate bounds, 1/s.
    pub lambda_upper: f64,
    pub lambda_mass_proportional_upper: f64,
}

/// Bound on the collapse rate from a spectrum with exposure, fitted with a
/// free flat background.
#[no_mangle]
pub unsafe extern "C" fn xrl_csl_limit(
    spectrum: *const XrlSpectrum,
    fwhm_ref_kev: f64,
    element: *const c_char,
    correlation_length_m: f64,
    cl: f64,
    seed: u64,
    out: *mut XrlCslLimit,
) -> XrlStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let out = out_arg(out, "out")?;
        let target = TargetMaterial::builtin(str_arg(element, "element")?)?;
        let response = DetectorResponse::new(fwhm_ref_kev)?;
        let l = csl_upper_limit(&s.inner, &response, &target, correlation_length_m, cl, seed)?;
        *out = XrlCslLimit {
            alpha_upper: l.alpha.upper_bound,
            lambda_upper: l.lambda.upper_bound,
            lambda_mass_proportional_upper: l.lambda_mass_proportional.upper_bound,
        };
        Ok(())
    })
}

/// Runs `command` ("simulate", "subtract", "fit", "limit", "project",
/// "constants") on a TOML run configuration and writes the report and
/// artifacts into `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn xrl_run_config(
    config_path: *const c_char,
    command: *const c_char,
    out_dir: *const c_char,
) -> XrlStatus {
    guard(|| {
        let path = Path::new(str_arg(config_path, "config_path")?);
        let cmd: Command = str_arg(command, "command")?.parse()?;
        let out_dir = str_arg(out_dir, "out_dir")?;
        let config = RunConfig::load(path).map_err(|e| e.in_stage("config"))?;
        let base = path.parent().unwrap_or(Path::new("."));
        run_command(cmd, &config, base)?.write_to(out_dir)?;
        Ok(())
    })
}
