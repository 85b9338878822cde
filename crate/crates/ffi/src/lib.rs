//! C ABI for difflab.
//!
//! Every fallible function returns a [`DifflabStatus`]. On failure the
//! message is kept per thread and read with [`difflab_last_error_message`].
//! Mixtures and schedules are opaque handles released with their `_free`
//! function. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use difflab::sampler::{ddpm_step, run_sampler, AnalyticScore, SamplerOptions};
use difflab::{IsotropicGaussianMixture, LabError, Schedule, ScheduleKind};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifflabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    Schedule = 4,
    NonFiniteScore = 5,
    Json = 6,
    Utf8 = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifflabScheduleKind {
    Adaptive = 0,
    Constant = 1,
    Linear = 2,
}

/// Opaque mixture handle.
pub struct DifflabMixture(IsotropicGaussianMixture);

/// Opaque schedule handle.
pub struct DifflabSchedule(Schedule);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LabError) -> DifflabStatus {
    match e {
        LabError::InvalidInput(_) | LabError::Config(_) => DifflabStatus::InvalidInput,
        LabError::DimensionMismatch { .. } => DifflabStatus::DimensionMismatch,
        LabError::Schedule(_) => DifflabStatus::Schedule,
        LabError::NonFiniteScore { .. } => DifflabStatus::NonFiniteScore,
        LabError::Json(_) => DifflabStatus::Json,
        _ => DifflabStatus::Other,
    }
}

struct Fail(DifflabStatus, String);

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DifflabStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, record any error and convert panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DifflabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DifflabStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DifflabStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn mixture<'a>(m: *const DifflabMixture) -> Result<&'a IsotropicGaussianMixture, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("mixture"))
}

unsafe fn schedule<'a>(s: *const DifflabSchedule) -> Result<&'a Schedule, Fail> {
    s.as_ref().map(|s| &s.0).ok_or_else(|| null("schedule"))
}

fn check_dim(expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(LabError::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn difflab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn difflab_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn difflab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a mixture from JSON: `{"dim": d, "components": [{"w": .., "mean": [..], "var": ..}]}`.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_from_json(
    json: *const c_char,
    out: *mut *mut DifflabMixture,
) -> DifflabStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(DifflabStatus::Utf8, format!("json is not utf-8: {e}")))?;
        let m: IsotropicGaussianMixture = serde_json::from_str(text).map_err(LabError::from)?;
        *out = Box::into_raw(Box::new(DifflabMixture(m)));
        Ok(())
    })
}

/// Build a mixture from `k` weights, `k*dim` row-major means and `k` variances.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_new(
    dim: usize,
    k: usize,
    weights: *const f64,
    means: *const f64,
    vars: *const f64,
    out: *mut *mut DifflabMixture,
) -> DifflabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w = input(weights, k, "weights")?;
        let mu = input(means, k * dim, "means")?;
        let v = input(vars, k, "vars")?;
        let comps = (0..k)
            .map(|i| (w[i], mu[i * dim..(i + 1) * dim].to_vec(), v[i]))
            .collect();
        let m = IsotropicGaussianMixture::new(dim, comps)?;
        *out = Box::into_raw(Box::new(DifflabMixture(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_free(m: *mut DifflabMixture) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimension of the mixture, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_dim(m: *const DifflabMixture) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Serialize to JSON. Release the string with [`difflab_string_free`].
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_to_json(m: *const DifflabMixture, out: *mut *mut c_char) -> DifflabStatus {
    guard(|| {
        let m = mixture(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(m).map_err(LabError::from)?;
        *out = CString::new(text).expect("json has no nul bytes").into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn difflab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_log_density(
    m: *const DifflabMixture,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> DifflabStatus {
    guard(|| {
        let m = mixture(m)?;
        check_dim(m.dim(), dim)?;
        let x = input(x, dim, "x")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.log_density(x)?;
        Ok(())
    })
}

/// Score of the mixture after OU smoothing to time `t` (`t = 0` is the
/// mixture itself). Writes `dim` values.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_score(
    m: *const DifflabMixture,
    t: f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> DifflabStatus {
    guard(|| {
        let m = mixture(m)?;
        check_dim(m.dim(), dim)?;
        let x = input(x, dim, "x")?;
        let out = output(out, dim, "out")?;
        out.copy_from_slice(&m.smoothed_score(t, x)?);
        Ok(())
    })
}

/// New handle for the time-`t` marginal of the forward process.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_smooth(
    m: *const DifflabMixture,
    t: f64,
    out: *mut *mut DifflabMixture,
) -> DifflabStatus {
    guard(|| {
        let m = mixture(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(DifflabMixture(m.smooth(t)?)));
        Ok(())
    })
}

/// Draw `n` points into `out` (`n*dim`, row-major). Same seed, same draws.
#[no_mangle]
pub unsafe extern "C" fn difflab_mixture_sample(
    m: *const DifflabMixture,
    seed: u64,
    n: usize,
    out: *mut f64,
) -> DifflabStatus {
    guard(|| {
        let m = mixture(m)?;
        let out = output(out, n * m.dim(), "out")?;
        let mut rng = difflab::rng::substream(seed, &[]);
        for (row, x) in out.chunks_exact_mut(m.dim()).zip(m.sample(&mut rng, n)) {
            row.copy_from_slice(&x);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn difflab_schedule_new(
    kind: DifflabScheduleKind,
    horizon: f64,
    gamma: f64,
    n: usize,
    out: *mut *mut DifflabSchedule,
) -> DifflabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match kind {
            DifflabScheduleKind::Adaptive => ScheduleKind::Adaptive,
            DifflabScheduleKind::Constant => ScheduleKind::Constant,
            DifflabScheduleKind::Linear => ScheduleKind::Linear,
        };
        *out = Box::into_raw(Box::new(DifflabSchedule(Schedule::build(kind, horizon, gamma, n)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn difflab_schedule_free(s: *mut DifflabSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Realized number of steps; the schedule has one more time than steps.
/// Returns 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn difflab_schedule_len(s: *const DifflabSchedule) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Copy the `len + 1` decreasing times into `out` of capacity `cap`.
#[no_mangle]
pub unsafe extern "C" fn difflab_schedule_times(s: *const DifflabSchedule, out: *mut f64, cap: usize) -> DifflabStatus {
    guard(|| {
        let s = schedule(s)?;
        if cap < s.times.len() {
            return Err(Fail(
                DifflabStatus::InvalidInput,
                format!("buffer holds {cap} times, schedule has {}", s.times.len()),
            ));
        }
        output(out, s.times.len(), "out")?.copy_from_slice(&s.times);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn difflab_schedule_kl_budget(s: *const DifflabSchedule, out: *mut f64) -> DifflabStatus {
    guard(|| {
        let s = schedule(s)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.kl_budget();
        Ok(())
    })
}

/// One exact reverse step with frozen score: writes the mean to `mean_out`
/// (`dim` values) and the per-coordinate noise std to `std_out`.
#[no_mangle]
pub unsafe extern "C" fn difflab_ddpm_step(
    x: *const f64,
    s_hat: *const f64,
    dim: usize,
    h: f64,
    mean_out: *mut f64,
    std_out: *mut f64,
) -> DifflabStatus {
    guard(|| {
        let x = input(x, dim, "x")?;
        let s = input(s_hat, dim, "s_hat")?;
        let mean_out = output(mean_out, dim, "mean_out")?;
        let std_out = std_out.as_mut().ok_or_else(|| null("std_out"))?;
        let (mean, std) = ddpm_step(x, s, h)?;
        mean_out.copy_from_slice(&mean);
        *std_out = std;
        Ok(())
    })
}

/// Run the reverse sampler with the mixture's exact scores from `N(0, I)`
/// and write the `n*dim` terminal samples to `out`.
#[no_mangle]
pub unsafe extern "C" fn difflab_sample_analytic(
    s: *const DifflabSchedule,
    m: *const DifflabMixture,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> DifflabStatus {
    guard(|| {
        let s = schedule(s)?;
        let m = mixture(m)?;
        let d = m.dim();
        let out = output(out, n * d, "out")?;
        let res = run_sampler(
            s,
            &AnalyticScore::new(m.clone()),
            n,
            d,
            seed,
            None,
            SamplerOptions::default(),
        )?;
        for (row, x) in out.chunks_exact_mut(d).zip(&res.samples) {
            row.copy_from_slice(x);
        }
        Ok(())
    })
}
