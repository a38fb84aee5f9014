//! C ABI over the `twogroups` library.
//!
//! Every fallible function returns a [`TgStatus`] and writes its result
//! through an out-pointer. On failure, `tg_last_error_message` returns a
//! description that stays valid until the next call on the same thread.
//! Models are opaque handles released with `tg_model_free`; strings
//! returned by the library are released with `tg_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};


use twogroups::estimation::{self, ParametricOptions};
use twogroups::{config, posterior, Error, MixingDistribution, NullComponent, Tail, TwoGroupsModel, ZPanel};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    InvalidInput = 1,
    DegeneratePoint = 2,
    InsufficientData = 3,
    EmpiricalNullFailure = 4,
    Numerical = 5,
    Parse = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgTail {
    Lower = 0,
    Upper = 1,
    TwoSided = 2,
}

impl From<TgTail> for Tail {
    fn from(t: TgTail) -> Self {
        match t {
            TgTail::Lower => Tail::Lower,
            TgTail::Upper => Tail::Upper,
            TgTail::TwoSided => Tail::TwoSided,
        }
    }
}

/// Opaque model handle.
pub struct TgModel(TwoGroupsModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TgStatus {
    match e {
        Error::InvalidInput(_) | Error::OutputExists(_) => TgStatus::InvalidInput,
        Error::DegeneratePoint { .. } => TgStatus::DegeneratePoint,
        Error::InsufficientData { .. } => TgStatus::InsufficientData,
        Error::EmpiricalNullFailure(_) => TgStatus::EmpiricalNullFailure,
        Error::Numerical(_) => TgStatus::Numerical,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => TgStatus::Parse,
        Error::Io(_) => TgStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> TgStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TgStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer passed for {what}"));
            TgStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic");
            TgStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const TgModel) -> Result<&'a TwoGroupsModel, Failure> {
    m.as_ref().map(|m| &m.0).ok_or(Failure::Null("model"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed(m: TwoGroupsModel) -> *mut TgModel {
    Box::into_raw(Box::new(TgModel(m)))
}

/// Model with a theoretical null and g = N(mean, variance).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tg_model_new_normal(p0: f64, mean: f64, variance: f64, sampling_variance: f64, out: *mut *mut TgModel) -> TgStatus {
    guard(|| {
        let m = TwoGroupsModel::new(p0, NullComponent::theoretical(), MixingDistribution::normal(mean, variance)?, sampling_variance)?;
        write_out(out, boxed(m))
    })
}

/// Model with a theoretical null and g on `len` support points.
///
/// # Safety
/// `support` and `weights` must each point to `len` readable doubles and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tg_model_new_grid(
    p0: f64,
    support: *const f64,
    weights: *const f64,
    len: usize,
    sampling_variance: f64,
    out: *mut *mut TgModel,
) -> TgStatus {
    guard(|| {
        let s = slice(support, len, "support")?.to_vec();
        let w = slice(weights, len, "weights")?.to_vec();
        let m = TwoGroupsModel::new(p0, NullComponent::theoretical(), MixingDistribution::grid(s, w)?, sampling_variance)?;
        write_out(out, boxed(m))
    })
}

/// Copy of `model` with the null replaced by N(delta0, sigma0² V).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_with_empirical_null(model: *const TgModel, delta0: f64, sigma0: f64, out: *mut *mut TgModel) -> TgStatus {
    guard(|| {
        let m = model_ref(model)?;
        let null = NullComponent::empirical(delta0, sigma0)?;
        let copy = TwoGroupsModel::new(m.p0(), null, m.g().clone(), m.default_sampling_variance())?;
        write_out(out, boxed(copy))
    })
}

/// Parses a model from `key = value` configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_from_config(text: *const c_char, out: *mut *mut TgModel) -> TgStatus {
    guard(|| {
        if text.is_null() {
            return Err(Failure::Null("text"));
        }
        let s = CStr::from_ptr(text).to_str().map_err(|_| Error::invalid("configuration is not UTF-8"))?;
        let m = config::parse_model(s, "<ffi>")?;
        write_out(out, boxed(m))
    })
}

/// Serializes a model to configuration text. Free the result with
/// `tg_string_free`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_to_config(model: *const TgModel, out: *mut *mut c_char) -> TgStatus {
    guard(|| {
        let text = config::write_model(model_ref(model)?);
        let c = CString::new(text).map_err(|_| Error::invalid("configuration contains NUL"))?;
        write_out(out, c.into_raw())
    })
}

/// # Safety
/// `s` must come from this library (or be null) and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `model` must come from this library (or be null) and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tg_model_free(model: *mut TgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_p0(model: *const TgModel, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, model_ref(model)?.p0()))
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_local_fdr(model: *const TgModel, z: f64, sampling_variance: f64, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, posterior::local_fdr(model_ref(model)?, z, sampling_variance)?))
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_tail_fdr(model: *const TgModel, z: f64, sampling_variance: f64, tail: TgTail, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, posterior::tail_fdr(model_ref(model)?, z, sampling_variance, tail.into())?))
}

/// P(μ > k | z) for the upper side, P(μ < −k | z) for the lower side and
/// P(|μ| > k | z) for two-sided.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_exceedance(model: *const TgModel, z: f64, sampling_variance: f64, k: f64, side: TgTail, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, posterior::exceedance(model_ref(model)?, z, sampling_variance, k, side.into())?))
}

/// Mean exceedance over the population of units beyond `threshold`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_population_averaged_exceedance(
    model: *const TgModel,
    threshold: f64,
    k: f64,
    sampling_variance: f64,
    tail: TgTail,
    out: *mut f64,
) -> TgStatus {
    guard(|| {
        let v = posterior::population_averaged_exceedance(model_ref(model)?, threshold, k, sampling_variance, tail.into())?;
        write_out(out, v)
    })
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_marginal_density(model: *const TgModel, z: f64, sampling_variance: f64, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, model_ref(model)?.marginal_density(z, sampling_variance)?))
}

/// P(Z ≥ z) under the mixture.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tg_marginal_upper_tail(model: *const TgModel, z: f64, sampling_variance: f64, out: *mut f64) -> TgStatus {
    guard(|| write_out(out, model_ref(model)?.marginal_upper_tail(z, sampling_variance)?))
}

/// Fits p0 and g = N(m, v) by EM with a theoretical null. `variances` may
/// be null, in which case every unit uses `sampling_variance`.
///
/// # Safety
/// `z` (and `variances` when non-null) must point to `n` readable doubles
/// and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tg_fit_parametric(
    z: *const f64,
    variances: *const f64,
    n: usize,
    sampling_variance: f64,
    out: *mut *mut TgModel,
) -> TgStatus {
    guard(|| {
        let z = slice(z, n, "z")?;
        let panel = if variances.is_null() {
            ZPanel::from_z(z)?
        } else {
            ZPanel::from_z_and_variances(z, slice(variances, n, "variances")?)?
        };
        let fit = estimation::fit_parametric(&panel, NullComponent::theoretical(), sampling_variance, ParametricOptions::default())?;
        write_out(out, boxed(fit.model))
    })
}

/// Message for the most recent failure on this thread ("" after success).
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn tg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

