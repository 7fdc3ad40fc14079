// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI for the backflow measure pipelines.
//!
//! The surface is deliberately small: feed a flat `key = value` config text
//! to [`bf_run_measure`], read the scalar measure, its bootstrap error and
//! the time series back out of the opaque result handle, or serialize the
//! whole result to JSON. Error codes mirror the CLI exit codes; the per
//! thread message from [`bf_last_error`] carries the detail.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use backflow::config::CommandKind;
use backflow::measures::MeasureResult;
use backflow::run::run_measure_from_text;

/// Success.
pub const BF_OK: c_int = 0;
/// I/O or serialization failure.
pub const BF_ERR_IO: c_int = 1;
/// Bad configuration or argument.
pub const BF_ERR_USAGE: c_int = 2;
/// Resource guard refused the request (dense size limits).
pub const BF_ERR_RESOURCE: c_int = 3;
/// Numerical failure inside the pipelines.
pub const BF_ERR_NUMERICAL: c_int = 4;
/// A null pointer where a value was required.
pub const BF_ERR_NULL: c_int = 64;
/// An internal panic was caught at the boundary.
pub const BF_ERR_PANIC: c_int = 70;

/// The distance measure `N_BLP,2`.
pub const BF_MEASURE_BLP2: c_int = 0;
/// The mutual-information measure `N_LFS,2`.
pub const BF_MEASURE_LFS2: c_int = 1;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn code_of(err: &backflow::Error) -> c_int {
    err.exit_code() as c_int
}

/// Opaque measure result handle.
pub struct BfResult {
    inner: MeasureResult,
}

/// Message describing the most recent error on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(backflow::run::version()).unwrap())
        .as_ptr()
}

/// Run a measure pipeline from flat config text (`key = value` lines, same
/// grammar as the CLI `--config` file).
///
/// `measure` is [`BF_MEASURE_BLP2`] or [`BF_MEASURE_LFS2`]. On success
/// writes a handle into `out` and returns [`BF_OK`]; the handle must be
/// released with [`bf_result_free`].
///
/// # Safety
/// `config_text` must be a valid NUL-terminated UTF-8 string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_run_measure(
    config_text: *const c_char,
    measure: c_int,
    out: *mut *mut BfResult,
) -> c_int {
    if config_text.is_null() || out.is_null() {
        set_error("null argument");
        return BF_ERR_NULL;
    }
    let text = match CStr::from_ptr(config_text).to_str() {
        Ok(t) => t.to_owned(),
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return BF_ERR_USAGE;
        }
    };
    let command = match measure {
        BF_MEASURE_BLP2 => CommandKind::Blp,
        BF_MEASURE_LFS2 => CommandKind::Lfs,
        _ => {
            set_error("unknown measure selector");
            return BF_ERR_USAGE;
        }
    };
    let result = catch_unwind(AssertUnwindSafe(|| run_measure_from_text(command, &text)));
    match result {
        Ok(Ok(r)) => {
            *out = Box::into_raw(Box::new(BfResult { inner: r }));
            BF_OK
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            code_of(&e)
        }
        Err(_) => {
            set_error("internal panic in the measure pipeline");
            BF_ERR_PANIC
        }
    }
}

/// The measure value (maximized positive variation).
///
/// # Safety
/// `res` must be a live handle from [`bf_run_measure`].
#[no_mangle]
pub unsafe extern "C" fn bf_result_value(res: *const BfResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).inner.value
}

/// Bootstrap standard error of the measure value.
///
/// # Safety
/// `res` must be a live handle from [`bf_run_measure`].
#[no_mangle]
pub unsafe extern "C" fn bf_result_sigma(res: *const BfResult) -> f64 {
    if res.is_null() {
        return f64::NAN;
    }
    (*res).inner.sigma
}

/// Number of points in the arg-max candidate's time series.
///
/// # Safety
/// `res` must be a live handle from [`bf_run_measure`].
#[no_mangle]
pub unsafe extern "C" fn bf_result_series_len(res: *const BfResult) -> usize {
    if res.is_null() {
        return 0;
    }
    let r = &(*res).inner;
    r.candidates
        .iter()
        .find(|c| c.name == r.argmax)
        .map(|c| c.series.len())
        .unwrap_or(0)
}

/// Read point `i` of the arg-max candidate's series into `t`, `value`,
/// `sigma` (any of which may be null to skip).
///
/// # Safety
/// `res` must be a live handle; non-null output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bf_result_series_point(
    res: *const BfResult,
    i: usize,
    t: *mut f64,
    value: *mut f64,
    sigma: *mut f64,
) -> c_int {
    if res.is_null() {
        set_error("null result handle");
        return BF_ERR_NULL;
    }
    let r = &(*res).inner;
    let Some(c) = r.candidates.iter().find(|c| c.name == r.argmax) else {
        set_error("result has no candidates");
        return BF_ERR_NUMERICAL;
    };
    if i >= c.series.len() {
        set_error("series index out of range");
        return BF_ERR_USAGE;
    }
    if !t.is_null() {
        *t = c.series.times[i];
    }
    if !value.is_null() {
        *value = c.series.values[i];
    }
    if !sigma.is_null() {
        *sigma = c.series.sigmas[i];
    }
    BF_OK
}

/// Serialize the full result (all candidates and series) to JSON. Free the
/// returned string with [`bf_string_free`].
///
/// # Safety
/// `res` must be a live handle from [`bf_run_measure`].
#[no_mangle]
pub unsafe extern "C" fn bf_result_to_json(res: *const BfResult) -> *mut c_char {
    if res.is_null() {
        return std::ptr::null_mut();
    }
    match serde_json::to_string(&(*res).inner) {
        Ok(s) => CString::new(s).map(CString::into_raw).unwrap_or(std::ptr::null_mut()),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a string returned by [`bf_result_to_json`].
///
/// # Safety
/// `s` must originate from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn bf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a result handle.
///
/// # Safety
/// `res` must originate from [`bf_run_measure`] and not have been freed
/// already.
#[no_mangle]
pub unsafe extern "C" fn bf_result_free(res: *mut BfResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
