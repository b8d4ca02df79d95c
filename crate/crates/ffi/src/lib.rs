//! C ABI over the `openworld` learners.
//!
//! Every function returns an [`OwStatus`]; on failure a message is available
//! from [`ow_last_error`] on the same thread. Learners are opaque
//! [`OwLearner`] handles created by [`ow_learner_new`] or
//! [`ow_learner_load`] and released with [`ow_learner_free`]. A handle must
//! not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use openworld::dataio::{load_snapshot, save_snapshot};
use openworld::metric::default_rank;
use openworld::{AnyLearner, Error, Label, LearnerKind, OnlineLearner};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    EmptyModel = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Opaque learner handle.
pub struct OwLearner {
    inner: AnyLearner,
}

/// Open-set prediction. `is_unknown` is 1 when the sample is rejected, in
/// which case `label` is meaningless. `threshold` is NaN for closed-set
/// learners.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwPrediction {
    pub is_unknown: i32,
    pub label: i64,
    pub confidence: f64,
    pub threshold: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OwStatus {
    match e {
        Error::DimensionMismatch { .. } => OwStatus::DimensionMismatch,
        Error::EmptyModel => OwStatus::EmptyModel,
        Error::Numerical(_) => OwStatus::Numerical,
        Error::Io { .. } => OwStatus::Io,
        Error::Parse { .. } | Error::Snapshot(_) => OwStatus::Parse,
        Error::InvalidInput(_) | Error::UnknownClass(_) | Error::Config(_) => OwStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (OwStatus, String)>) -> OwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OwStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (OwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (OwStatus, String) {
    (OwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (OwStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (OwStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(x: *const f64, len: usize) -> Result<&'a [f64], (OwStatus, String)> {
    if x.is_null() {
        return Err(null("x"));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

unsafe fn learner_ref<'a>(l: *const OwLearner) -> Result<&'a OwLearner, (OwStatus, String)> {
    l.as_ref().ok_or_else(|| null("learner"))
}

unsafe fn learner_mut<'a>(l: *mut OwLearner) -> Result<&'a mut OwLearner, (OwStatus, String)> {
    l.as_mut().ok_or_else(|| null("learner"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a learner. `kind` is one of "oncm", "onno", "onbc", "ncm-fixed",
/// "nno-fixed", "nbc-fixed"; `rank_m = 0` picks `min(d, 256)`.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_new(
    kind: *const c_char,
    d: usize,
    rank_m: usize,
    gamma: f64,
    out: *mut *mut OwLearner,
) -> OwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind: LearnerKind = str_arg(kind, "kind")?.parse().map_err(lib_err)?;
        let m = if rank_m == 0 { default_rank(d) } else { rank_m };
        let inner = kind.build(d, m, gamma).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OwLearner { inner }));
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `learner` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_free(learner: *mut OwLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Feeds one labeled sample.
///
/// # Safety
/// `x` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_learn(
    learner: *mut OwLearner,
    x: *const f64,
    len: usize,
    y: i64,
) -> OwStatus {
    guard(|| {
        let l = learner_mut(learner)?;
        let x = slice_arg(x, len)?;
        l.inner.learn(x, y).map_err(lib_err)
    })
}

/// Open-set prediction for one sample.
///
/// # Safety
/// `x` must point to `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_predict(
    learner: *const OwLearner,
    x: *const f64,
    len: usize,
    out: *mut OwPrediction,
) -> OwStatus {
    guard(|| {
        let l = learner_ref(learner)?;
        let x = slice_arg(x, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = l.inner.predict(x).map_err(lib_err)?;
        *out = OwPrediction {
            is_unknown: i32::from(p.label == Label::Unknown),
            label: p.label.class().unwrap_or(0),
            confidence: p.confidence,
            threshold: p.threshold.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Closed-set prediction (never unknown).
///
/// # Safety
/// `x` must point to `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_predict_closed(
    learner: *const OwLearner,
    x: *const f64,
    len: usize,
    out: *mut i64,
) -> OwStatus {
    guard(|| {
        let l = learner_ref(learner)?;
        let x = slice_arg(x, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = l.inner.predict_closed(x).map_err(lib_err)?;
        Ok(())
    })
}

/// Stops metric and threshold learning.
///
/// # Safety
/// `learner` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_freeze(learner: *mut OwLearner) -> OwStatus {
    guard(|| {
        learner_mut(learner)?.inner.freeze();
        Ok(())
    })
}

/// Feature dimension and number of classes seen so far.
///
/// # Safety
/// Pointers must be valid; either output may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_info(
    learner: *const OwLearner,
    dim: *mut usize,
    num_classes: *mut usize,
) -> OwStatus {
    guard(|| {
        let l = learner_ref(learner)?;
        if !dim.is_null() {
            *dim = l.inner.dim();
        }
        if !num_classes.is_null() {
            *num_classes = l.inner.num_classes();
        }
        Ok(())
    })
}

/// Writes a JSON snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_save(learner: *const OwLearner, path: *const c_char) -> OwStatus {
    guard(|| {
        let l = learner_ref(learner)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        save_snapshot(&l.inner, path).map_err(lib_err)
    })
}

/// Restores a learner from a JSON snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ow_learner_load(path: *const c_char, out: *mut *mut OwLearner) -> OwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = load_snapshot(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OwLearner { inner }));
        Ok(())
    })
}
