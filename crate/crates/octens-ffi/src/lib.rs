//! C ABI for the octens ensemble toolkit.
//!
//! Score and label tables travel as opaque handles created from CSV files
//! (or by [`octens_combine`]/[`octens_predict`]); every fallible call
//! returns an [`OctensStatus`] and records a message retrievable with
//! [`octens_last_error`]. Handles must be released with the matching
//! `*_free` function. The generated header lives in `include/octens.h`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;

use octens::data::{
    eyewise_split, read_labels, read_manifest, read_scores, split_to_csv, write_labels,
    write_scores, LabelMatrix, ScoreMatrix,
};
use octens::ensemble::{
    align_branch_scores, align_branches_with_truth, combine, optimize_weights, predict,
    SearchConfig, SearchMethod, WeightVector,
};
use octens::error::Error;
use octens::metrics::evaluate;

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctensStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A parameter violated its documented range or shape.
    InvalidParameter = 2,
    /// The underlying file could not be read or written.
    IoError = 3,
    /// A file parsed but violated its format contract.
    FormatError = 4,
    /// Inputs that must agree (ids, labels, lengths) do not.
    Mismatch = 5,
}

/// Opaque prediction-score table (rows x biomarker columns, values in [0,1]).
pub struct OctensScores(ScoreMatrix);

/// Opaque binary label table aligned with a score table by sample id.
pub struct OctensLabels(LabelMatrix);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> OctensStatus {
    match err {
        Error::Param(_) => OctensStatus::InvalidParameter,
        Error::Format { .. } => OctensStatus::FormatError,
        Error::Mismatch(_) => OctensStatus::Mismatch,
        Error::Io { .. } | Error::Image { .. } => OctensStatus::IoError,
    }
}

fn fail(err: &Error) -> OctensStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn octens_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static library version string; never freed by the caller.
#[no_mangle]
pub extern "C" fn octens_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, OctensStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(OctensStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(OctensStatus::InvalidParameter)
        }
    }
}

/// Reads a score CSV into a new handle, or returns null (see
/// [`octens_last_error`]).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_read(path: *const c_char) -> *mut OctensScores {
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    match read_scores(path) {
        Ok(m) => Box::into_raw(Box::new(OctensScores(m))),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Reads a label CSV into a new handle, or returns null.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn octens_labels_read(path: *const c_char) -> *mut OctensLabels {
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    match read_labels(path) {
        Ok(m) => Box::into_raw(Box::new(OctensLabels(m))),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Writes a score handle back to canonical CSV.
///
/// # Safety
/// `handle` must come from this library and be live; `path` must be a
/// valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_write(
    handle: *const OctensScores,
    path: *const c_char,
) -> OctensStatus {
    let Some(scores) = handle.as_ref() else {
        set_error("null scores handle");
        return OctensStatus::NullArgument;
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match write_scores(path, &scores.0) {
        Ok(()) => OctensStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Writes a label handle back to canonical CSV.
///
/// # Safety
/// As [`octens_scores_write`].
#[no_mangle]
pub unsafe extern "C" fn octens_labels_write(
    handle: *const OctensLabels,
    path: *const c_char,
) -> OctensStatus {
    let Some(labels) = handle.as_ref() else {
        set_error("null labels handle");
        return OctensStatus::NullArgument;
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match write_labels(path, &labels.0) {
        Ok(()) => OctensStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Number of sample rows in a score handle (0 for null).
///
/// # Safety
/// `handle` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_rows(handle: *const OctensScores) -> usize {
    handle.as_ref().map_or(0, |s| s.0.n_rows())
}

/// Number of label columns in a score handle (0 for null).
///
/// # Safety
/// `handle` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_cols(handle: *const OctensScores) -> usize {
    handle.as_ref().map_or(0, |s| s.0.n_labels())
}

/// Copies one score cell into `out`.
///
/// # Safety
/// `handle` must be live; `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_get(
    handle: *const OctensScores,
    row: usize,
    col: usize,
    out: *mut f64,
) -> OctensStatus {
    let Some(scores) = handle.as_ref() else {
        set_error("null scores handle");
        return OctensStatus::NullArgument;
    };
    if out.is_null() {
        set_error("null output pointer");
        return OctensStatus::NullArgument;
    }
    if row >= scores.0.n_rows() || col >= scores.0.n_labels() {
        set_error("row or column out of range");
        return OctensStatus::InvalidParameter;
    }
    *out = scores.0.get(row, col);
    OctensStatus::Ok
}

/// Copies one label cell (0 or 1) into `out`.
///
/// # Safety
/// `handle` must be live; `out` must point to a writable u8.
#[no_mangle]
pub unsafe extern "C" fn octens_labels_get(
    handle: *const OctensLabels,
    row: usize,
    col: usize,
    out: *mut u8,
) -> OctensStatus {
    let Some(labels) = handle.as_ref() else {
        set_error("null labels handle");
        return OctensStatus::NullArgument;
    };
    if out.is_null() {
        set_error("null output pointer");
        return OctensStatus::NullArgument;
    }
    if row >= labels.0.n_rows() || col >= labels.0.n_labels() {
        set_error("row or column out of range");
        return OctensStatus::InvalidParameter;
    }
    *out = labels.0.get(row, col);
    OctensStatus::Ok
}

/// Releases a score handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn octens_scores_free(handle: *mut OctensScores) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Releases a label handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn octens_labels_free(handle: *mut OctensLabels) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn collect_branches(
    branches: *const *const OctensScores,
    n_branches: usize,
) -> Result<Vec<(String, ScoreMatrix)>, OctensStatus> {
    if branches.is_null() || n_branches == 0 {
        set_error("null or empty branch array");
        return Err(OctensStatus::NullArgument);
    }
    let slice = std::slice::from_raw_parts(branches, n_branches);
    let mut out = Vec::with_capacity(n_branches);
    for (k, handle) in slice.iter().enumerate() {
        let Some(scores) = handle.as_ref() else {
            set_error("null branch handle");
            return Err(OctensStatus::NullArgument);
        };
        out.push((format!("b{k}"), scores.0.clone()));
    }
    Ok(out)
}

/// Weighted-averages `n_branches` score handles (weights normalized to
/// sum 1; rows restricted to the ids all branches share). Returns a new
/// handle or null.
///
/// # Safety
/// `branches` must point to `n_branches` live handles and `weights` to
/// `n_weights` doubles.
#[no_mangle]
pub unsafe extern "C" fn octens_combine(
    branches: *const *const OctensScores,
    n_branches: usize,
    weights: *const f64,
    n_weights: usize,
) -> *mut OctensScores {
    let raw = match collect_branches(branches, n_branches) {
        Ok(r) => r,
        Err(_) => return std::ptr::null_mut(),
    };
    if weights.is_null() {
        set_error("null weights array");
        return std::ptr::null_mut();
    }
    let w = std::slice::from_raw_parts(weights, n_weights).to_vec();
    let result =
        align_branch_scores(raw).and_then(|(set, _)| combine(&set, &WeightVector::new(w)?));
    match result {
        Ok(m) => Box::into_raw(Box::new(OctensScores(m))),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// [`octens_combine`] followed by thresholding at `threshold`.
///
/// # Safety
/// As [`octens_combine`].
#[no_mangle]
pub unsafe extern "C" fn octens_predict(
    branches: *const *const OctensScores,
    n_branches: usize,
    weights: *const f64,
    n_weights: usize,
    threshold: f64,
) -> *mut OctensLabels {
    let raw = match collect_branches(branches, n_branches) {
        Ok(r) => r,
        Err(_) => return std::ptr::null_mut(),
    };
    if weights.is_null() {
        set_error("null weights array");
        return std::ptr::null_mut();
    }
    let w = std::slice::from_raw_parts(weights, n_weights).to_vec();
    let result = align_branch_scores(raw)
        .and_then(|(set, _)| predict(&set, &WeightVector::new(w)?, threshold));
    match result {
        Ok(m) => Box::into_raw(Box::new(OctensLabels(m))),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Per-label F1 and the macro average for prediction/truth handles (rows
/// are matched by sample id first). `per_label` receives `per_label_len`
/// values, which must equal the label column count.
///
/// # Safety
/// Handles must be live; `per_label` must point to `per_label_len`
/// writable doubles and `macro_f1` to one.
#[no_mangle]
pub unsafe extern "C" fn octens_evaluate(
    pred: *const OctensLabels,
    truth: *const OctensLabels,
    per_label: *mut f64,
    per_label_len: usize,
    macro_f1: *mut f64,
) -> OctensStatus {
    let (Some(pred), Some(truth)) = (pred.as_ref(), truth.as_ref()) else {
        set_error("null label handle");
        return OctensStatus::NullArgument;
    };
    if per_label.is_null() || macro_f1.is_null() {
        set_error("null output pointer");
        return OctensStatus::NullArgument;
    }
    let aligned = octens::data::align(&pred.0, &truth.0);
    let report = match aligned.and_then(|(p, t, _)| evaluate(&p, &t)) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if per_label_len != report.per_label_f1.len() {
        set_error("per_label buffer length does not match label count");
        return OctensStatus::InvalidParameter;
    }
    let out = std::slice::from_raw_parts_mut(per_label, per_label_len);
    out.copy_from_slice(&report.per_label_f1);
    *macro_f1 = report.macro_f1;
    OctensStatus::Ok
}

/// Searches branch weights maximizing macro-F1 against `truth`.
/// `method` 0 = exhaustive grid, 1 = coordinate ascent. The optimal
/// weights land in `out_weights` (length `n_branches`) and the achieved
/// objective in `out_objective`.
///
/// # Safety
/// `branches` must point to `n_branches` live handles, `truth` must be a
/// live handle, and the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn octens_optimize(
    branches: *const *const OctensScores,
    n_branches: usize,
    truth: *const OctensLabels,
    step: f64,
    method: c_int,
    max_rounds: u32,
    threshold: f64,
    out_weights: *mut f64,
    out_objective: *mut f64,
) -> OctensStatus {
    let raw = match collect_branches(branches, n_branches) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let Some(truth) = truth.as_ref() else {
        set_error("null truth handle");
        return OctensStatus::NullArgument;
    };
    if out_weights.is_null() || out_objective.is_null() {
        set_error("null output pointer");
        return OctensStatus::NullArgument;
    }
    let method = match method {
        0 => SearchMethod::ExhaustiveGrid,
        1 => SearchMethod::CoordinateAscent,
        other => {
            set_error(&format!("unknown method {other} (expected 0 or 1)"));
            return OctensStatus::InvalidParameter;
        }
    };
    let result = SearchConfig::new(step, method, max_rounds, threshold).and_then(|cfg| {
        let (set, truth, _) = align_branches_with_truth(raw, truth.0.clone())?;
        optimize_weights(&set, &truth, &cfg)
    });
    match result {
        Ok(opt) => {
            let out = std::slice::from_raw_parts_mut(out_weights, n_branches);
            out.copy_from_slice(opt.weights.raw());
            *out_objective = opt.objective;
            OctensStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Eye-disjoint split of a manifest CSV, written as a `sample_id,split`
/// CSV to `out_path`.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn octens_split_manifest(
    manifest_path: *const c_char,
    val_fraction: f64,
    seed: u64,
    out_path: *const c_char,
) -> OctensStatus {
    let manifest_path = match path_arg(manifest_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let out_path = match path_arg(out_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let result = read_manifest(manifest_path).and_then(|manifest| {
        let split = eyewise_split(&manifest, val_fraction, seed)?;
        std::fs::write(out_path, split_to_csv(&manifest, &split))
            .map_err(|e| Error::io(out_path, e))
    });
    match result {
        Ok(()) => OctensStatus::Ok,
        Err(e) => fail(&e),
    }
}
