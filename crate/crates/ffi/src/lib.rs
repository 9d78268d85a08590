//! C ABI over `simplerules`.
//!
//! Every function returns an [`SrStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be fetched
//! with [`sr_last_error_message`]. Strings handed out by this library must
//! be released with [`sr_string_free`], handles with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use simplerules::data::{load_csv, stratified_kfold, Action, CsvOptions, Dataset};
use simplerules::error::{DataError, ErrorKind};
use simplerules::metrics::auc;
use simplerules::noise::auc_under_noise;
use simplerules::policy::{rr_counterfactual, solve_gamma, SensitivityParams};
use simplerules::srr::{build_scorecard, Scorecard, SrrConfig};
use simplerules::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// A loaded table of features and binary labels.
pub struct SrDataset(Dataset);

/// An integer-weight scorecard, optionally with a release threshold.
pub struct SrScorecard(Scorecard);

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

struct Failure(SrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match (&e, e.kind()) {
            (Error::Data(DataError::Io { .. }), _) => SrStatus::Io,
            (_, ErrorKind::Usage) => SrStatus::InvalidArgument,
            (_, ErrorKind::Data) => SrStatus::Data,
            (_, ErrorKind::Numerical) => SrStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Error::from(e).into()
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(SrStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SrStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
            status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SrStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(SrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(SrStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("string contains an interior NUL"))
}

/// Copy of the calling thread's last error message, or null when the last
/// call succeeded. Free with `sr_string_free`.
#[no_mangle]
pub extern "C" fn sr_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .and_then(|m| CString::new(m.replace('\0', " ")).ok())
            .map_or(std::ptr::null_mut(), CString::into_raw)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a comma-separated file whose column `label` holds the binary
/// outcome; every other column is a numeric feature.
///
/// # Safety
/// `path` and `label` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_dataset_load_csv(
    path: *const c_char,
    label: *const c_char,
    out: *mut *mut SrDataset,
) -> SrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let label = str_arg(label, "label")?;
        let out = out_arg(out, "out")?;
        let ds = load_csv(path, &CsvOptions::new(label))?;
        *out = Box::into_raw(Box::new(SrDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from `sr_dataset_load_csv`.
#[no_mangle]
pub unsafe extern "C" fn sr_dataset_free(ds: *mut SrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Row and feature counts.
///
/// # Safety
/// `ds` must be a live handle; `rows` and `features` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_dataset_shape(
    ds: *const SrDataset,
    rows: *mut usize,
    features: *mut usize,
) -> SrStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        *out_arg(rows, "rows")? = ds.n();
        *out_arg(features, "features")? = ds.p();
        Ok(())
    })
}

/// Name of feature `index`. Free the result with `sr_string_free`.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_dataset_feature_name(
    ds: *const SrDataset,
    index: usize,
    out: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        let out = out_arg(out, "out")?;
        let name = ds
            .feature_names()
            .get(index)
            .ok_or_else(|| invalid(format!("feature {index} of {}", ds.p())))?;
        *out = owned_string(name.clone())?;
        Ok(())
    })
}

/// Select-regress-round with at most `k` features and weights in
/// `[-m, m]`; the lasso penalty is chosen by `folds`-fold stratified
/// cross-validation seeded by `seed`.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_build(
    ds: *const SrDataset,
    k: usize,
    m: u32,
    folds: usize,
    seed: u64,
    out: *mut *mut SrScorecard,
) -> SrStatus {
    guard(|| {
        let ds = &ref_arg(ds, "dataset")?.0;
        let out = out_arg(out, "out")?;
        let f = stratified_kfold(ds.labels(), folds, seed)?;
        let card = build_scorecard(ds, k, m, &f, &SrrConfig::default())?;
        *out = Box::into_raw(Box::new(SrScorecard(card)));
        Ok(())
    })
}

/// # Safety
/// `card` must be null or a scorecard handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_free(card: *mut SrScorecard) {
    if !card.is_null() {
        drop(Box::from_raw(card));
    }
}

/// Sets the release threshold: release iff score < `threshold`.
///
/// # Safety
/// `card` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_set_threshold(
    card: *mut SrScorecard,
    threshold: f64,
) -> SrStatus {
    guard(|| {
        let card = out_arg(card, "scorecard")?;
        if !threshold.is_finite() {
            return Err(invalid("threshold must be finite"));
        }
        card.0.threshold = Some(threshold);
        Ok(())
    })
}

/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_from_json(
    json: *const c_char,
    out: *mut *mut SrScorecard,
) -> SrStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SrScorecard(Scorecard::from_json(text)?)));
        Ok(())
    })
}

/// JSON form of the card. Free the result with `sr_string_free`.
///
/// # Safety
/// `card` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_to_json(
    card: *const SrScorecard,
    out: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let card = &ref_arg(card, "scorecard")?.0;
        let out = out_arg(out, "out")?;
        *out = owned_string(card.to_json())?;
        Ok(())
    })
}

unsafe fn named_row(
    names: *const *const c_char,
    values: *const f64,
    len: usize,
) -> Result<(Vec<String>, Vec<f64>), Failure> {
    let ptrs = slice_arg(names, len, "names")?;
    let vals = slice_arg(values, len, "values")?;
    let names = ptrs
        .iter()
        .map(|&p| str_arg(p, "feature name").map(String::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((names, vals.to_vec()))
}

/// Score of one row given as `len` parallel (name, value) entries. Every
/// scorecard feature must appear among the names.
///
/// # Safety
/// `names` and `values` must each point to `len` elements.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_score_row(
    card: *const SrScorecard,
    names: *const *const c_char,
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> SrStatus {
    guard(|| {
        let card = &ref_arg(card, "scorecard")?.0;
        let out = out_arg(out, "out")?;
        let (names, vals) = named_row(names, values, len)?;
        *out = card.score(&names, &vals)?;
        Ok(())
    })
}

/// Writes 1 (release) or 0 (withhold). The card needs a threshold.
///
/// # Safety
/// As for `sr_scorecard_score_row`.
#[no_mangle]
pub unsafe extern "C" fn sr_scorecard_decide(
    card: *const SrScorecard,
    names: *const *const c_char,
    values: *const f64,
    len: usize,
    release: *mut i32,
) -> SrStatus {
    guard(|| {
        let card = &ref_arg(card, "scorecard")?.0;
        let out = out_arg(release, "release")?;
        let (names, vals) = named_row(names, values, len)?;
        *out = i32::from(card.decide(&names, &vals)? == Action::Release);
        Ok(())
    })
}

/// Area under the ROC curve of `scores` against 0/1 `labels`, ties
/// counted half.
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sr_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> SrStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let y = slice_arg(labels, n, "labels")?;
        let out = out_arg(out, "out")?;
        *out = auc(s, y)?;
        Ok(())
    })
}

/// AUC after adding Gaussian noise with variance ratio `gamma` to
/// binormal scores whose noiseless AUC is `auc_y`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_auc_under_noise(auc_y: f64, gamma: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = auc_under_noise(auc_y, gamma)?;
        Ok(())
    })
}

/// Release intercept `gamma` such that the release probability averaged
/// over the hidden covariate equals `q`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_solve_gamma(p_u: f64, alpha: f64, q: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = solve_gamma(p_u, alpha, q)?;
        Ok(())
    })
}

/// Sensitivity-adjusted adverse-outcome probability under the action not
/// taken. `observed_release` is nonzero when the case was released and
/// `q` is its estimated release probability.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sr_rr_counterfactual(
    rhat_release: f64,
    rhat_withhold: f64,
    p_u: f64,
    alpha: f64,
    delta_release: f64,
    delta_withhold: f64,
    observed_release: i32,
    q: f64,
    out: *mut f64,
) -> SrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let params = SensitivityParams::new(p_u, alpha, delta_release, delta_withhold)?;
        let observed = if observed_release != 0 {
            Action::Release
        } else {
            Action::Withhold
        };
        *out = rr_counterfactual(rhat_release, rhat_withhold, &params, observed, q)?;
        Ok(())
    })
}
