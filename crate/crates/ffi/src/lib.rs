//! C ABI over `dcreg`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every function returns a
//! [`DcregStatus`]; on failure a message is available from
//! [`dcreg_last_error_message`] on the same thread. Output pointers are only
//! written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dcreg::censoring::{self, CensoringModel, CensoringSpec, Query};
use dcreg::data::{validate_dataset, Dataset, RawRecord};
use dcreg::estimation::{self, solve_workspace, Approach, CoefficientEstimate, FitWorkspace, SolveOptions, Theta};
use dcreg::inference::with_sandwich;
use dcreg::smoothing::{loess, SmoothingSpec};
use dcreg::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Io = 4,
    NotConverged = 5,
    Singular = 6,
    UnfittedModel = 7,
    Unavailable = 8,
    Panic = 99,
}

/// Estimating function used by [`dcreg_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcregApproach {
    Im = 0,
    A = 1,
    B = 2,
}

impl From<DcregApproach> for Approach {
    fn from(a: DcregApproach) -> Self {
        match a {
            DcregApproach::Im => Approach::Im,
            DcregApproach::A => Approach::A,
            DcregApproach::B => Approach::B,
        }
    }
}

/// Validated dataset.
pub struct DcregDataset(Dataset);

/// Fitted censoring distribution `G`.
pub struct DcregCensoringModel(CensoringModel);

/// Coefficient estimate at one analysis age.
pub struct DcregFit(CoefficientEstimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(DcregStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => DcregStatus::Io,
            Error::FitNonconvergence(_) | Error::CompleteSeparation(_) | Error::Nonconvergence(_) => {
                DcregStatus::NotConverged
            }
            Error::SingularInformation | Error::SingularJacobian(_) => DcregStatus::Singular,
            Error::UnfittedModel => DcregStatus::UnfittedModel,
            Error::ConfigInvalid(_) | Error::InsufficientPoints { .. } | Error::Parse(_) | Error::Json(_) => {
                DcregStatus::InvalidArgument
            }
            _ => DcregStatus::InvalidData,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DcregStatus::InvalidArgument, msg.into())
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DcregStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DcregStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DcregStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(DcregStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(DcregStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(DcregStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(DcregStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dcreg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a dataset from a CSV file with columns `u, delta, v`, optional
/// `c`, and covariates.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcreg_dataset_from_csv(path: *const c_char, out: *mut *mut DcregDataset) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = utf8(path, "path")?;
        let ds = Dataset::from_csv_path(path)?;
        *out = boxed(DcregDataset(ds));
        Ok(())
    })
}

/// Builds a dataset from column arrays. `z` is row-major `n x p`; `c` may be
/// null when censoring ages are unknown.
///
/// # Safety
/// `u`, `delta`, `v` must hold `n` values, `z` must hold `n * p` values, and
/// `c` must be null or hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dcreg_dataset_from_arrays(
    n: usize,
    p: usize,
    u: *const f64,
    delta: *const f64,
    v: *const f64,
    z: *const f64,
    c: *const f64,
    out: *mut *mut DcregDataset,
) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let total = n.checked_mul(p).ok_or_else(|| invalid("n * p overflows"))?;
        let (u, delta, v, z) = (slice(u, n, "u")?, slice(delta, n, "delta")?, slice(v, n, "v")?, slice(z, total, "z")?);
        let c = if c.is_null() { None } else { Some(slice(c, n, "c")?) };
        let raw = (0..n)
            .map(|i| RawRecord {
                u: u[i],
                delta: delta[i],
                v: v[i],
                z: z[i * p..(i + 1) * p].to_vec(),
                c: c.map(|c| c[i]),
            })
            .collect();
        *out = boxed(DcregDataset(validate_dataset(raw, None)?));
        Ok(())
    })
}

/// Number of subjects, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dcreg_dataset_n(ds: *const DcregDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

/// Number of covariates, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dcreg_dataset_p(ds: *const DcregDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.p())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcreg_dataset_free(ds: *mut DcregDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits a censoring model described by a JSON spec, e.g.
/// `{"method":"cox"}` or `{"method":"forest","n_trees":100,"min_node_size":200}`.
///
/// # Safety
/// `ds` must be a live dataset handle, `spec_json` a NUL-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcreg_censoring_fit(
    ds: *const DcregDataset,
    spec_json: *const c_char,
    out: *mut *mut DcregCensoringModel,
) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = deref(ds, "dataset")?;
        let spec: CensoringSpec =
            serde_json::from_str(utf8(spec_json, "spec_json")?).map_err(|e| invalid(format!("censoring spec: {e}")))?;
        *out = boxed(DcregCensoringModel(censoring::fit(&ds.0, &spec)?));
        Ok(())
    })
}

/// `G(t | z, v)`. `subject` is the training index for out-of-bag forest
/// predictions, or negative for a new subject.
///
/// # Safety
/// `z` must hold `p` values and `out` must be valid. A null `model` yields
/// `UnfittedModel`.
#[no_mangle]
pub unsafe extern "C" fn dcreg_censoring_survival(
    model: *const DcregCensoringModel,
    t: f64,
    z: *const f64,
    p: usize,
    v: f64,
    subject: i64,
    out: *mut f64,
) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = model.as_ref().ok_or_else(|| Failure::from(Error::UnfittedModel))?;
        let z = slice(z, p, "z")?;
        let mut q = Query::new(z, v);
        q.subject = usize::try_from(subject).ok();
        *out = model.0.survival_at(t, &q);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcreg_censoring_free(model: *mut DcregCensoringModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the estimating equation at `t0`. With `sandwich` non-zero the
/// sandwich covariance is attached. A fit that does not converge returns
/// `NotConverged` and no handle.
///
/// # Safety
/// `ds` and `model` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit(
    ds: *const DcregDataset,
    model: *const DcregCensoringModel,
    approach: DcregApproach,
    t0: f64,
    sandwich: bool,
    out: *mut *mut DcregFit,
) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = deref(ds, "dataset")?;
        let model = model.as_ref().ok_or_else(|| Failure::from(Error::UnfittedModel))?;
        let mut ws = FitWorkspace::new(Approach::from(approach), t0, &ds.0, &model.0)?;
        let mut est = solve_workspace(&mut ws, &SolveOptions::default())?;
        if sandwich {
            est = with_sandwich(est, &ws)?;
        }
        *out = boxed(DcregFit(est));
        Ok(())
    })
}

/// Number of coefficients (`1 + p`), or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit_dim(fit: *const DcregFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.theta.dim())
}

/// Newton iterations used, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit_iterations(fit: *const DcregFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.iterations)
}

/// Copies `(alpha, beta...)` into `out`, which must hold `len >= dim` values.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit_coefficients(fit: *const DcregFit, out: *mut f64, len: usize) -> DcregStatus {
    guard(|| {
        let fit = deref(fit, "fit")?;
        let theta = fit.0.theta.to_vec();
        copy_out(&theta, out, len)
    })
}

/// Copies the row-major covariance matrix into `out` (`len >= dim * dim`).
/// Returns `Unavailable` when the fit was made without a sandwich.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit_covariance(fit: *const DcregFit, out: *mut f64, len: usize) -> DcregStatus {
    guard(|| {
        let fit = deref(fit, "fit")?;
        let cov = fit
            .0
            .covariance
            .as_ref()
            .ok_or_else(|| Failure(DcregStatus::Unavailable, "fit has no covariance; request the sandwich".into()))?;
        let d = cov.nrows();
        let flat: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| cov[(i, j)])).collect();
        copy_out(&flat, out, len)
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcreg_fit_free(fit: *mut DcregFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(DcregStatus::NullPointer, "out is null".into()));
    }
    if len < values.len() {
        return Err(invalid(format!("output buffer holds {len} values, need {}", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// LOESS smooth of `y` over ascending ages `t`, written to `out` (`m`
/// values).
///
/// # Safety
/// `t`, `y` and `out` must each hold `m` values.
#[no_mangle]
pub unsafe extern "C" fn dcreg_loess(
    t: *const f64,
    y: *const f64,
    m: usize,
    span: f64,
    degree: usize,
    out: *mut f64,
) -> DcregStatus {
    guard(|| {
        let (t, y) = (slice(t, m, "t")?, slice(y, m, "y")?);
        let smoothed = loess(t, y, &SmoothingSpec { span, degree })?;
        copy_out(&smoothed, out, m)
    })
}

/// `expit(alpha + beta'z)` for coefficients `(alpha, beta...)` of length
/// `p + 1`.
///
/// # Safety
/// `coef` must hold `p + 1` values, `z` must hold `p` values, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dcreg_logistic_prob(coef: *const f64, z: *const f64, p: usize, out: *mut f64) -> DcregStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let coef = slice(coef, p + 1, "coef")?;
        let z = slice(z, p, "z")?;
        *out = estimation::logistic_prob(&Theta::from_slice(coef), z);
        Ok(())
    })
}
