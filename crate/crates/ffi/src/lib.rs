//! C ABI for the core library.
//!
//! Objects cross the boundary as opaque handles created by `wagan_*_new`,
//! `wagan_*_load` or a sampling call, and released with the matching
//! `wagan_*_free`. Every fallible function returns a [`WaganStatus`]; on
//! failure `wagan_last_error` describes the problem on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use wagan_core::aitchison::BasisMatrix;
use wagan_core::angular::AngularSample;
use wagan_core::datagen::{sample_logistic, write_csv, LogisticConfig};
use wagan_core::margins::GpdFitSet;
use wagan_core::metrics::{combined_dependence_score, w2_distance};
use wagan_core::sampler::{sample_angles, sample_tail, Generator};
use wagan_core::wgan::checkpoint::Checkpoint;
use wagan_core::{Error, Matrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Checkpoint = 6,
    Panic = 7,
}

/// Row-major matrix of doubles.
pub struct WaganMatrix(Matrix);

/// Per-margin thresholds and GPD fits of a data set.
pub struct WaganFits(GpdFitSet);

/// A trained checkpoint.
pub struct WaganModel {
    generator: Generator,
    k1: usize,
    d: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (WaganStatus, String);

fn status_of(e: &Error) -> WaganStatus {
    match e {
        _ if e.exit_code() == 3 => WaganStatus::Io,
        Error::Csv(_) | Error::Parse { .. } => WaganStatus::Parse,
        Error::Numerical(_) => WaganStatus::Numerical,
        Error::Checkpoint(_) => WaganStatus::Checkpoint,
        _ => WaganStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|l| *l.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WaganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WaganStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WaganStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (WaganStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (WaganStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wagan_last_error() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wagan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major doubles into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut WaganMatrix,
) -> WaganStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or((WaganStatus::InvalidArgument, "matrix too large".into()))?;
        let values = if len == 0 {
            Vec::new()
        } else if data.is_null() {
            return Err(null("data"));
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        let m = Matrix::from_vec(rows, cols, values).map_err(fail)?;
        emit(out, WaganMatrix(m))
    })
}

/// Reads a numeric CSV with a header row.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_read_csv(
    path: *const c_char,
    out: *mut *mut WaganMatrix,
) -> WaganStatus {
    guard(|| {
        let m = wagan_core::cli::io::read_matrix(&path_arg(path)?).map_err(fail)?;
        emit(out, WaganMatrix(m))
    })
}

/// # Safety
/// `m` must be a live matrix handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_write_csv(
    m: *const WaganMatrix,
    path: *const c_char,
) -> WaganStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        write_csv(&m.0, &path_arg(path)?).map_err(fail)
    })
}

/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_rows(m: *const WaganMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_cols(m: *const WaganMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Row-major contents, valid while the handle lives. Null for a null handle.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_data(m: *const WaganMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.0.as_slice().as_ptr())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wagan_matrix_free(m: *mut WaganMatrix) {
    release(m)
}

/// Logistic-dependence sample with Pareto(`alpha`) margins.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_simulate_logistic(
    d: usize,
    theta: f64,
    alpha: f64,
    n: usize,
    seed: u64,
    out: *mut *mut WaganMatrix,
) -> WaganStatus {
    guard(|| {
        let cfg = LogisticConfig {
            d,
            theta,
            alpha,
            n,
            seed,
        };
        let m = sample_logistic(&cfg).map_err(fail)?;
        emit(out, WaganMatrix(m))
    })
}

/// Fits every margin above its `k2`-th largest order statistic.
///
/// # Safety
/// `data` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_fits_new(
    data: *const WaganMatrix,
    k2: usize,
    out: *mut *mut WaganFits,
) -> WaganStatus {
    guard(|| {
        let x = deref(data, "data")?;
        let fits = GpdFitSet::fit(&x.0, k2).map_err(fail)?;
        emit(out, WaganFits(fits))
    })
}

/// # Safety
/// `f` must be null or a live fits handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_fits_dim(f: *const WaganFits) -> usize {
    f.as_ref().map_or(0, |f| f.0.margins.len())
}

/// Threshold and GPD parameters of margin `j` (0-based).
///
/// # Safety
/// `f` must be a live fits handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_fits_get(
    f: *const WaganFits,
    j: usize,
    threshold: *mut f64,
    sigma: *mut f64,
    xi: *mut f64,
) -> WaganStatus {
    guard(|| {
        let f = deref(f, "fits")?;
        let m = f.0.margins.get(j).ok_or_else(|| {
            (
                WaganStatus::InvalidArgument,
                format!("margin {j} out of range for {} margins", f.0.margins.len()),
            )
        })?;
        if threshold.is_null() || sigma.is_null() || xi.is_null() {
            return Err(null("output pointer"));
        }
        *threshold = m.threshold;
        *sigma = m.params.sigma;
        *xi = m.params.xi;
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wagan_fits_free(f: *mut WaganFits) {
    release(f)
}

/// Loads a checkpoint written by `wagan train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_model_load(
    path: *const c_char,
    out: *mut *mut WaganModel,
) -> WaganStatus {
    guard(|| {
        let file = File::open(path_arg(path)?).map_err(|e| fail(e.into()))?;
        let ck = Checkpoint::read(BufReader::new(file)).map_err(fail)?;
        let basis = BasisMatrix::new(ck.d).map_err(fail)?;
        let generator = Generator::new(ck.generator, basis).map_err(fail)?;
        emit(
            out,
            WaganModel {
                generator,
                k1: ck.k1,
                d: ck.d,
            },
        )
    })
}

/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_model_dim(m: *const WaganModel) -> usize {
    m.as_ref().map_or(0, |m| m.d)
}

/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn wagan_model_k1(m: *const WaganModel) -> usize {
    m.as_ref().map_or(0, |m| m.k1)
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wagan_model_free(m: *mut WaganModel) {
    release(m)
}

/// `count` generated angles, one simplex point per row.
///
/// # Safety
/// `m` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_sample_angles(
    m: *const WaganModel,
    count: usize,
    seed: u64,
    out: *mut *mut WaganMatrix,
) -> WaganStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let angles = sample_angles(&m.generator, count, seed).map_err(fail)?;
        emit(out, WaganMatrix(angles.points().clone()))
    })
}

/// `n_star` tail rows on the data scale, each above at least one threshold.
///
/// # Safety
/// `m` and `f` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_sample_tail(
    m: *const WaganModel,
    f: *const WaganFits,
    n_star: usize,
    seed: u64,
    out: *mut *mut WaganMatrix,
) -> WaganStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let f = deref(f, "fits")?;
        let tail = sample_tail(&m.generator, &f.0, m.k1, n_star, seed).map_err(fail)?;
        emit(out, WaganMatrix(tail.rows))
    })
}

/// Exact 2-Wasserstein distance between two uniformly weighted samples.
///
/// # Safety
/// `a` and `b` must be live matrix handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_w2_distance(
    a: *const WaganMatrix,
    b: *const WaganMatrix,
    out: *mut f64,
) -> WaganStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        let w = w2_distance(&a.0, &b.0).map_err(fail)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = w;
        Ok(())
    })
}

/// Mean relative extremal-coefficient error over subsets of size 2 and 3.
/// Rows of both matrices must be points of the simplex.
///
/// # Safety
/// `generated` and `test` must be live matrix handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wagan_dependence_score(
    generated: *const WaganMatrix,
    test: *const WaganMatrix,
    subset_cap: usize,
    seed: u64,
    out: *mut f64,
) -> WaganStatus {
    guard(|| {
        let g = AngularSample::uniform(deref(generated, "generated")?.0.clone()).map_err(fail)?;
        let t = AngularSample::uniform(deref(test, "test")?.0.clone()).map_err(fail)?;
        let (score, _) = combined_dependence_score(&g, &t, subset_cap, seed).map_err(fail)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = score;
        Ok(())
    })
}
