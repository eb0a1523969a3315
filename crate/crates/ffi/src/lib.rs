//! C ABI over the `pasa` estimator.
//!
//! Every function returns a [`PasaStatus`]; on failure a message is
//! available from [`pasa_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Matrices
//! are row-major.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};
use pasa::{combine, BatchData, BlockSummary, GlmFamily, PasaError, StreamConfig, StreamState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PasaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    RankDeficient = 4,
    NonConvergence = 5,
    Separation = 6,
    Singular = 7,
    Numerical = 8,
    Schema = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PasaFamily {
    Gaussian = 0,
    Bernoulli = 1,
}

/// Streaming state for one block.
pub struct PasaStream {
    family: GlmFamily,
    p: usize,
    config: StreamConfig,
    state: Option<StreamState>,
}

pub struct PasaBlockSummary(BlockSummary);

pub struct PasaEstimate(pasa::PasaEstimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &PasaError) -> PasaStatus {
    match err.root() {
        PasaError::Dimension(_) => PasaStatus::Dimension,
        PasaError::RankDeficient { .. } => PasaStatus::RankDeficient,
        PasaError::NonConvergence { .. } => PasaStatus::NonConvergence,
        PasaError::Separation { .. } => PasaStatus::Separation,
        PasaError::Singular(_) => PasaStatus::Singular,
        PasaError::Schema(_) | PasaError::Json(_) => PasaStatus::Schema,
        e if e.is_numerical() => PasaStatus::Numerical,
        _ => PasaStatus::InvalidArgument,
    }
}

enum Failure {
    Status(PasaStatus, String),
    Pasa(PasaError),
}

impl From<PasaError> for Failure {
    fn from(e: PasaError) -> Self {
        Failure::Pasa(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(PasaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Status(PasaStatus::InvalidArgument, message.into())
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PasaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PasaStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Pasa(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PasaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

fn boxed<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pasa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Starts an empty stream for a block with `p` coefficients.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pasa_stream_new(family: PasaFamily, p: size_t, out: *mut *mut PasaStream) -> PasaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let family = match family {
            PasaFamily::Gaussian => GlmFamily::GaussianIdentity,
            PasaFamily::Bernoulli => GlmFamily::BernoulliLogit,
        };
        boxed(out, PasaStream { family, p, config: StreamConfig::default(), state: None });
        Ok(())
    })
}

/// Feeds `n` rows: `y` has `n` entries and `x` is `n * p`, row-major.
/// The first push fits the batch from scratch; later pushes apply the
/// renewable update. On failure the stream keeps its previous state.
///
/// # Safety
/// `stream` must come from `pasa_stream_new`; `y` and `x` must point to
/// `n` and `n * p` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pasa_stream_push(
    stream: *mut PasaStream,
    y: *const f64,
    x: *const f64,
    n: size_t,
) -> PasaStatus {
    guard(|| {
        let s = stream.as_mut().ok_or_else(|| null("stream"))?;
        if n == 0 {
            return Err(invalid("batch has no rows"));
        }
        let len = n.checked_mul(s.p).ok_or_else(|| invalid("n * p overflows"))?;
        let y = slice(y, n, "y")?;
        let x = slice(x, len, "x")?;
        let batch = BatchData::new(y.to_vec(), x.to_vec(), s.p)?;
        let next = match &s.state {
            None => StreamState::init_block(s.family, &batch, &s.config)?,
            Some(st) => st.renew_update(&batch, &s.config)?,
        };
        s.state = Some(next);
        Ok(())
    })
}

/// Rows consumed so far.
///
/// # Safety
/// `stream` must come from `pasa_stream_new` and `n_seen` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_stream_rows(stream: *const PasaStream, n_seen: *mut size_t) -> PasaStatus {
    guard(|| {
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        if n_seen.is_null() {
            return Err(null("n_seen"));
        }
        *n_seen = s.state.as_ref().map_or(0, |st| st.n_seen);
        Ok(())
    })
}

/// Snapshot of the stream as a block summary. The stream stays usable.
///
/// # Safety
/// `stream` must come from `pasa_stream_new` and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_stream_finalize(
    stream: *const PasaStream,
    block_id: size_t,
    out: *mut *mut PasaBlockSummary,
) -> PasaStatus {
    guard(|| {
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let state = s.state.as_ref().ok_or_else(|| invalid("stream has seen no data"))?;
        boxed(out, PasaBlockSummary(state.finalize_block(block_id)));
        Ok(())
    })
}

/// # Safety
/// `stream` must come from `pasa_stream_new` or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pasa_stream_free(stream: *mut PasaStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Serializes a summary to a newly allocated JSON string; release it with
/// `pasa_string_free`.
///
/// # Safety
/// `summary` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_summary_to_json(summary: *const PasaBlockSummary, out: *mut *mut c_char) -> PasaStatus {
    guard(|| {
        let s = summary.as_ref().ok_or_else(|| null("summary"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = s.0.to_json()?;
        *out = CString::new(text).map_err(|e| invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_summary_from_json(json: *const c_char, out: *mut *mut PasaBlockSummary) -> PasaStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(format!("json is not UTF-8: {e}")))?;
        boxed(out, PasaBlockSummary(BlockSummary::from_json(text)?));
        Ok(())
    })
}

/// # Safety
/// `summary` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pasa_summary_free(summary: *mut PasaBlockSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn pasa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Combines `k` block summaries.
///
/// # Safety
/// `summaries` must point to `k` live summary handles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_combine(
    summaries: *const *const PasaBlockSummary,
    k: size_t,
    out: *mut *mut PasaEstimate,
) -> PasaStatus {
    guard(|| {
        if summaries.is_null() {
            return Err(null("summaries"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let handles = std::slice::from_raw_parts(summaries, k);
        let mut blocks = Vec::with_capacity(k);
        for (i, &h) in handles.iter().enumerate() {
            let s = h.as_ref().ok_or_else(|| null(&format!("summaries[{i}]")))?;
            blocks.push(s.0.clone());
        }
        let est: pasa::PasaEstimate = combine(&blocks)?;
        boxed(out, PasaEstimate(est));
        Ok(())
    })
}

fn estimate<'a>(est: *const PasaEstimate) -> Result<&'a pasa::PasaEstimate, Failure> {
    unsafe { est.as_ref() }.map(|e| &e.0).ok_or_else(|| null("estimate"))
}

fn check_len(len: usize, want: usize, what: &str) -> Result<(), Failure> {
    if len != want {
        return Err(Failure::Status(PasaStatus::Dimension, format!("{what} has length {len}, expected {want}")));
    }
    Ok(())
}

/// Number of coefficients.
///
/// # Safety
/// `est` must be a live handle and `p` writable.
#[no_mangle]
pub unsafe extern "C" fn pasa_estimate_dim(est: *const PasaEstimate, p: *mut size_t) -> PasaStatus {
    guard(|| {
        let e = estimate(est)?;
        if p.is_null() {
            return Err(null("p"));
        }
        *p = e.p();
        Ok(())
    })
}

/// Copies the `p` coefficients into `beta`.
///
/// # Safety
/// `est` must be a live handle and `beta` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pasa_estimate_beta(est: *const PasaEstimate, beta: *mut f64, len: size_t) -> PasaStatus {
    guard(|| {
        let e = estimate(est)?;
        check_len(len, e.p(), "beta")?;
        slice_mut(beta, len, "beta")?.copy_from_slice(e.beta.as_slice());
        Ok(())
    })
}

/// Copies the `p x p` covariance, row-major, into `cov`.
///
/// # Safety
/// `est` must be a live handle and `cov` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pasa_estimate_cov(est: *const PasaEstimate, cov: *mut f64, len: size_t) -> PasaStatus {
    guard(|| {
        let e = estimate(est)?;
        let p = e.p();
        check_len(len, p * p, "cov")?;
        let out = slice_mut(cov, len, "cov")?;
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = e.cov[(i, j)];
            }
        }
        Ok(())
    })
}

/// Wald intervals at `level` (e.g. 0.95); each output holds `len = p` doubles.
///
/// # Safety
/// `est` must be a live handle and each output point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pasa_estimate_wald(
    est: *const PasaEstimate,
    level: f64,
    lower: *mut f64,
    upper: *mut f64,
    se: *mut f64,
    len: size_t,
) -> PasaStatus {
    guard(|| {
        let e = estimate(est)?;
        check_len(len, e.p(), "interval arrays")?;
        let intervals = e.wald_intervals(level)?;
        let (lo, hi, s) = (slice_mut(lower, len, "lower")?, slice_mut(upper, len, "upper")?, slice_mut(se, len, "se")?);
        for (j, iv) in intervals.iter().enumerate() {
            lo[j] = iv.lower;
            hi[j] = iv.upper;
            s[j] = iv.se;
        }
        Ok(())
    })
}

/// # Safety
/// `est` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pasa_estimate_free(est: *mut PasaEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pasa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
