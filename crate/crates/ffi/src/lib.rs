//! C interface to the synthesis pipeline.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `ddnc_*_new`-style function and released by the matching `*_free`.
//! Functions return a [`DdncStatus`]; on failure the message is available
//! from [`ddnc_last_error`] until the next failing call on the same thread.
//! Strings returned by the library must be released with
//! [`ddnc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ddnc_core::certify::prob_bound_bounded;
use ddnc_core::cli::{demo_config, Certificate, Dataset, Pipeline, RunConfig};
use ddnc_core::synth::SynthesisResult;
use ddnc_core::Error;

/// Result codes. The first five agree with the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdncStatus {
    Ok = 0,
    InvalidInput = 1,
    Divergence = 2,
    Infeasible = 3,
    SolverFailure = 4,
    Refused = 5,
    NullArgument = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Plant, dictionary and settings parsed from a configuration.
pub struct DdncPipeline(Pipeline);
/// Experiment data.
pub struct DdncDataset(Dataset);
/// Synthesis result.
pub struct DdncResult(SynthesisResult);
/// Region certificate.
pub struct DdncCertificate(Certificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DdncStatus {
    match e {
        Error::Divergence { .. } => DdncStatus::Divergence,
        Error::Infeasible(_) => DdncStatus::Infeasible,
        Error::Solver(_) => DdncStatus::SolverFailure,
        Error::Refused(_) => DdncStatus::Refused,
        Error::Io(_) => DdncStatus::Internal,
        _ => DdncStatus::InvalidInput,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Small(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DdncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdncStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            DdncStatus::NullArgument
        }
        Ok(Err(Failure::Small(need))) => {
            set_error(format!("buffer too small, {need} entries needed"));
            DdncStatus::BufferTooSmall
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            DdncStatus::Internal
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::Input(format!("{name} is not valid UTF-8"))))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn json_string<T: serde::Serialize>(v: &T) -> Result<*mut c_char, Failure> {
    let s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    Ok(CString::new(s)
        .map_err(|e| Error::Input(e.to_string()))?
        .into_raw())
}

/// Message of the last failure on this thread, or null. Owned by the
/// library; valid until the next failing call.
#[no_mangle]
pub extern "C" fn ddnc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ddnc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddnc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_pipeline_from_toml(
    toml: *const c_char,
    out: *mut *mut DdncPipeline,
) -> DdncStatus {
    guard(|| {
        let cfg = RunConfig::parse(text(toml, "toml")?)?;
        put(out, DdncPipeline(Pipeline::new(cfg)?))
    })
}

/// Configuration of a shipped example, 1 to 10.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_pipeline_from_demo(
    id: c_int,
    out: *mut *mut DdncPipeline,
) -> DdncStatus {
    guard(|| {
        let id = usize::try_from(id).map_err(|_| Error::Input(format!("invalid demo id {id}")))?;
        put(out, DdncPipeline(Pipeline::new(demo_config(id)?)?))
    })
}

/// Replaces the experiment seed.
///
/// # Safety
/// `p` must be a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn ddnc_pipeline_set_seed(p: *mut DdncPipeline, seed: u64) -> DdncStatus {
    guard(|| {
        let p = p.as_mut().ok_or(Failure::Null("pipeline"))?;
        p.0.config.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddnc_pipeline_free(p: *mut DdncPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs the configured experiments.
///
/// # Safety
/// `p` must be a live pipeline handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_simulate(
    p: *const DdncPipeline,
    out: *mut *mut DdncDataset,
) -> DdncStatus {
    guard(|| {
        let p = &arg(p, "pipeline")?.0;
        put(out, DdncDataset(p.dataset(p.simulate()?)?))
    })
}

/// Loads trajectory CSV files; several files are averaged.
///
/// # Safety
/// `paths` must point to `count` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ddnc_dataset_load(
    p: *const DdncPipeline,
    paths: *const *const c_char,
    count: usize,
    out: *mut *mut DdncDataset,
) -> DdncStatus {
    guard(|| {
        let p = &arg(p, "pipeline")?.0;
        if paths.is_null() {
            return Err(Failure::Null("paths"));
        }
        let files = (0..count)
            .map(|i| text(*paths.add(i), "path").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, DdncDataset(p.load_dataset(&files)?))
    })
}

/// Number of transitions in the (averaged) data.
///
/// # Safety
/// `d` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ddnc_dataset_len(d: *const DdncDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.data.len())
}

/// # Safety
/// `d` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddnc_dataset_free(d: *mut DdncDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Designs a controller with the configured program.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_synthesize(
    p: *const DdncPipeline,
    d: *const DdncDataset,
    out: *mut *mut DdncResult,
) -> DdncStatus {
    guard(|| {
        let p = &arg(p, "pipeline")?.0;
        let d = &arg(d, "dataset")?.0;
        put(out, DdncResult(p.synthesize(d)?))
    })
}

/// Shape of the gain K.
///
/// # Safety
/// `r` must be a live result handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_result_gain_shape(
    r: *const DdncResult,
    rows: *mut usize,
    cols: *mut usize,
) -> DdncStatus {
    guard(|| {
        let k = &arg(r, "result")?.0.k;
        if rows.is_null() || cols.is_null() {
            return Err(Failure::Null("rows/cols"));
        }
        *rows = k.nrows();
        *cols = k.ncols();
        Ok(())
    })
}

/// Copies K into `buf` in row-major order.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ddnc_result_gain(
    r: *const DdncResult,
    buf: *mut f64,
    len: usize,
) -> DdncStatus {
    guard(|| {
        let k = &arg(r, "result")?.0.k;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if len < k.len() {
            return Err(Failure::Small(k.len()));
        }
        let out = std::slice::from_raw_parts_mut(buf, k.len());
        for (i, row) in k.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[i * k.ncols() + j] = *v;
            }
        }
        Ok(())
    })
}

/// Optimal value of the synthesis program.
///
/// # Safety
/// `r` must be a live result handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_result_objective(
    r: *const DdncResult,
    value: *mut f64,
) -> DdncStatus {
    guard(|| {
        let r = &arg(r, "result")?.0;
        *value.as_mut().ok_or(Failure::Null("value"))? = r.objective;
        Ok(())
    })
}

/// Result as JSON; release with [`ddnc_string_free`].
///
/// # Safety
/// `r` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_result_json(
    r: *const DdncResult,
    out: *mut *mut c_char,
) -> DdncStatus {
    guard(|| {
        let s = json_string(&arg(r, "result")?.0)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = s;
        Ok(())
    })
}

/// # Safety
/// `r` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddnc_result_free(r: *mut DdncResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs the configured certificate. `d` may be null; it supplies the
/// experiment states checked by invariance certificates under neglected
/// nonlinearities.
///
/// # Safety
/// Non-null handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_certify(
    p: *const DdncPipeline,
    r: *const DdncResult,
    d: *const DdncDataset,
    out: *mut *mut DdncCertificate,
) -> DdncStatus {
    guard(|| {
        let p = &arg(p, "pipeline")?.0;
        let r = &arg(r, "result")?.0;
        let d = d.as_ref().map(|d| &d.0);
        put(out, DdncCertificate(p.certify(r, d)?))
    })
}

/// Certified level and whether the certificate is empty (gamma is then 0).
///
/// # Safety
/// `c` must be a live certificate handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_certificate_gamma(
    c: *const DdncCertificate,
    gamma: *mut f64,
    empty: *mut bool,
) -> DdncStatus {
    guard(|| {
        let c = &arg(c, "certificate")?.0;
        *gamma.as_mut().ok_or(Failure::Null("gamma"))? = c.gamma.unwrap_or(0.0);
        *empty.as_mut().ok_or(Failure::Null("empty"))? = c.is_empty();
        Ok(())
    })
}

/// Certificate as JSON; release with [`ddnc_string_free`].
///
/// # Safety
/// `c` must be a live certificate handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_certificate_json(
    c: *const DdncCertificate,
    out: *mut *mut c_char,
) -> DdncStatus {
    guard(|| {
        let s = json_string(&arg(c, "certificate")?.0)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = s;
        Ok(())
    })
}

/// # Safety
/// `c` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddnc_certificate_free(c: *mut DdncCertificate) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Bound on the averaged disturbance record for disturbances bounded by
/// `delta`, and the probability that it holds.
///
/// # Safety
/// `bound` and `probability` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddnc_prob_bound_bounded(
    delta: f64,
    sigma_norm: f64,
    horizon: usize,
    repetitions: usize,
    mu: f64,
    channels: usize,
    bound: *mut f64,
    probability: *mut f64,
) -> DdncStatus {
    guard(|| {
        let b = prob_bound_bounded(delta, sigma_norm, horizon, repetitions, mu, channels)?;
        *bound.as_mut().ok_or(Failure::Null("bound"))? = b.bound;
        *probability.as_mut().ok_or(Failure::Null("probability"))? = b.probability;
        Ok(())
    })
}
