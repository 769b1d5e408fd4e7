//! C ABI over the specpred core.
//!
//! Models are opaque heap handles created by `sp_model_estimate`,
//! `sp_model_load` or `sp_model_finetune` and released with
//! `sp_model_free`. Every fallible call returns an [`SpStatus`]; on failure
//! a human-readable message is available from `sp_last_error_message` until
//! the next call on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use specpred::finetune::{build_pairs, finetune, FinetuneConfig};
use specpred::traffic::{generate_synthetic, SyntheticSpec};
use specpred::{Error, MarkovModel, StateSpace, Trace};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    InvalidArgument = 1,
    TraceTooShort = 2,
    Parse = 3,
    DimensionMismatch = 4,
    HorizonOutOfRange = 5,
    Diverged = 6,
    Format = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

/// State-space construction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpVariant {
    Full = 0,
    Simple = 1,
    Smart = 2,
}

/// Opaque Markov model handle.
pub struct SpModel {
    inner: MarkovModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> SpStatus {
    match err {
        Error::InvalidArgument(_) => SpStatus::InvalidArgument,
        Error::TraceTooShort { .. } => SpStatus::TraceTooShort,
        Error::Parse { .. } => SpStatus::Parse,
        Error::DimensionMismatch { .. } => SpStatus::DimensionMismatch,
        Error::HorizonOutOfRange { .. } => SpStatus::HorizonOutOfRange,
        Error::Diverged { .. } => SpStatus::Diverged,
        Error::Format(_) => SpStatus::Format,
        Error::Io { .. } => SpStatus::Io,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is NULL"));
            SpStatus::NullPointer
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            SpStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: caller guarantees `data` points to `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(data, len) })
}

unsafe fn model_ref<'a>(model: *const SpModel) -> Result<&'a MarkovModel, Failure> {
    // SAFETY: caller guarantees a live handle or NULL.
    unsafe { model.as_ref() }
        .map(|m| &m.inner)
        .ok_or(Failure::Null("model"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(Failure::Null("path"));
    }
    // SAFETY: caller guarantees a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(path) };
    let s = s
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn out_handle(out: *mut *mut SpModel, model: MarkovModel) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let handle = Box::into_raw(Box::new(SpModel { inner: model }));
    // SAFETY: `out` is non-NULL and the caller guarantees it is writable.
    unsafe { *out = handle };
    Ok(())
}

fn trace_from_bits(bits: &[u8]) -> Result<Trace, Failure> {
    Ok(Trace::new(bits.to_vec(), "ffi")?)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next specpred call on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Estimate a Markov model from a binary trace of `len` bytes (each 0 or
/// 1). `max_states` caps the smart table; 0 means no cap.
///
/// # Safety
/// `bits` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_model_estimate(
    bits: *const u8,
    len: usize,
    variant: SpVariant,
    order: usize,
    max_states: usize,
    out: *mut *mut SpModel,
) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let trace = trace_from_bits(unsafe { slice(bits, len, "bits")? })?;
        let cap = (max_states > 0).then_some(max_states);
        let space = match variant {
            SpVariant::Full => StateSpace::full(order)?,
            SpVariant::Simple => StateSpace::simple(order)?,
            SpVariant::Smart => StateSpace::smart(&trace, order, cap)?,
        };
        let mut model = MarkovModel::estimate(space, &trace)?;
        model.meta_mut().max_states = cap;
        out_handle(out, model)
    })
}

/// Fine-tune `model` on a binary trace with the default optimizer (Adam,
/// squared error, softmax parameterization). The tuned copy is written to
/// `out`; `model` is left unchanged.
///
/// # Safety
/// `model` must be a live handle, `bits` must point to `len` readable bytes
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_model_finetune(
    model: *const SpModel,
    bits: *const u8,
    len: usize,
    t_train: usize,
    epochs: usize,
    learning_rate: f64,
    out: *mut *mut SpModel,
) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let model = unsafe { model_ref(model)? };
        let trace = trace_from_bits(unsafe { slice(bits, len, "bits")? })?;
        let cfg = FinetuneConfig {
            t_train,
            epochs,
            learning_rate,
            ..FinetuneConfig::default()
        };
        cfg.validate()?;
        let pairs = build_pairs(model.space(), &trace, t_train)?;
        let outcome = finetune(model, &pairs, &cfg)?;
        out_handle(out, outcome.model)
    })
}

/// Load a model written by `sp_model_save` or the command-line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_model_load(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let path = unsafe { path_arg(path)? };
        out_handle(out, MarkovModel::load(path)?)
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sp_model_save(model: *const SpModel, path: *const c_char) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let model = unsafe { model_ref(model)? };
        let path = unsafe { path_arg(path)? };
        model.save(path)?;
        Ok(())
    })
}

/// Number of composite states.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_model_num_states(model: *const SpModel, out: *mut usize) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let model = unsafe { model_ref(model)? };
        let out = unsafe { out.as_mut() }.ok_or(Failure::Null("out"))?;
        *out = model.space().size();
        Ok(())
    })
}

/// Probability that the channel is active `horizon` slots after the sensed
/// window (most recent slot first), and the thresholded decision.
/// Either output pointer may be NULL.
///
/// # Safety
/// `model` must be a live handle and `sensed` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_model_predict(
    model: *const SpModel,
    sensed: *const u8,
    len: usize,
    horizon: usize,
    prob: *mut f64,
    hard: *mut u8,
) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let model = unsafe { model_ref(model)? };
        let sensed = unsafe { slice(sensed, len, "sensed")? };
        let p = model.predict(sensed, horizon)?;
        if let Some(prob) = unsafe { prob.as_mut() } {
            *prob = p.prob;
        }
        if let Some(hard) = unsafe { hard.as_mut() } {
            *hard = p.hard;
        }
        Ok(())
    })
}

/// Active probabilities for horizons `1..=max_horizon` written to `out`.
///
/// # Safety
/// `model` must be a live handle, `sensed` must point to `len` bytes and
/// `out` to `max_horizon` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sp_model_active_curve(
    model: *const SpModel,
    sensed: *const u8,
    len: usize,
    max_horizon: usize,
    out: *mut f64,
) -> SpStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantees.
        let model = unsafe { model_ref(model)? };
        let sensed = unsafe { slice(sensed, len, "sensed")? };
        let curve = model.active_curve(sensed, max_horizon)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        // SAFETY: caller guarantees room for `max_horizon` doubles.
        unsafe { ptr::copy_nonoverlapping(curve.as_ptr(), out, curve.len()) };
        Ok(())
    })
}

/// Write `n_slots` synthetic block-periodic states (0 or 1) to `out`.
///
/// # Safety
/// `out` must point to `n_slots` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_generate_synthetic(
    block_size: usize,
    n_slots: usize,
    start_state: u8,
    outlier_rate: f64,
    seed: u64,
    out: *mut u8,
) -> SpStatus {
    guard(|| {
        let trace = generate_synthetic(&SyntheticSpec {
            block_size,
            n_slots,
            start_state,
            outlier_rate,
            rng_seed: seed,
        })?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        // SAFETY: caller guarantees room for `n_slots` bytes.
        unsafe { ptr::copy_nonoverlapping(trace.states().as_ptr(), out, trace.len()) };
        Ok(())
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(model) });
    }
}
