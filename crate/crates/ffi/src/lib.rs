//! C interface. Every function returns a [`FamoStatus`]; on failure the
//! message is available from [`famo_last_error`] on the same thread.
//! Arrays are caller-owned `double` buffers of the stated length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use famo::dual::{solve_min_norm_on_simplex, MinNormOptions};
use famo::error::Error;
use famo::famo::{logit_gradient, renormalize, FamoConfig, FamoWeighting, LogitMode};
use famo::harness::{run, RunConfig};
use famo::jacobian::{GradientKind, TaskJacobian};
use famo::problems::shift_losses;
use famo::simplex::{project_simplex, softmax};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    NotConverged = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FamoStatus {
    match e {
        Error::InvalidInput(_) | Error::Precondition(_) => FamoStatus::InvalidInput,
        Error::DimensionMismatch { .. } => FamoStatus::DimensionMismatch,
        Error::Numerical(_) => FamoStatus::Numerical,
        Error::NotConverged { .. } => FamoStatus::NotConverged,
        Error::Config(_) | Error::Json(_) => FamoStatus::Config,
        Error::FrontCacheMissing(_) | Error::Io(_) | Error::Csv(_) => FamoStatus::Io,
    }
}

struct Fail(FamoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FamoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FamoStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FamoStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(FamoStatus::NullPointer, format!("{name} is null"))
}

unsafe fn input<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn output<'a>(p: *mut f64, n: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn famo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn famo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `out = softmax(xi)`, both of length `k`.
///
/// # Safety
/// `xi` and `out` must point to `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn famo_softmax(xi: *const f64, k: usize, out: *mut f64) -> FamoStatus {
    guard(|| {
        let z = softmax(input(xi, k, "xi")?)?;
        output(out, k, "out")?.copy_from_slice(z.as_slice());
        Ok(())
    })
}

/// Euclidean projection of `y` onto the probability simplex.
///
/// # Safety
/// `y` and `out` must point to `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn famo_project_simplex(y: *const f64, k: usize, out: *mut f64) -> FamoStatus {
    guard(|| {
        let z = project_simplex(input(y, k, "y")?)?;
        output(out, k, "out")?.copy_from_slice(z.as_slice());
        Ok(())
    })
}

/// Min-norm point of the convex hull of `k` row-major rows of length `m`.
/// `direction` (length `m`) and `gap` may be null. Returns
/// `FAMO_STATUS_NOT_CONVERGED` with outputs filled when the duality gap
/// stays above tolerance.
///
/// # Safety
/// `rows` must point to `k·m` doubles and `weights` to `k`; non-null
/// optional outputs must have their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn famo_min_norm(
    rows: *const f64,
    k: usize,
    m: usize,
    weights: *mut f64,
    direction: *mut f64,
    gap: *mut f64,
) -> FamoStatus {
    guard(|| {
        if k == 0 || m == 0 {
            return Err(Fail(FamoStatus::InvalidInput, "k and m must be positive".into()));
        }
        let flat = input(rows, k * m, "rows")?;
        let jac = TaskJacobian::from_rows(flat.chunks(m).map(<[f64]>::to_vec).collect(), GradientKind::RawLoss)?;
        let s = solve_min_norm_on_simplex(&jac, MinNormOptions::default())?;
        output(weights, k, "weights")?.copy_from_slice(s.weights.as_slice());
        if !direction.is_null() {
            output(direction, m, "direction")?.copy_from_slice(&s.direction);
        }
        if !gap.is_null() {
            *gap = s.gap;
        }
        if s.converged {
            Ok(())
        } else {
            Err(Error::NotConverged { iterations: s.iterations, residual: s.gap }.into())
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FamoWeighterConfig {
    pub beta: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Nonzero: moment optimizer on the logits. Zero: plain gradient steps.
    pub moment: i32,
}

/// Default hyperparameters.
#[no_mangle]
pub extern "C" fn famo_weighter_config_default() -> FamoWeighterConfig {
    let d = FamoConfig::default();
    FamoWeighterConfig { beta: d.beta, gamma: d.gamma, eps: d.eps, moment: 1 }
}

/// Task weighting state for a training loop owned by the caller: get the
/// weights for the current losses, take one step on the weighted gradient,
/// then report the losses before and after.
pub struct FamoWeighter {
    weighting: FamoWeighting,
    min_losses: Vec<f64>,
}

impl FamoWeighter {
    fn shifted(&self, losses: &[f64]) -> Result<Vec<f64>, Fail> {
        let s = shift_losses(losses, &self.min_losses, self.weighting.config().eps);
        match s.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            None => Ok(s),
            Some(i) => Err(Fail(FamoStatus::InvalidInput, format!("shifted loss {i} is {}", s[i]))),
        }
    }
}

unsafe fn handle<'a>(h: *mut FamoWeighter) -> Result<&'a mut FamoWeighter, Fail> {
    h.as_mut().ok_or_else(|| null("handle"))
}

/// Creates a weighter for `k` tasks. `config` null means defaults;
/// `min_losses` null means zeros.
///
/// # Safety
/// Non-null `min_losses` must point to `k` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_new(
    k: usize,
    config: *const FamoWeighterConfig,
    min_losses: *const f64,
    out: *mut *mut FamoWeighter,
) -> FamoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = config.as_ref().copied().unwrap_or_else(|| famo_weighter_config_default());
        let mode = if c.moment != 0 { LogitMode::Moment } else { LogitMode::PlainGd };
        let cfg = FamoConfig { beta: c.beta, gamma: c.gamma, eps: c.eps, logit_mode: mode, ..FamoConfig::default() };
        let weighting = FamoWeighting::new(k, cfg)?;
        let min_losses = if min_losses.is_null() { vec![0.0; k] } else { input(min_losses, k, "min_losses")?.to_vec() };
        *out = Box::into_raw(Box::new(FamoWeighter { weighting, min_losses }));
        Ok(())
    })
}

/// Number of tasks, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_num_tasks(h: *const FamoWeighter) -> usize {
    h.as_ref().map_or(0, |w| w.min_losses.len())
}

/// Gradient weights for the current raw `losses`: `w_i ∝ z_i/(ℓ_i − ℓ_i* + ε)`,
/// summing to one.
///
/// # Safety
/// `losses` and `weights` must point to `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_weights(
    h: *mut FamoWeighter,
    losses: *const f64,
    weights: *mut f64,
) -> FamoStatus {
    guard(|| {
        let w = handle(h)?;
        let k = w.min_losses.len();
        let s = w.shifted(input(losses, k, "losses")?)?;
        let (gw, _) = renormalize(&s, w.weighting.weights().as_slice())?;
        output(weights, k, "weights")?.copy_from_slice(gw.as_slice());
        Ok(())
    })
}

/// Current simplex weights `softmax(ξ)`.
///
/// # Safety
/// `z` must point to `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_logit_weights(h: *mut FamoWeighter, z: *mut f64) -> FamoStatus {
    guard(|| {
        let w = handle(h)?;
        let k = w.min_losses.len();
        output(z, k, "z")?.copy_from_slice(w.weighting.weights().as_slice());
        Ok(())
    })
}

/// Updates the logits from the raw losses before and after a step.
///
/// # Safety
/// `prev` and `curr` must point to `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_update(h: *mut FamoWeighter, prev: *const f64, curr: *const f64) -> FamoStatus {
    guard(|| {
        let w = handle(h)?;
        let k = w.min_losses.len();
        let p = w.shifted(input(prev, k, "prev")?)?;
        let c = w.shifted(input(curr, k, "curr")?)?;
        let delta = logit_gradient(w.weighting.logits(), &p, &c)?;
        w.weighting.apply(&delta)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn famo_weighter_free(h: *mut FamoWeighter) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Runs one JSON run configuration and returns its summary as JSON in
/// `*summary`, to be released with [`famo_string_free`].
///
/// # Safety
/// `config_json` must be a nul-terminated string; `summary` must be valid.
#[no_mangle]
pub unsafe extern "C" fn famo_run_json(config_json: *const c_char, summary: *mut *mut c_char) -> FamoStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if summary.is_null() {
            return Err(null("summary"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Fail(FamoStatus::InvalidInput, format!("config is not UTF-8: {e}")))?;
        let s = run(&RunConfig::from_json(text)?)?;
        let json = serde_json::to_string(&s).map_err(Error::from)?;
        *summary = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn famo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
