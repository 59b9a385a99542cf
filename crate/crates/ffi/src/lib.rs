//! C ABI over `tdeval`.
//!
//! Objects are opaque handles created by `tde_*_new` and released by the
//! matching `tde_*_free`. Every fallible call returns a [`TdeStatus`]; on
//! failure [`tde_last_error`] describes what went wrong on the calling
//! thread. Panics never cross the boundary and surface as
//! [`TdeStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdeval::bench::{run_experiment, ExperimentConfig};
use tdeval::{Algorithm, BoyanChain, Error, Evaluator, EvaluatorConfig, FeatureMap, Schedule, StepSize, TraceMode};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SingularUpdate = 4,
    SingularSystem = 5,
    InvalidConfig = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdeAlgorithm {
    Td = 0,
    ResidualTd = 1,
    Lstd = 2,
    Lspe = 3,
    Fgtd = 4,
    Ilstd = 5,
    Egd = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdeTraceMode {
    /// The algorithm's own default.
    Default = 0,
    FixedPoint = 1,
    BellmanResidual = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdeSchedule {
    PerTrajectory = 0,
    PerTransition = 1,
    /// Reduce every `every_k` transitions.
    EveryK = 2,
}

/// Plain-data description of an evaluator. Start from
/// [`tde_evaluator_config_default`] and override fields.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TdeEvaluatorConfig {
    pub algorithm: TdeAlgorithm,
    pub mode: TdeTraceMode,
    pub schedule: TdeSchedule,
    pub every_k: usize,
    /// Step size for TD, residual TD, FGTD and iLSTD.
    pub alpha: f64,
    /// Negative for a constant step; otherwise `α_t = α (c + 1) / (c + t)`.
    pub alpha_decay_c: f64,
    /// iLSTD coordinate updates per reduction.
    pub repeats: usize,
    /// EGD steps per reduction.
    pub egd_steps: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub ridge: f64,
    /// TD-like algorithms only: skip maintaining `A` and `b`.
    pub lean: bool,
}

pub struct TdeBoyanChain(BoyanChain);

pub struct TdeRng(ChaCha8Rng);

pub struct TdeEvaluator(Evaluator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TdeStatus {
    match err {
        Error::SingularUpdate { .. } => TdeStatus::SingularUpdate,
        Error::SingularSystem { .. } => TdeStatus::SingularSystem,
        Error::DimensionMismatch { .. } => TdeStatus::DimensionMismatch,
        Error::InvalidConfig(_) | Error::Config { .. } | Error::Parse { .. } => TdeStatus::InvalidConfig,
        Error::Io { .. } => TdeStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), (TdeStatus, String)>>(f: F) -> TdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TdeStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_error(format!("panic: {message}"));
            TdeStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (TdeStatus, String)>;
}

impl<T> IntoFfi<T> for tdeval::Result<T> {
    fn ffi(self) -> Result<T, (TdeStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (TdeStatus, String) {
    (TdeStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(message: impl Into<String>) -> (TdeStatus, String) {
    (TdeStatus::InvalidArgument, message.into())
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TdeStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (TdeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (TdeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (TdeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(expected: usize, actual: usize) -> Result<(), (TdeStatus, String)> {
    if expected == actual {
        Ok(())
    } else {
        Err((TdeStatus::DimensionMismatch, format!("buffer length {actual}, expected {expected}")))
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TdeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_new(
    n_states: usize,
    feature_spacing: usize,
    out: *mut *mut TdeBoyanChain,
) -> TdeStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        let chain = BoyanChain::new(n_states, feature_spacing).ffi()?;
        *out = Box::into_raw(Box::new(TdeBoyanChain(chain)));
        Ok(())
    })
}

/// # Safety
/// `chain` must come from [`tde_boyan_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_free(chain: *mut TdeBoyanChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of features, or 0 for a null handle.
///
/// # Safety
/// `chain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_n_features(chain: *const TdeBoyanChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.n_features())
}

/// Number of non-terminal states, or 0 for a null handle.
///
/// # Safety
/// `chain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_n_states(chain: *const TdeBoyanChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.n_states())
}

/// Writes the features of `state` (0 is the terminal state) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles; `len` must equal the feature count.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_features(
    chain: *const TdeBoyanChain,
    state: usize,
    out: *mut f64,
    len: usize,
) -> TdeStatus {
    guard(|| {
        let chain = &borrow(chain, "chain")?.0;
        let out = slice_mut(out, len, "out")?;
        check_len(chain.n_features(), len)?;
        if state > chain.n_states() {
            return Err(invalid(format!("state {state} is outside 0..={}", chain.n_states())));
        }
        chain.write_features(state, out);
        Ok(())
    })
}

/// Writes exact state values for states `0..=N` into `out` (`len = N + 1`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_exact_values(
    chain: *const TdeBoyanChain,
    gamma: f64,
    out: *mut f64,
    len: usize,
) -> TdeStatus {
    guard(|| {
        let chain = &borrow(chain, "chain")?.0;
        let out = slice_mut(out, len, "out")?;
        check_len(chain.n_states() + 1, len)?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid(format!("gamma {gamma} is outside [0, 1]")));
        }
        out.copy_from_slice(&chain.exact_values(gamma));
        Ok(())
    })
}

/// RMSE over non-terminal states of the approximation `omega` against the
/// exact values at `gamma`.
///
/// # Safety
/// `omega` must hold `len` doubles and `out` one double.
#[no_mangle]
pub unsafe extern "C" fn tde_boyan_rmse(
    chain: *const TdeBoyanChain,
    omega: *const f64,
    len: usize,
    gamma: f64,
    out: *mut f64,
) -> TdeStatus {
    guard(|| {
        let chain = &borrow(chain, "chain")?.0;
        let omega = slice(omega, len, "omega")?;
        let out = borrow_mut(out, "out")?;
        check_len(chain.n_features(), len)?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid(format!("gamma {gamma} is outside [0, 1]")));
        }
        *out = chain.rmse(omega, &chain.exact_values(gamma));
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tde_rng_new(seed: u64, out: *mut *mut TdeRng) -> TdeStatus {
    guard(|| {
        let out = borrow_mut(out, "out")?;
        *out = Box::into_raw(Box::new(TdeRng(ChaCha8Rng::seed_from_u64(seed))));
        Ok(())
    })
}

/// # Safety
/// `rng` must come from [`tde_rng_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tde_rng_free(rng: *mut TdeRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Defaults for `algorithm`: fixed-point mode (residual for residual TD),
/// per-trajectory reductions, constant `α = 0.1`, one iLSTD repeat, EGD
/// steps 1, `γ = 1`, `λ = 0`, ridge `1e-3`.
#[no_mangle]
pub extern "C" fn tde_evaluator_config_default(algorithm: TdeAlgorithm) -> TdeEvaluatorConfig {
    TdeEvaluatorConfig {
        algorithm,
        mode: TdeTraceMode::Default,
        schedule: TdeSchedule::PerTrajectory,
        every_k: 1,
        alpha: 0.1,
        alpha_decay_c: -1.0,
        repeats: 1,
        egd_steps: 1,
        gamma: 1.0,
        lambda: 0.0,
        ridge: tdeval::gradient::DEFAULT_RIDGE,
        lean: false,
    }
}

fn evaluator_config(c: &TdeEvaluatorConfig) -> EvaluatorConfig {
    let alpha = if c.alpha_decay_c < 0.0 {
        StepSize::Constant(c.alpha)
    } else {
        StepSize::Decay { alpha0: c.alpha, c: c.alpha_decay_c }
    };
    let algorithm = match c.algorithm {
        TdeAlgorithm::Td => Algorithm::Td { alpha },
        TdeAlgorithm::ResidualTd => Algorithm::ResidualTd { alpha },
        TdeAlgorithm::Lstd => Algorithm::Lstd,
        TdeAlgorithm::Lspe => Algorithm::Lspe,
        TdeAlgorithm::Fgtd => Algorithm::Fgtd { alpha },
        TdeAlgorithm::Ilstd => Algorithm::Ilstd { alpha, repeats: c.repeats },
        TdeAlgorithm::Egd => Algorithm::Egd { steps: c.egd_steps },
    };
    let mode = match c.mode {
        TdeTraceMode::Default => None,
        TdeTraceMode::FixedPoint => Some(TraceMode::FixedPoint),
        TdeTraceMode::BellmanResidual => Some(TraceMode::BellmanResidual),
    };
    let schedule = match c.schedule {
        TdeSchedule::PerTrajectory => Schedule::PerTrajectory,
        TdeSchedule::PerTransition => Schedule::PerTransition,
        TdeSchedule::EveryK => Schedule::EveryK(c.every_k),
    };
    EvaluatorConfig { algorithm, mode, schedule, gamma: c.gamma, lambda: c.lambda, ridge: c.ridge, lean: c.lean }
}

/// Creates an evaluator over `dim` features with weights 0.
///
/// # Safety
/// `config` must point to a valid config and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_new(
    dim: usize,
    config: *const TdeEvaluatorConfig,
    out: *mut *mut TdeEvaluator,
) -> TdeStatus {
    guard(|| {
        let config = evaluator_config(borrow(config, "config")?);
        let out = borrow_mut(out, "out")?;
        let ev = Evaluator::new(dim, &config).ffi()?;
        *out = Box::into_raw(Box::new(TdeEvaluator(ev)));
        Ok(())
    })
}

/// # Safety
/// `ev` must come from [`tde_evaluator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_free(ev: *mut TdeEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// # Safety
/// `ev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_begin_trajectory(ev: *mut TdeEvaluator) -> TdeStatus {
    guard(|| {
        borrow_mut(ev, "ev")?.0.begin_trajectory();
        Ok(())
    })
}

/// Feeds one transition; `phi_next` is all zeros for a terminal successor.
/// The temporal difference is written to `td_error` when it is non-null.
///
/// # Safety
/// `phi_s` and `phi_next` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_observe(
    ev: *mut TdeEvaluator,
    phi_s: *const f64,
    phi_next: *const f64,
    len: usize,
    reward: f64,
    td_error: *mut f64,
) -> TdeStatus {
    guard(|| {
        let ev = &mut borrow_mut(ev, "ev")?.0;
        let d = ev.observe(slice(phi_s, len, "phi_s")?, slice(phi_next, len, "phi_next")?, reward, &mut ()).ffi()?;
        if let Some(out) = td_error.as_mut() {
            *out = d;
        }
        Ok(())
    })
}

/// # Safety
/// `ev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_end_trajectory(ev: *mut TdeEvaluator) -> TdeStatus {
    guard(|| borrow_mut(ev, "ev")?.0.end_trajectory(&mut ()).ffi())
}

/// Forces a reduction now.
///
/// # Safety
/// `ev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_reduce(ev: *mut TdeEvaluator) -> TdeStatus {
    guard(|| borrow_mut(ev, "ev")?.0.reduce(&mut ()).ffi().map(drop))
}

/// Scales `μ` by `rho` in `[0, 1]`.
///
/// # Safety
/// `ev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_mu_decay(ev: *mut TdeEvaluator, rho: f64) -> TdeStatus {
    guard(|| borrow_mut(ev, "ev")?.0.mu_decay(rho).ffi())
}

/// Samples `count` episodes from the chain's top state and feeds each one
/// through the evaluator. The evaluator dimension must match the chain.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_run_episodes(
    ev: *mut TdeEvaluator,
    chain: *const TdeBoyanChain,
    rng: *mut TdeRng,
    count: usize,
) -> TdeStatus {
    guard(|| {
        let ev = &mut borrow_mut(ev, "ev")?.0;
        let chain = &borrow(chain, "chain")?.0;
        let rng = &mut borrow_mut(rng, "rng")?.0;
        check_len(ev.engine().dim(), chain.n_features())?;
        for _ in 0..count {
            let episode = chain.sample_episode(rng);
            tdeval::algorithms::run_schedule(ev, chain, std::slice::from_ref(&episode), &mut ()).ffi()?;
        }
        Ok(())
    })
}

/// Copies the weights into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_weights(ev: *const TdeEvaluator, out: *mut f64, len: usize) -> TdeStatus {
    guard(|| {
        let ev = &borrow(ev, "ev")?.0;
        let out = slice_mut(out, len, "out")?;
        check_len(ev.weights().len(), len)?;
        out.copy_from_slice(ev.weights());
        Ok(())
    })
}

/// Replaces the weights; `μ` is recomputed from the accumulated model.
///
/// # Safety
/// `omega` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_set_weights(ev: *mut TdeEvaluator, omega: *const f64, len: usize) -> TdeStatus {
    guard(|| borrow_mut(ev, "ev")?.0.set_weights(slice(omega, len, "omega")?).ffi())
}

/// Copies the maintained gradient `μ` into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_gradient(ev: *const TdeEvaluator, out: *mut f64, len: usize) -> TdeStatus {
    guard(|| {
        let mu = borrow(ev, "ev")?.0.engine().mu();
        let out = slice_mut(out, len, "out")?;
        check_len(mu.len(), len)?;
        out.copy_from_slice(mu);
        Ok(())
    })
}

/// Cumulative multiply-accumulate count, or 0 for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_macs(ev: *const TdeEvaluator) -> u64 {
    ev.as_ref().map_or(0, |e| e.0.engine().macs())
}

/// Transitions observed so far, or 0 for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tde_evaluator_transitions(ev: *const TdeEvaluator) -> u64 {
    ev.as_ref().map_or(0, |e| e.0.engine().transitions_seen())
}

/// Runs the experiment described by the JSON `config` and writes its CSV
/// and SVG files into `out_dir` (NULL uses the config's output directory).
///
/// # Safety
/// `config` must be a NUL-terminated string; `out_dir` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn tde_run_experiment_json(config: *const c_char, out_dir: *const c_char) -> TdeStatus {
    guard(|| {
        let config = ExperimentConfig::from_json(c_str(config, "config")?).ffi()?;
        let dir = if out_dir.is_null() { config.output.dir.clone() } else { c_str(out_dir, "out_dir")?.into() };
        let output = run_experiment(&config).ffi()?;
        tdeval::cli::write_outputs(&output, Path::new(&dir)).ffi()
    })
}
