//! Reducers: each algorithm is a rule that turns the running gradient `μ`
//! into a weight update `δω`, plus what it does to `μ` afterwards.
//!
//! | algorithm    | `δω`              | `μ` afterwards |
//! |--------------|-------------------|----------------|
//! | TD(λ)        | `α μ`             | `0`            |
//! | residual TD  | `α μ` (residual trace) | `0`       |
//! | LSTD(λ)      | `A⁻¹ μ`           | `0`            |
//! | LSPE(λ)      | `(ΦᵀΦ)⁻¹ μ`       | `μ − A δω`     |
//! | full-gradient TD | `α μ`         | `μ − A δω`     |
//! | iLSTD        | `α μ_i e_i`, `i = argmax |μ_i|` | `μ − A δω` |
//! | EGD TD       | equi-gradient steps | `μ − A δω`   |
//!
//! The last four keep `μ = b − Aω` exact, so older trajectories keep being
//! reduced by later updates.

mod egd;

use serde::{Deserialize, Serialize};

pub use egd::{egd_reduce, ActiveSet, EgdStep};

use crate::error::{Error, Result};
use crate::gradient::{EngineOptions, GradientState, TraceMode};
use crate::linalg::{argmax_abs, axpy, norm_inf, Lu};
use crate::mdp::{FeatureMap, Trajectory};

/// Step size, indexed by the 1-based trajectory counter `t`.
///
/// Parsed from JSON either as a bare number (constant) or as
/// `{"alpha0": .., "c": ..}` for `α_t = α₀ (c + 1) / (c + t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Constant(f64),
    Decay { alpha0: f64, c: f64 },
}

impl StepSize {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSize::Constant(a) => a,
            StepSize::Decay { alpha0, c } => alpha0 * (c + 1.0) / (c + t.max(1) as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSize::Constant(a) => a > 0.0 && a.is_finite(),
            StepSize::Decay { alpha0, c } => alpha0 > 0.0 && alpha0.is_finite() && c >= 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid step size {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    Td,
    ResidualTd,
    Lstd,
    Lspe,
    Fgtd,
    Ilstd,
    Egd,
}

/// An algorithm together with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    Td { alpha: StepSize },
    ResidualTd { alpha: StepSize },
    Lstd,
    Lspe,
    Fgtd { alpha: StepSize },
    Ilstd { alpha: StepSize, repeats: usize },
    Egd { steps: usize },
}

impl Algorithm {
    pub fn kind(&self) -> ReducerKind {
        match self {
            Algorithm::Td { .. } => ReducerKind::Td,
            Algorithm::ResidualTd { .. } => ReducerKind::ResidualTd,
            Algorithm::Lstd => ReducerKind::Lstd,
            Algorithm::Lspe => ReducerKind::Lspe,
            Algorithm::Fgtd { .. } => ReducerKind::Fgtd,
            Algorithm::Ilstd { .. } => ReducerKind::Ilstd,
            Algorithm::Egd { .. } => ReducerKind::Egd,
        }
    }

    pub fn default_mode(&self) -> TraceMode {
        match self {
            Algorithm::ResidualTd { .. } => TraceMode::BellmanResidual,
            _ => TraceMode::FixedPoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Algorithm::Td { alpha } | Algorithm::ResidualTd { alpha } | Algorithm::Fgtd { alpha } => alpha.validate(),
            Algorithm::Ilstd { alpha, repeats } => {
                if *repeats == 0 {
                    return Err(Error::InvalidConfig("iLSTD repeats must be >= 1".into()));
                }
                alpha.validate()
            }
            Algorithm::Egd { steps } if *steps == 0 => Err(Error::InvalidConfig("EGD steps must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Engine options for this algorithm. `lean` is honoured only by the TD
    /// variants, which never read `A`.
    pub fn engine_options(
        &self,
        mode: TraceMode,
        gamma: f64,
        lambda: f64,
        ridge: f64,
        lean: bool,
    ) -> Result<EngineOptions> {
        let td_like = matches!(self.kind(), ReducerKind::Td | ReducerKind::ResidualTd);
        if lean && !td_like {
            return Err(Error::InvalidConfig(format!("{:?} needs A; lean is TD-only", self.kind())));
        }
        if self.kind() == ReducerKind::ResidualTd && mode != TraceMode::BellmanResidual {
            return Err(Error::InvalidConfig("residual TD always uses the Bellman-residual gradient".into()));
        }
        let mut opts = EngineOptions::new(mode, gamma, lambda);
        opts.ridge = ridge;
        opts.lean = lean;
        opts.track_inverse = self.kind() == ReducerKind::Lstd;
        opts.track_gram_inverse = self.kind() == ReducerKind::Lspe;
        Ok(opts)
    }
}

/// When reductions happen. The end of every trajectory is always included.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    PerTransition,
    #[default]
    PerTrajectory,
    EveryK(usize),
}

impl Schedule {
    pub fn validate_for(&self, kind: ReducerKind) -> Result<()> {
        match self {
            Schedule::EveryK(0) => Err(Error::InvalidConfig("every_k needs k >= 1".into())),
            Schedule::PerTrajectory => Ok(()),
            _ if kind == ReducerKind::Egd => Err(Error::InvalidConfig(
                "EGD reduces only at trajectory ends: samples may not arrive between its steps".into(),
            )),
            _ => Ok(()),
        }
    }

    fn due(&self, since_reduce: usize) -> bool {
        match *self {
            Schedule::PerTransition => true,
            Schedule::PerTrajectory => false,
            Schedule::EveryK(k) => since_reduce >= k,
        }
    }
}

/// Hooks invoked while driving an evaluation. All methods default to no-ops.
pub trait Observer {
    fn transition(&mut self, _gs: &GradientState, _omega: &[f64], _td_error: f64) {}
    fn reduction(&mut self, _kind: ReducerKind, _gs: &GradientState, _omega: &[f64], _delta: &[f64]) {}
    fn egd_step(&mut self, _gs: &GradientState, _omega: &[f64], _step: &EgdStep) {}
    fn trajectory_end(&mut self, _index: usize, _gs: &GradientState, _omega: &[f64]) {}
}

impl Observer for () {}

/// TD(λ) / residual-gradient TD: `ω += αμ`, then `μ ← 0`.
pub fn td_reduce(gs: &mut GradientState, omega: &mut [f64], alpha: f64) -> Result<Vec<f64>> {
    gs.check_dim(omega.len())?;
    let delta: Vec<f64> = gs.mu().iter().map(|m| alpha * m).collect();
    apply(omega, &delta);
    gs.mu_mut().iter_mut().for_each(|m| *m = 0.0);
    gs.add_macs(gs.dim() as u64);
    Ok(delta)
}

/// LSTD(λ): `ω += A⁻¹μ`, which solves `b − Aω = 0`; then `μ ← 0`.
pub fn lstd_reduce(gs: &mut GradientState, omega: &mut [f64]) -> Result<Vec<f64>> {
    gs.check_dim(omega.len())?;
    let n = gs.dim() as u64;
    let a_inv = gs.a_inv().ok_or_else(|| Error::InvalidConfig("LSTD needs an engine that maintains A⁻¹".into()))?;
    let mut delta = a_inv.mul_vec(gs.mu());
    apply(omega, &delta);
    gs.add_macs(2 * n * n);

    let residual = norm_inf(&gs.gradient_linear_form(omega)?);
    let scale = 1.0 + norm_inf(gs.b()?);
    if residual > LSTD_ROOT_TOL * scale {
        // accumulated drift in A⁻¹: solve directly from A and b
        let lu = Lu::factor(gs.a()?)?;
        let root = lu.solve(gs.b()?);
        gs.add_macs(lu.macs() + lu.solve_macs());
        for ((d, w), r) in delta.iter_mut().zip(omega.iter_mut()).zip(&root) {
            *d += r - *w;
            *w = *r;
        }
    }
    gs.mu_mut().iter_mut().for_each(|m| *m = 0.0);
    Ok(delta)
}

/// Relative tolerance on `‖b − Aω‖∞` after an LSTD reduction.
pub const LSTD_ROOT_TOL: f64 = 1e-6;

/// LSPE(λ): `ω += (ΦᵀΦ + εI)⁻¹μ`, then `μ −= A δω`.
pub fn lspe_reduce(gs: &mut GradientState, omega: &mut [f64]) -> Result<Vec<f64>> {
    gs.check_dim(omega.len())?;
    let gram_inv =
        gs.gram_inv().ok_or_else(|| Error::InvalidConfig("LSPE needs an engine that maintains (ΦᵀΦ)⁻¹".into()))?;
    let delta = gram_inv.mul_vec(gs.mu());
    let n = gs.dim() as u64;
    gs.add_macs(n * n);
    full_gradient_update(gs, omega, &delta)?;
    Ok(delta)
}

/// Full-gradient TD: `ω += αμ`, then `μ −= A δω`.
pub fn fgtd_reduce(gs: &mut GradientState, omega: &mut [f64], alpha: f64) -> Result<Vec<f64>> {
    gs.check_dim(omega.len())?;
    let delta: Vec<f64> = gs.mu().iter().map(|m| alpha * m).collect();
    gs.add_macs(gs.dim() as u64);
    full_gradient_update(gs, omega, &delta)?;
    Ok(delta)
}

/// iLSTD: move only the most correlated coordinate, `ω_i += α μ_i`, and
/// subtract the matching column of `A` from `μ`.
pub fn ilstd_reduce(gs: &mut GradientState, omega: &mut [f64], alpha: f64) -> Result<Vec<f64>> {
    gs.check_dim(omega.len())?;
    let n = gs.dim();
    let mut delta = vec![0.0; n];
    let i = argmax_abs(gs.mu());
    let step = alpha * gs.mu()[i];
    if step == 0.0 {
        return Ok(delta);
    }
    delta[i] = step;
    omega[i] += step;
    let column = gs.a()?.column(i);
    axpy(-step, &column, gs.mu_mut());
    gs.add_macs(n as u64 + 1);
    Ok(delta)
}

/// Scales `μ` by `rho`, forgetting part of the not-yet-reduced gradient.
///
/// For `rho < 1` this intentionally breaks `μ = b − Aω`.
pub fn mu_decay(gs: &mut GradientState, rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("mu decay {rho} outside [0, 1]")));
    }
    gs.mu_mut().iter_mut().for_each(|m| *m *= rho);
    gs.add_macs(gs.dim() as u64);
    Ok(())
}

fn apply(omega: &mut [f64], delta: &[f64]) {
    for (w, d) in omega.iter_mut().zip(delta) {
        *w += d;
    }
}

/// `ω += δω; μ −= A δω`
fn full_gradient_update(gs: &mut GradientState, omega: &mut [f64], delta: &[f64]) -> Result<()> {
    apply(omega, delta);
    let shift = gs.a()?.mul_vec(delta);
    axpy(-1.0, &shift, gs.mu_mut());
    let n = gs.dim() as u64;
    gs.add_macs(n * n);
    Ok(())
}

/// An algorithm with the per-run state its reductions need.
#[derive(Clone, Debug)]
pub struct Reducer {
    algorithm: Algorithm,
    active: ActiveSet,
    trajectories: u64,
}

impl Reducer {
    pub fn new(algorithm: Algorithm) -> Result<Self> {
        algorithm.validate()?;
        Ok(Reducer { algorithm, active: ActiveSet::default(), trajectories: 0 })
    }

    pub fn algorithm(&self) -> &Algorithm {
        &self.algorithm
    }

    pub fn kind(&self) -> ReducerKind {
        self.algorithm.kind()
    }

    /// Advances the trajectory counter that indexes decaying step sizes.
    pub fn begin_trajectory(&mut self) {
        self.trajectories += 1;
    }

    pub fn active_set(&self) -> &ActiveSet {
        &self.active
    }

    pub fn reduce<O: Observer + ?Sized>(
        &mut self,
        gs: &mut GradientState,
        omega: &mut [f64],
        observer: &mut O,
    ) -> Result<Vec<f64>> {
        let t = self.trajectories;
        let delta = match &self.algorithm {
            Algorithm::Td { alpha } | Algorithm::ResidualTd { alpha } => td_reduce(gs, omega, alpha.at(t))?,
            Algorithm::Lstd => lstd_reduce(gs, omega)?,
            Algorithm::Lspe => lspe_reduce(gs, omega)?,
            Algorithm::Fgtd { alpha } => fgtd_reduce(gs, omega, alpha.at(t))?,
            Algorithm::Ilstd { alpha, repeats } => {
                let mut total = vec![0.0; gs.dim()];
                for _ in 0..*repeats {
                    apply(&mut total, &ilstd_reduce(gs, omega, alpha.at(t))?);
                }
                total
            }
            Algorithm::Egd { steps } => {
                let steps = *steps;
                egd_reduce(gs, omega, steps, &mut self.active, |gs, omega, step| observer.egd_step(gs, omega, step))?
            }
        };
        observer.reduction(self.kind(), gs, omega, &delta);
        Ok(delta)
    }
}

/// Engine, reducer, schedule and weights for one evaluation run.
#[derive(Clone, Debug)]
pub struct Evaluator {
    engine: GradientState,
    reducer: Reducer,
    schedule: Schedule,
    omega: Vec<f64>,
    since_reduce: usize,
}

/// Everything needed to build an [`Evaluator`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatorConfig {
    pub algorithm: Algorithm,
    /// Defaults to [`Algorithm::default_mode`].
    pub mode: Option<TraceMode>,
    pub schedule: Schedule,
    pub gamma: f64,
    pub lambda: f64,
    pub ridge: f64,
    pub lean: bool,
}

impl EvaluatorConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, lambda: f64) -> Self {
        EvaluatorConfig {
            algorithm,
            mode: None,
            schedule: Schedule::PerTrajectory,
            gamma,
            lambda,
            ridge: crate::gradient::DEFAULT_RIDGE,
            lean: false,
        }
    }
}

impl Evaluator {
    pub fn new(dim: usize, config: &EvaluatorConfig) -> Result<Self> {
        let alg = &config.algorithm;
        config.schedule.validate_for(alg.kind())?;
        let mode = config.mode.unwrap_or_else(|| alg.default_mode());
        let opts = alg.engine_options(mode, config.gamma, config.lambda, config.ridge, config.lean)?;
        Ok(Evaluator {
            engine: GradientState::new(dim, opts)?,
            reducer: Reducer::new(alg.clone())?,
            schedule: config.schedule,
            omega: vec![0.0; dim],
            since_reduce: 0,
        })
    }

    /// Starts from weights `omega` instead of zero.
    pub fn set_weights(&mut self, omega: &[f64]) -> Result<()> {
        self.engine.check_dim(omega.len())?;
        self.omega.copy_from_slice(omega);
        if !self.engine.options().lean {
            self.engine.resync(&self.omega)?;
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }

    pub fn engine(&self) -> &GradientState {
        &self.engine
    }

    pub fn reducer(&self) -> &Reducer {
        &self.reducer
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn begin_trajectory(&mut self) {
        self.engine.begin_trajectory();
        self.reducer.begin_trajectory();
    }

    /// Observes one transition and reduces if the schedule calls for it.
    pub fn observe<O: Observer + ?Sized>(
        &mut self,
        phi_s: &[f64],
        phi_next: &[f64],
        reward: f64,
        observer: &mut O,
    ) -> Result<f64> {
        let d = self.engine.observe_transition(phi_s, phi_next, reward, &self.omega)?;
        self.since_reduce += 1;
        observer.transition(&self.engine, &self.omega, d);
        if self.schedule.due(self.since_reduce) {
            self.reduce(observer)?;
        }
        Ok(d)
    }

    /// Closes the trajectory with a reduction unless nothing arrived since
    /// the last one.
    pub fn end_trajectory<O: Observer + ?Sized>(&mut self, observer: &mut O) -> Result<()> {
        if self.since_reduce > 0 {
            self.reduce(observer)?;
        }
        Ok(())
    }

    pub fn reduce<O: Observer + ?Sized>(&mut self, observer: &mut O) -> Result<Vec<f64>> {
        self.since_reduce = 0;
        self.reducer.reduce(&mut self.engine, &mut self.omega, observer)
    }

    pub fn mu_decay(&mut self, rho: f64) -> Result<()> {
        mu_decay(&mut self.engine, rho)
    }
}

/// Feeds `trajectories` through `evaluator`, reducing at the schedule's points
/// and at every trajectory end.
pub fn run_schedule<'a, F, I, O>(
    evaluator: &mut Evaluator,
    features: &F,
    trajectories: I,
    observer: &mut O,
) -> Result<()>
where
    F: FeatureMap + ?Sized,
    I: IntoIterator<Item = &'a Trajectory>,
    O: Observer + ?Sized,
{
    let n = features.dim();
    let mut phi_s = vec![0.0; n];
    let mut phi_next = vec![0.0; n];
    for (index, trajectory) in trajectories.into_iter().enumerate() {
        evaluator.begin_trajectory();
        for t in &trajectory.transitions {
            features.write_features(t.state, &mut phi_s);
            features.write_features(t.next_state, &mut phi_next);
            evaluator.observe(&phi_s, &phi_next, t.reward, observer)?;
        }
        evaluator.end_trajectory(observer)?;
        observer.trajectory_end(index, &evaluator.engine, &evaluator.omega);
    }
    Ok(())
}
