//! The incremental gradient engine shared by every algorithm.
//!
//! For the transitions seen so far the engine keeps the linear model
//! `μ(ω) = b − A·ω`, where `A = Σ z_t (φ_t − γφ_{t+1})ᵀ` and `b = Σ r_t z_t`.
//! The trace `z_t` selects the gradient:
//!
//! * [`TraceMode::FixedPoint`]: `z_t = λγ z_{t−1} + φ_t`, the columns of `ΦᵀL`.
//! * [`TraceMode::BellmanResidual`]: `z_t = φ_t − γφ_{t+1}`, the columns of
//!   `ΦᵀBᵀ`; here `μ` is minus one half of the gradient of `‖r − BΦω‖²`.
//!
//! Each observed transition adds `d_t z_t` to the running gradient `μ`, with
//! `d_t = r_t − φ_tᵀω + γφ_{t+1}ᵀω`. Reducers then consume `μ` (see
//! [`crate::algorithms`]).
//!
//! `A` starts at `εI` and any maintained inverse at `ε⁻¹I`, so rank-one
//! inverse updates are defined from the first sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, invert, sherman_morrison_in_place, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    FixedPoint,
    BellmanResidual,
}

pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Construction parameters for a [`GradientState`].
#[derive(Clone, Debug, PartialEq)]
pub struct EngineOptions {
    pub mode: TraceMode,
    pub gamma: f64,
    /// Trace decay; ignored in Bellman-residual mode.
    pub lambda: f64,
    pub ridge: f64,
    /// Skip `A` and `b` entirely, leaving only the O(n) trace work.
    pub lean: bool,
    /// Maintain `A⁻¹` by rank-one updates (LSTD).
    pub track_inverse: bool,
    /// Maintain `(ΦᵀΦ + εI)⁻¹` by rank-one updates (LSPE).
    pub track_gram_inverse: bool,
}

impl EngineOptions {
    pub fn new(mode: TraceMode, gamma: f64, lambda: f64) -> Self {
        EngineOptions {
            mode,
            gamma,
            lambda,
            ridge: DEFAULT_RIDGE,
            lean: false,
            track_inverse: false,
            track_gram_inverse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidConfig(format!("ridge {} must be finite and >= 0", self.ridge)));
        }
        let inverses = self.track_inverse || self.track_gram_inverse;
        if inverses && self.ridge == 0.0 {
            return Err(Error::InvalidConfig("maintained inverses need a positive ridge".into()));
        }
        if inverses && self.lean {
            return Err(Error::InvalidConfig("a lean engine cannot maintain inverses".into()));
        }
        Ok(())
    }

    /// Per-step trace decay: `λγ` in fixed-point mode.
    fn trace_decay(&self) -> f64 {
        self.lambda * self.gamma
    }
}

#[derive(Clone, Debug)]
pub struct GradientState {
    opts: EngineOptions,
    dim: usize,
    z: Vec<f64>,
    mu: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
    a_inv: Option<Matrix>,
    gram: Option<Matrix>,
    gram_inv: Option<Matrix>,
    residual: Vec<f64>,
    transitions_seen: u64,
    macs: u64,
    inverse_rebuilds: u64,
}

impl GradientState {
    pub fn new(dim: usize, opts: EngineOptions) -> Result<Self> {
        opts.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be positive".into()));
        }
        let eps = opts.ridge;
        let inverse = |on: bool| on.then(|| Matrix::scaled_identity(dim, 1.0 / eps));
        Ok(GradientState {
            a_inv: inverse(opts.track_inverse),
            gram: opts.track_gram_inverse.then(|| Matrix::scaled_identity(dim, eps)),
            gram_inv: inverse(opts.track_gram_inverse),
            a: if opts.lean { Matrix::zeros(0) } else { Matrix::scaled_identity(dim, eps) },
            b: vec![0.0; dim],
            z: vec![0.0; dim],
            mu: vec![0.0; dim],
            residual: vec![0.0; dim],
            opts,
            dim,
            transitions_seen: 0,
            macs: 0,
            inverse_rebuilds: 0,
        })
    }

    /// Builds an engine around an existing model `(A, b)` (ridge included)
    /// with `μ` synchronized to `b − A·ω`. Maintained inverses are computed
    /// by direct factorization.
    pub fn from_model(opts: EngineOptions, a: Matrix, b: Vec<f64>, omega: &[f64]) -> Result<Self> {
        if opts.lean {
            return Err(Error::InvalidConfig("a lean engine has no model".into()));
        }
        let mut gs = Self::new(a.dim(), opts)?;
        gs.check_dim(b.len())?;
        if gs.a_inv.is_some() {
            gs.a_inv = Some(invert(&a)?);
        }
        gs.a = a;
        gs.b = b;
        gs.resync(omega)?;
        Ok(gs)
    }

    /// Starts a new trajectory: the trace never crosses episode boundaries.
    pub fn begin_trajectory(&mut self) {
        self.z.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Folds one transition into the trace, `μ`, `A`, `b` and any maintained
    /// inverse. `phi_next` must be the zero vector for a terminal successor.
    /// Returns the temporal difference `d_t`.
    pub fn observe_transition(&mut self, phi_s: &[f64], phi_next: &[f64], reward: f64, omega: &[f64]) -> Result<f64> {
        for len in [phi_s.len(), phi_next.len(), omega.len()] {
            self.check_dim(len)?;
        }
        let n = self.dim as u64;
        let gamma = self.opts.gamma;

        match self.opts.mode {
            TraceMode::FixedPoint => {
                let decay = self.opts.trace_decay();
                for (zi, &p) in self.z.iter_mut().zip(phi_s) {
                    *zi = decay * *zi + p;
                }
            }
            TraceMode::BellmanResidual => {
                for ((zi, &p), &q) in self.z.iter_mut().zip(phi_s).zip(phi_next) {
                    *zi = p - gamma * q;
                }
            }
        }
        let d = reward - dot(phi_s, omega) + gamma * dot(phi_next, omega);
        axpy(d, &self.z, &mut self.mu);
        self.macs += 4 * n;

        if !self.opts.lean {
            for ((w, &p), &q) in self.residual.iter_mut().zip(phi_s).zip(phi_next) {
                *w = p - gamma * q;
            }
            axpy(reward, &self.z, &mut self.b);
            self.a.add_outer(1.0, &self.z, &self.residual);
            self.macs += n * n + 2 * n;
        }

        if let Some(a_inv) = self.a_inv.as_mut() {
            match sherman_morrison_in_place(a_inv, &self.z, &self.residual) {
                Ok(macs) => self.macs += macs,
                Err(Error::SingularUpdate { .. }) => {
                    let (inv, macs) = rebuild_inverse(&self.a, self.opts.ridge)?;
                    *a_inv = inv;
                    self.macs += macs;
                    self.inverse_rebuilds += 1;
                }
                Err(e) => return Err(e),
            }
        }

        if let (Some(gram), Some(gram_inv)) = (self.gram.as_mut(), self.gram_inv.as_mut()) {
            gram.add_outer(1.0, phi_s, phi_s);
            self.macs += n * n;
            match sherman_morrison_in_place(gram_inv, phi_s, phi_s) {
                Ok(macs) => self.macs += macs,
                Err(Error::SingularUpdate { .. }) => {
                    let (inv, macs) = rebuild_inverse(gram, self.opts.ridge)?;
                    *gram_inv = inv;
                    self.macs += macs;
                    self.inverse_rebuilds += 1;
                }
                Err(e) => return Err(e),
            }
        }

        self.transitions_seen += 1;
        Ok(d)
    }

    /// `b − A·ω`, the full gradient over every sample seen so far.
    pub fn gradient_linear_form(&self, omega: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(omega.len())?;
        let a = self.a()?;
        let mut g = self.b.clone();
        axpy(-1.0, &a.mul_vec(omega), &mut g);
        Ok(g)
    }

    /// Resets `μ` to `b − A·ω`, e.g. after starting from a non-zero `ω`.
    pub fn resync(&mut self, omega: &[f64]) -> Result<()> {
        self.mu = self.gradient_linear_form(omega)?;
        Ok(())
    }

    /// `‖μ − (b − A·ω)‖∞`.
    pub fn sync_error(&self, omega: &[f64]) -> Result<f64> {
        let g = self.gradient_linear_form(omega)?;
        Ok(g.iter().zip(&self.mu).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
    }

    /// `‖A·A⁻¹ − I‖∞` for the maintained inverse.
    pub fn inverse_defect(&self) -> Option<f64> {
        self.a_inv.as_ref().map(|inv| self.a.mul(inv).identity_defect())
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn mode(&self) -> TraceMode {
        self.opts.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> &[f64] {
        &self.z
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn a(&self) -> Result<&Matrix> {
        if self.opts.lean {
            Err(Error::InvalidConfig("A is not maintained by a lean engine".into()))
        } else {
            Ok(&self.a)
        }
    }

    pub fn b(&self) -> Result<&[f64]> {
        self.a()?;
        Ok(&self.b)
    }

    pub fn a_inv(&self) -> Option<&Matrix> {
        self.a_inv.as_ref()
    }

    pub fn gram(&self) -> Option<&Matrix> {
        self.gram.as_ref()
    }

    pub fn gram_inv(&self) -> Option<&Matrix> {
        self.gram_inv.as_ref()
    }

    pub fn transitions_seen(&self) -> u64 {
        self.transitions_seen
    }

    /// Cumulative scalar multiply-adds performed on this engine.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// How many times a maintained inverse was refactorized after a singular
    /// rank-one update.
    pub fn inverse_rebuilds(&self) -> u64 {
        self.inverse_rebuilds
    }

    pub(crate) fn mu_mut(&mut self) -> &mut [f64] {
        &mut self.mu
    }

    pub(crate) fn add_macs(&mut self, macs: u64) {
        self.macs += macs;
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, actual: len })
        }
    }
}

/// Inverts the accumulated matrix (which already carries `εI`), adding a
/// second ridge if that is still singular.
fn rebuild_inverse(m: &Matrix, ridge: f64) -> Result<(Matrix, u64)> {
    let n = m.dim() as u64;
    let cost = n * n * n;
    match invert(m) {
        Ok(inv) => Ok((inv, cost)),
        Err(Error::SingularSystem { .. }) => {
            let mut ridged = m.clone();
            ridged.add_scaled_identity(ridge);
            Ok((invert(&ridged)?, cost))
        }
        Err(e) => Err(e),
    }
}
