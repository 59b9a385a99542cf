//! Equi-gradient descent on `μ = b − Aω`.
//!
//! A LARS-like homotopy: the active coordinates all carry the same
//! `|μ_i| = C`. Moving `ω_I` along `d_I = A_II⁻¹ μ_I` shrinks every active
//! entry uniformly, `μ_I(α) = (1 − α) μ_I`, while each inactive entry moves
//! linearly, `μ_j(α) = μ_j − α a_j` with `a_j = A_jI d_I`. The step stops at
//! the first `α` where some inactive `|μ_j|` reaches `(1 − α) C`; that
//! coordinate then joins the active set. With every coordinate active the
//! step is `α = 1`, which solves `Aω = b` exactly.
//!
//! No step size is involved: every step length follows from the data.

use crate::error::{Error, Result};
use crate::gradient::GradientState;
use crate::linalg::{argmax_abs, norm_inf, Lu, Matrix};

/// Inactive coordinates within this relative distance of the active
/// magnitude are treated as already equi-correlated.
const TIE_TOL: f64 = 1e-12;

/// Indices currently sharing the largest `|μ_i|`, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActiveSet {
    indices: Vec<usize>,
    /// `transitions_seen` of the engine when the set was built.
    epoch: Option<u64>,
}

impl ActiveSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn clear(&mut self) {
        self.indices.clear();
        self.epoch = None;
    }

    /// `(min, max)` of `|μ_i|` over the active set.
    pub fn magnitude_range(&self, mu: &[f64]) -> (f64, f64) {
        self.indices.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &i| (lo.min(mu[i].abs()), hi.max(mu[i].abs())))
    }

    /// Largest `|μ_j|` among inactive coordinates (0 if there are none).
    pub fn max_inactive(&self, mu: &[f64]) -> f64 {
        mu.iter().enumerate().filter(|(j, _)| !self.contains(*j)).fold(0.0_f64, |m, (_, v)| m.max(v.abs()))
    }
}

/// What one equi-gradient step did.
#[derive(Clone, Debug, PartialEq)]
pub struct EgdStep {
    /// Fraction of the way to the active-block solution, in `[0, 1]`.
    pub alpha: f64,
    /// Coordinates that joined the active set.
    pub joined: Vec<usize>,
    /// Active set after the step.
    pub active: Vec<usize>,
    /// True when a coordinate was already equi-correlated and joined
    /// without any movement.
    pub degenerate: bool,
}

/// Performs up to `k_steps` equi-gradient steps and returns the total `δω`.
///
/// `active` persists between calls but is rebuilt once new samples have
/// changed `μ`. `on_step` runs after every step.
pub fn egd_reduce<F>(
    gs: &mut GradientState,
    omega: &mut [f64],
    k_steps: usize,
    active: &mut ActiveSet,
    mut on_step: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&GradientState, &[f64], &EgdStep),
{
    gs.check_dim(omega.len())?;
    let mut total = vec![0.0; gs.dim()];
    if active.epoch != Some(gs.transitions_seen()) {
        active.clear();
        active.epoch = Some(gs.transitions_seen());
    }
    for _ in 0..k_steps {
        match egd_step(gs, omega, active, &mut total)? {
            Some(step) => on_step(gs, omega, &step),
            None => break,
        }
    }
    Ok(total)
}

fn egd_step(
    gs: &mut GradientState,
    omega: &mut [f64],
    active: &mut ActiveSet,
    total: &mut [f64],
) -> Result<Option<EgdStep>> {
    let n = gs.dim();
    if norm_inf(gs.mu()) == 0.0 {
        return Ok(None);
    }
    if active.is_empty() {
        active.indices.push(argmax_abs(gs.mu()));
    }
    let mu = gs.mu();
    let c = active.indices.iter().map(|&i| mu[i].abs()).sum::<f64>() / active.len() as f64;

    let ties: Vec<usize> = (0..n).filter(|&j| !active.contains(j) && mu[j].abs() >= c - TIE_TOL * (1.0 + c)).collect();
    if !ties.is_empty() {
        active.indices.extend_from_slice(&ties);
        return Ok(Some(EgdStep { alpha: 0.0, joined: ties, active: active.indices.clone(), degenerate: true }));
    }

    let a = gs.a()?;
    let block = a.submatrix(&active.indices);
    let mu_active: Vec<f64> = active.indices.iter().map(|&i| mu[i]).collect();
    let (direction, solve_macs) = solve_block(&block, &mu_active, gs.options().ridge)?;

    // first crossing of |μ_j(α)| = (1 − α) C over inactive j
    let mut alpha_star = 1.0_f64;
    let mut crossing: Vec<(usize, f64)> = Vec::new();
    let inactive: Vec<usize> = (0..n).filter(|j| !active.contains(*j)).collect();
    for &j in &inactive {
        let a_j: f64 = active.indices.iter().zip(&direction).map(|(&i, d)| a.get(j, i) * d).sum();
        for (num, den) in [(mu[j] - c, a_j - c), (mu[j] + c, a_j + c)] {
            if den == 0.0 {
                continue;
            }
            let alpha = num / den;
            if alpha > 0.0 && alpha <= 1.0 {
                crossing.push((j, alpha));
                alpha_star = alpha_star.min(alpha);
            }
        }
    }
    let mut joined: Vec<usize> =
        crossing.iter().filter(|(_, alpha)| *alpha <= alpha_star * (1.0 + TIE_TOL)).map(|(j, _)| *j).collect();
    joined.sort_unstable();
    joined.dedup();

    // ω_I += α d_I;  μ −= α A[:, I] d_I
    let mut shift = vec![0.0; n];
    for (&i, &d) in active.indices.iter().zip(&direction) {
        let step = alpha_star * d;
        omega[i] += step;
        total[i] += step;
        for (r, s) in shift.iter_mut().enumerate() {
            *s += a.get(r, i) * step;
        }
    }
    for (m, s) in gs.mu_mut().iter_mut().zip(&shift) {
        *m -= s;
    }
    let k = active.len() as u64;
    gs.add_macs(solve_macs + inactive.len() as u64 * k + n as u64 * k + k);

    if alpha_star < 1.0 {
        active.indices.extend_from_slice(&joined);
    } else {
        joined.clear();
    }
    Ok(Some(EgdStep { alpha: alpha_star, joined, active: active.indices.clone(), degenerate: false }))
}

/// Solves the active block, retrying once with a ridge if it is singular.
fn solve_block(block: &Matrix, rhs: &[f64], ridge: f64) -> Result<(Vec<f64>, u64)> {
    let lu = match Lu::factor(block) {
        Ok(lu) => lu,
        Err(Error::SingularSystem { .. }) => {
            let mut ridged = block.clone();
            ridged.add_scaled_identity(ridge.max(f64::EPSILON));
            Lu::factor(&ridged)?
        }
        Err(e) => return Err(e),
    };
    Ok((lu.solve(rhs), lu.macs() + lu.solve_macs()))
}
