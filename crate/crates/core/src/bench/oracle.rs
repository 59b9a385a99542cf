//! Dense batch construction of `A`, `b` and `μ` from explicit matrices.
//!
//! For each trajectory of `T` transitions the block matrices are
//!
//! * `Φ`: `(T + 1) × n`, rows `φ(s_0), …, φ(s_T)` (the terminal row is zero),
//! * `B`: `T × (T + 1)`, `1` on the diagonal and `−γ` on the superdiagonal,
//! * `L`: `T × T` upper triangular with `L[i][t] = (λγ)^(t − i)`.
//!
//! Blocks are stacked block-diagonally across trajectories. The trace matrix
//! `Z` (`n × T`) is `Φ₀ᵀL` in fixed-point mode (`Φ₀` drops terminal rows) and
//! `(BΦ)ᵀ` in residual mode; then `A = ZBΦ`, `b = Zr`, `μ = Z(r − BΦω)`.
//!
//! This is deliberately naive and shares no code with the incremental engine.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradient::{EngineOptions, GradientState, TraceMode};
use crate::linalg::Matrix;
use crate::mdp::{FeatureMap, State, Trajectory, Transition};

/// Un-ridged batch quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchModel {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
}

type Dense = Vec<Vec<f64>>;

fn zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

fn matmul(x: &Dense, y: &Dense) -> Dense {
    let inner = y.len();
    let cols = y.first().map_or(0, Vec::len);
    x.iter().map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * y[k][j]).sum()).collect()).collect()
}

fn transpose(x: &Dense) -> Dense {
    let cols = x.first().map_or(0, Vec::len);
    (0..cols).map(|j| x.iter().map(|row| row[j]).collect()).collect()
}

fn matvec(x: &Dense, v: &[f64]) -> Vec<f64> {
    x.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn batch_oracle<F: FeatureMap + ?Sized>(
    trajectories: &[Trajectory],
    features: &F,
    mode: TraceMode,
    lambda: f64,
    gamma: f64,
    omega: &[f64],
) -> BatchModel {
    let n = features.dim();
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let rows = total + trajectories.len();

    let mut phi = zeros(rows, n);
    let mut phi0 = zeros(total, n);
    let mut big_b = zeros(total, rows);
    let mut big_l = zeros(total, total);
    let mut r = vec![0.0; total];

    let (mut t0, mut row0) = (0, 0);
    for traj in trajectories {
        let len = traj.len();
        for (k, tr) in traj.transitions.iter().enumerate() {
            phi[row0 + k] = features.features(tr.state);
            phi0[t0 + k] = features.features(tr.state);
            r[t0 + k] = tr.reward;
            big_b[t0 + k][row0 + k] = 1.0;
            big_b[t0 + k][row0 + k + 1] = -gamma;
            for t in k..len {
                big_l[t0 + k][t0 + t] = (lambda * gamma).powi((t - k) as i32);
            }
        }
        if let Some(last) = traj.transitions.last() {
            phi[row0 + len] = features.features(last.next_state);
        }
        t0 += len;
        row0 += len + 1;
    }

    let b_phi = matmul(&big_b, &phi);
    let z = match mode {
        TraceMode::FixedPoint => matmul(&transpose(&phi0), &big_l),
        TraceMode::BellmanResidual => transpose(&b_phi),
    };
    let a = matmul(&z, &b_phi);
    let b = matvec(&z, &r);
    let predicted = matvec(&b_phi, omega);
    let residual: Vec<f64> = r.iter().zip(&predicted).map(|(x, y)| x - y).collect();
    let mu = matvec(&z, &residual);

    let a = Matrix::from_rows(&a);
    BatchModel { a, b, mu }
}

/// A feature map given by an explicit table; state 0 is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFeatures {
    rows: Vec<Vec<f64>>,
}

impl TabularFeatures {
    /// `rows[s]` is the feature vector of state `s + 1`.
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        TabularFeatures { rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }
}

impl FeatureMap for TabularFeatures {
    fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn is_terminal(&self, state: State) -> bool {
        state == 0
    }

    fn write_features(&self, state: State, out: &mut [f64]) {
        if state == 0 {
            out.iter_mut().for_each(|x| *x = 0.0);
        } else {
            out.copy_from_slice(&self.rows[state - 1]);
        }
    }
}

/// One random oracle instance.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub features: TabularFeatures,
    pub trajectories: Vec<Trajectory>,
    pub mode: TraceMode,
    pub lambda: f64,
    pub gamma: f64,
    pub omega: Vec<f64>,
}

pub const ORACLE_LAMBDAS: [f64; 4] = [0.0, 0.3, 0.5, 1.0];
pub const ORACLE_GAMMAS: [f64; 2] = [0.9, 1.0];

/// Random instance with `n` features, 1–3 trajectories of 1–12 steps.
pub fn random_case<R: Rng>(n: usize, rng: &mut R) -> OracleCase {
    let n_states = rng.gen_range(2..=10);
    let rows = (0..n_states).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let trajectories = (0..rng.gen_range(1..=3))
        .map(|_| {
            let len = rng.gen_range(1..=12);
            let mut state = rng.gen_range(1..=n_states);
            let transitions = (0..len)
                .map(|k| {
                    let next = if k + 1 == len { 0 } else { rng.gen_range(1..=n_states) };
                    let t = Transition::new(state, rng.gen_range(-5.0..5.0), next);
                    state = next;
                    t
                })
                .collect();
            Trajectory::new(transitions)
        })
        .collect();
    let mode = if rng.gen_bool(0.5) { TraceMode::FixedPoint } else { TraceMode::BellmanResidual };
    OracleCase {
        features: TabularFeatures::new(rows),
        trajectories,
        mode,
        lambda: *ORACLE_LAMBDAS.choose(rng).unwrap(),
        gamma: *ORACLE_GAMMAS.choose(rng).unwrap(),
        omega: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

/// Runs the incremental engine (no ridge, `ω` held fixed) over a case.
pub fn incremental_model(case: &OracleCase) -> Result<BatchModel> {
    let n = case.features.dim();
    let mut opts = EngineOptions::new(case.mode, case.gamma, case.lambda);
    opts.ridge = 0.0;
    let mut gs = GradientState::new(n, opts)?;
    for traj in &case.trajectories {
        gs.begin_trajectory();
        for t in &traj.transitions {
            gs.observe_transition(
                &case.features.features(t.state),
                &case.features.features(t.next_state),
                t.reward,
                &case.omega,
            )?;
        }
    }
    Ok(BatchModel { a: gs.a()?.clone(), b: gs.b()?.to_vec(), mu: gs.mu().to_vec() })
}

/// Largest error of `actual` against `expected`, relative to
/// `max(1, ‖expected‖∞)`, across `A`, `b` and `μ`.
pub fn relative_error(expected: &BatchModel, actual: &BatchModel) -> f64 {
    fn rel(e: &[f64], a: &[f64]) -> f64 {
        let scale = e.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        e.iter().zip(a).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }
    rel(expected.a.as_row_major(), actual.a.as_row_major())
        .max(rel(&expected.b, &actual.b))
        .max(rel(&expected.mu, &actual.mu))
}

/// Outcome of [`oracle_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub cases: usize,
    pub worst_error: f64,
    pub failures: Vec<usize>,
}

pub const ORACLE_TOL: f64 = 1e-10;

/// Cross-checks the engine against [`batch_oracle`] on `cases` random
/// instances with `n` features.
pub fn oracle_check(n: usize, seed: u64, cases: usize) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport { cases, worst_error: 0.0, failures: Vec::new() };
    for index in 0..cases {
        let case = random_case(n, &mut rng);
        let expected =
            batch_oracle(&case.trajectories, &case.features, case.mode, case.lambda, case.gamma, &case.omega);
        let err = relative_error(&expected, &incremental_model(&case)?);
        report.worst_error = report.worst_error.max(err);
        if err.is_nan() || err > ORACLE_TOL {
            report.failures.push(index);
        }
    }
    Ok(report)
}
