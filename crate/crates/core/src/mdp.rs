//! Trajectories, feature maps and the Boyan chain.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::dot;

pub type State = usize;

/// One sampled step `state --reward--> next_state`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub reward: f64,
    pub next_state: State,
}

impl Transition {
    pub fn new(state: State, reward: f64, next_state: State) -> Self {
        Transition { state, reward, next_state }
    }
}

/// A complete episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>) -> Self {
        Trajectory { transitions }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks that steps chain and that the episode ends in a terminal state.
    pub fn validate<F: FeatureMap + ?Sized>(&self, features: &F) -> Result<()> {
        for pair in self.transitions.windows(2) {
            if pair[0].next_state != pair[1].state {
                return Err(Error::InvalidConfig(format!(
                    "trajectory does not chain: {} -> {} followed by {}",
                    pair[0].state, pair[0].next_state, pair[1].state
                )));
            }
        }
        match self.transitions.last() {
            Some(last) if !features.is_terminal(last.next_state) => {
                Err(Error::InvalidConfig(format!("trajectory ends in non-terminal state {}", last.next_state)))
            }
            _ => Ok(()),
        }
    }
}

/// Maps states to rows of the feature matrix. Terminal states map to zero.
pub trait FeatureMap {
    fn dim(&self) -> usize;

    fn is_terminal(&self, state: State) -> bool;

    /// Writes the features of `state` into `out` (length [`FeatureMap::dim`]).
    fn write_features(&self, state: State, out: &mut [f64]);

    fn features(&self, state: State) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_features(state, &mut out);
        out
    }

    fn value(&self, state: State, omega: &[f64]) -> f64 {
        dot(&self.features(state), omega)
    }
}

/// The Boyan chain: states `N, N-1, ..., 1` plus the terminal state 0.
///
/// From `i >= 2` the walk moves to `i-1` or `i-2` with equal probability and
/// reward -3; from 1 it moves to 0 with reward -2. Features are hat
/// functions centred every `feature_spacing` states.
#[derive(Clone, Debug, PartialEq)]
pub struct BoyanChain {
    n_states: usize,
    spacing: usize,
}

pub const STEP_REWARD: f64 = -3.0;
pub const FINAL_REWARD: f64 = -2.0;

impl BoyanChain {
    pub fn new(n_states: usize, feature_spacing: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::InvalidConfig(format!("n_states must be >= 2, got {n_states}")));
        }
        if feature_spacing == 0 || !n_states.is_multiple_of(feature_spacing) {
            return Err(Error::InvalidConfig(format!(
                "feature_spacing {feature_spacing} must be >= 1 and divide n_states {n_states}"
            )));
        }
        Ok(BoyanChain { n_states, spacing: feature_spacing })
    }

    /// Number of non-terminal states.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn feature_spacing(&self) -> usize {
        self.spacing
    }

    pub fn n_features(&self) -> usize {
        self.n_states / self.spacing + 1
    }

    /// Raw hat-function features, including at the terminal state.
    pub fn hat_features(&self, state: State) -> Vec<f64> {
        let s = self.spacing as f64;
        (0..self.n_features()).map(|k| (1.0 - (state as f64 - (k * self.spacing) as f64).abs() / s).max(0.0)).collect()
    }

    /// Samples one episode from `start` down to the terminal state.
    ///
    /// Each two-way branch consumes exactly one uniform draw: below 1/2 moves
    /// one state down, otherwise two.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, start: State, rng: &mut R) -> Trajectory {
        assert!(
            (1..=self.n_states).contains(&start),
            "start state {start} must be a non-terminal state in 1..={}",
            self.n_states
        );
        let mut transitions = Vec::with_capacity(start);
        let mut state = start;
        while state > 0 {
            let t = if state == 1 {
                Transition::new(1, FINAL_REWARD, 0)
            } else {
                let u: f64 = rng.gen();
                let next = if u < 0.5 { state - 1 } else { state - 2 };
                Transition::new(state, STEP_REWARD, next)
            };
            state = t.next_state;
            transitions.push(t);
        }
        Trajectory { transitions }
    }

    /// Samples one episode from the top state `N`.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        self.sample_trajectory(self.n_states, rng)
    }

    /// Exact state values, indexed by state (entry 0 is the terminal state).
    pub fn exact_values(&self, gamma: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states + 1];
        v[1] = FINAL_REWARD;
        for i in 2..=self.n_states {
            v[i] = STEP_REWARD + gamma * 0.5 * (v[i - 1] + v[i - 2]);
        }
        v
    }

    /// Root mean squared error of `φ(i)ᵀω` against `v_true` over states `1..=N`.
    pub fn rmse(&self, omega: &[f64], v_true: &[f64]) -> f64 {
        assert_eq!(omega.len(), self.n_features());
        let mut phi = vec![0.0; self.n_features()];
        let sum: f64 = (1..=self.n_states)
            .map(|i| {
                self.write_features(i, &mut phi);
                let err = dot(&phi, omega) - v_true[i];
                err * err
            })
            .sum();
        (sum / self.n_states as f64).sqrt()
    }
}

impl FeatureMap for BoyanChain {
    fn dim(&self) -> usize {
        self.n_features()
    }

    fn is_terminal(&self, state: State) -> bool {
        state == 0
    }

    fn write_features(&self, state: State, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        if state == 0 {
            return;
        }
        // at most two hats overlap any state
        let k = state / self.spacing;
        let offset = (state % self.spacing) as f64 / self.spacing as f64;
        out[k] = 1.0 - offset;
        if offset > 0.0 {
            out[k + 1] = offset;
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn construction() {
        assert_eq!(BoyanChain::new(100, 4).unwrap().n_features(), 26);
        assert!(BoyanChain::new(10, 4).is_err());
        assert!(BoyanChain::new(1, 1).is_err());
        assert!(BoyanChain::new(8, 0).is_err());
    }

    #[test]
    fn hat_features() {
        let env = BoyanChain::new(100, 4).unwrap();
        let raw = env.hat_features(0);
        assert_eq!(raw[0], 1.0);
        assert!(raw[1..].iter().all(|&x| x == 0.0));
        assert!(env.features(0).iter().all(|&x| x == 0.0));
        let f2 = env.features(2);
        assert_eq!(&f2[..3], &[0.5, 0.5, 0.0]);
        for s in 1..=100 {
            assert_eq!(env.features(s), env.hat_features(s), "state {s}");
        }
    }

    #[test]
    fn deterministic_final_step() {
        let env = BoyanChain::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(env.sample_trajectory(1, &mut rng).transitions, vec![Transition::new(1, -2.0, 0)]);
        }
    }

    #[test]
    fn start_two_branches() {
        let env = BoyanChain::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let long = vec![Transition::new(2, -3.0, 1), Transition::new(1, -2.0, 0)];
        let short = vec![Transition::new(2, -3.0, 0)];
        let mut counts = [0usize; 2];
        for _ in 0..4000 {
            let t = env.sample_trajectory(2, &mut rng).transitions;
            if t == long {
                counts[0] += 1;
            } else {
                assert_eq!(t, short);
                counts[1] += 1;
            }
        }
        assert!((counts[0] as f64 / 4000.0 - 0.5).abs() < 0.03, "{counts:?}");
    }

    #[test]
    fn episode_length_and_chaining() {
        let env = BoyanChain::new(100, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = env.sample_episode(&mut rng);
            assert!((50..=100).contains(&t.len()));
            t.validate(&env).unwrap();
        }
    }

    #[test]
    fn branch_frequencies() {
        let env = BoyanChain::new(8, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for start in [2, 5, 8] {
            let one_down = (0..100_000)
                .filter(|_| env.sample_trajectory(start, &mut rng).transitions[0].next_state == start - 1)
                .count();
            assert!((one_down as f64 / 1e5 - 0.5).abs() <= 0.01);
        }
    }

    #[test]
    fn validate_rejects_broken_chain() {
        let env = BoyanChain::new(4, 4).unwrap();
        let broken = Trajectory::new(vec![Transition::new(3, -3.0, 2), Transition::new(1, -2.0, 0)]);
        assert!(broken.validate(&env).is_err());
        let unfinished = Trajectory::new(vec![Transition::new(3, -3.0, 2)]);
        assert!(unfinished.validate(&env).is_err());
    }

    #[test]
    fn exact_values_endpoints() {
        let env = BoyanChain::new(100, 4).unwrap();
        let v1 = env.exact_values(1.0);
        assert_eq!(v1[0], 0.0);
        for (i, v) in v1.iter().enumerate() {
            assert!((v + 2.0 * i as f64).abs() < 1e-12);
        }
        let v0 = env.exact_values(0.0);
        assert_eq!(v0[1], -2.0);
        assert!(v0[2..].iter().all(|&v| v == -3.0));
    }

    #[test]
    fn exact_values_match_monte_carlo() {
        let env = BoyanChain::new(8, 4).unwrap();
        let gamma = 0.9;
        let v = env.exact_values(gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for start in 1..=5 {
            let runs = 40_000;
            let mean: f64 = (0..runs)
                .map(|_| {
                    env.sample_trajectory(start, &mut rng)
                        .transitions
                        .iter()
                        .enumerate()
                        .map(|(t, tr)| gamma.powi(t as i32) * tr.reward)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / runs as f64;
            assert!((mean - v[start]).abs() < 0.03, "state {start}: {mean} vs {}", v[start]);
        }
    }

    #[test]
    fn rmse_examples() {
        let env = BoyanChain::new(4, 4).unwrap();
        let v = env.exact_values(1.0);
        assert!((env.rmse(&[0.0, 0.0], &v) - 30f64.sqrt()).abs() < 1e-12);
        // v(i) = -2i is exactly representable
        assert!(env.rmse(&[0.0, -8.0], &v) < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x - 1.5).collect();
        assert!((env.rmse(&[0.0, -8.0], &shifted) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn undiscounted_values_representable_at_full_size() {
        let env = BoyanChain::new(100, 4).unwrap();
        let omega: Vec<f64> = (0..env.n_features()).map(|k| -2.0 * (4 * k) as f64).collect();
        assert!(env.rmse(&omega, &env.exact_values(1.0)) < 1e-12);
    }
}
