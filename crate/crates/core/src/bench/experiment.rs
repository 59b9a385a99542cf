use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::algorithms::{run_schedule, Evaluator};
use crate::bench::config::{CurveConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::mdp::{BoyanChain, Trajectory};

/// One measurement on one curve.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub curve: String,
    pub trajectories: usize,
    pub transitions: u64,
    pub macs: u64,
    pub wall_seconds: f64,
    pub rmse: f64,
}

/// Records for every curve plus the provenance written to CSV headers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub seed: u64,
    pub config_hash: String,
    pub stream_checksum: String,
    /// One entry per curve, in config order.
    pub curves: Vec<(String, Vec<RunRecord>)>,
}

impl ExperimentOutput {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.curves.iter().flat_map(|(_, r)| r)
    }

    pub fn curve(&self, label: &str) -> Option<&[RunRecord]> {
        self.curves.iter().find(|(l, _)| l == label).map(|(_, r)| r.as_slice())
    }
}

/// Samples the shared trajectory stream: `count` episodes from state `N`.
pub fn sample_stream(env: &BoyanChain, seed: u64, count: usize) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| env.sample_episode(&mut rng)).collect()
}

/// First 16 hex digits of a SHA-256 over every transition in the stream.
pub fn stream_checksum(stream: &[Trajectory]) -> String {
    let mut hasher = Sha256::new();
    for traj in stream {
        for t in &traj.transitions {
            hasher.update((t.state as u64).to_le_bytes());
            hasher.update(t.reward.to_bits().to_le_bytes());
            hasher.update((t.next_state as u64).to_le_bytes());
        }
        hasher.update(u64::MAX.to_le_bytes());
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Runs every curve of `config` over one shared trajectory stream.
///
/// Curves run in parallel; each owns its engine and starts from `ω = 0`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let env = config.environment()?;
    let stream = sample_stream(&env, config.seed, config.n_trajectories);
    let v_true = env.exact_values(config.environment.gamma);
    let curves = config
        .algorithms
        .par_iter()
        .enumerate()
        .map(|(i, curve)| {
            run_curve(config, curve, &env, &stream, &v_true).map_err(|e| match e {
                Error::Config { .. } => e,
                other => Error::config(format!("algorithms[{i}]"), other.to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        seed: config.seed,
        config_hash: config.hash(),
        stream_checksum: stream_checksum(&stream),
        curves,
    })
}

fn run_curve(
    config: &ExperimentConfig,
    curve: &CurveConfig,
    env: &BoyanChain,
    stream: &[Trajectory],
    v_true: &[f64],
) -> Result<(String, Vec<RunRecord>)> {
    let label = curve.label().to_owned();
    let ev_config = curve.evaluator_config(&config.environment, config.lambda, config.ridge_epsilon);
    let mut evaluator = Evaluator::new(env.n_features(), &ev_config)?;
    let record = |ev: &Evaluator, trajectories: usize, wall: f64| RunRecord {
        curve: label.clone(),
        trajectories,
        transitions: ev.engine().transitions_seen(),
        macs: ev.engine().macs(),
        wall_seconds: wall,
        rmse: env.rmse(ev.weights(), v_true),
    };

    let mut records = vec![record(&evaluator, 0, 0.0)];
    let mut wall = 0.0;
    let total = stream.len();
    for (i, traj) in stream.iter().enumerate() {
        let start = Instant::now();
        run_schedule(&mut evaluator, env, std::slice::from_ref(traj), &mut ())?;
        wall += start.elapsed().as_secs_f64();
        let seen = i + 1;
        if config.cadence.measures(seen, total) {
            records.push(record(&evaluator, seen, wall));
        }
    }
    Ok((label, records))
}

/// First trajectory count at which a curve's RMSE is at most `threshold`.
pub fn trajectories_to_reach(records: &[RunRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.rmse <= threshold).map(|r| r.trajectories)
}
