//! JSON experiment configuration. Parsing is strict: unknown keys are
//! rejected, and every error carries the path of the offending field.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{Algorithm, EvaluatorConfig, ReducerKind, Schedule, StepSize};
use crate::error::{Error, Result};
use crate::gradient::{TraceMode, DEFAULT_RIDGE};
use crate::mdp::BoyanChain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub lambda: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    #[serde(default)]
    pub cadence: Cadence,
    #[serde(default = "default_ridge")]
    pub ridge_epsilon: f64,
    #[serde(default)]
    pub output: OutputConfig,
    pub algorithms: Vec<CurveConfig>,
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default = "default_states")]
    pub n_states: usize,
    #[serde(default = "default_spacing")]
    pub feature_spacing: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_states() -> usize {
    100
}

fn default_spacing() -> usize {
    4
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig { n_states: 100, feature_spacing: 4, gamma: 1.0 }
    }
}

/// Measure after every trajectory up to `dense_until`, then every `every`.
/// The start (0 trajectories) and the final trajectory are always measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cadence {
    #[serde(default = "default_dense")]
    pub dense_until: usize,
    #[serde(default = "default_every")]
    pub every: usize,
}

fn default_dense() -> usize {
    20
}

fn default_every() -> usize {
    10
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence { dense_until: 20, every: 10 }
    }
}

impl Cadence {
    pub fn measures(&self, trajectories: usize, total: usize) -> bool {
        trajectories <= self.dense_until || trajectories.is_multiple_of(self.every) || trajectories == total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

fn one() -> usize {
    1
}

/// One curve: an algorithm, its hyperparameters and its schedule.
///
/// Each kind lists only the keys it accepts, so e.g. `alpha` on an `egd`
/// entry is an unknown-field error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveConfig {
    Td {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        alpha: StepSize,
        #[serde(default)]
        schedule: Schedule,
        #[serde(default)]
        lean: bool,
    },
    ResidualTd {
        label: String,
        alpha: StepSize,
        #[serde(default)]
        schedule: Schedule,
        #[serde(default)]
        lean: bool,
    },
    Lstd {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        #[serde(default)]
        schedule: Schedule,
    },
    Lspe {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        #[serde(default)]
        schedule: Schedule,
    },
    Fgtd {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        alpha: StepSize,
        #[serde(default)]
        schedule: Schedule,
    },
    Ilstd {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        alpha: StepSize,
        #[serde(default = "one")]
        repeats: usize,
        #[serde(default)]
        schedule: Schedule,
    },
    Egd {
        label: String,
        #[serde(default)]
        mode: Option<TraceMode>,
        steps: usize,
        #[serde(default)]
        schedule: Schedule,
    },
}

impl CurveConfig {
    pub fn label(&self) -> &str {
        match self {
            CurveConfig::Td { label, .. }
            | CurveConfig::ResidualTd { label, .. }
            | CurveConfig::Lstd { label, .. }
            | CurveConfig::Lspe { label, .. }
            | CurveConfig::Fgtd { label, .. }
            | CurveConfig::Ilstd { label, .. }
            | CurveConfig::Egd { label, .. } => label,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match *self {
            CurveConfig::Td { alpha, .. } => Algorithm::Td { alpha },
            CurveConfig::ResidualTd { alpha, .. } => Algorithm::ResidualTd { alpha },
            CurveConfig::Lstd { .. } => Algorithm::Lstd,
            CurveConfig::Lspe { .. } => Algorithm::Lspe,
            CurveConfig::Fgtd { alpha, .. } => Algorithm::Fgtd { alpha },
            CurveConfig::Ilstd { alpha, repeats, .. } => Algorithm::Ilstd { alpha, repeats },
            CurveConfig::Egd { steps, .. } => Algorithm::Egd { steps },
        }
    }

    pub fn kind(&self) -> ReducerKind {
        self.algorithm().kind()
    }

    fn mode(&self) -> Option<TraceMode> {
        match *self {
            CurveConfig::ResidualTd { .. } => Some(TraceMode::BellmanResidual),
            CurveConfig::Td { mode, .. }
            | CurveConfig::Lstd { mode, .. }
            | CurveConfig::Lspe { mode, .. }
            | CurveConfig::Fgtd { mode, .. }
            | CurveConfig::Ilstd { mode, .. }
            | CurveConfig::Egd { mode, .. } => mode,
        }
    }

    fn schedule(&self) -> Schedule {
        match *self {
            CurveConfig::Td { schedule, .. }
            | CurveConfig::ResidualTd { schedule, .. }
            | CurveConfig::Lstd { schedule, .. }
            | CurveConfig::Lspe { schedule, .. }
            | CurveConfig::Fgtd { schedule, .. }
            | CurveConfig::Ilstd { schedule, .. }
            | CurveConfig::Egd { schedule, .. } => schedule,
        }
    }

    fn lean(&self) -> bool {
        matches!(*self, CurveConfig::Td { lean: true, .. } | CurveConfig::ResidualTd { lean: true, .. })
    }

    pub fn evaluator_config(&self, env: &EnvironmentConfig, lambda: f64, ridge: f64) -> EvaluatorConfig {
        EvaluatorConfig {
            algorithm: self.algorithm(),
            mode: self.mode(),
            schedule: self.schedule(),
            gamma: env.gamma,
            lambda,
            ridge,
            lean: self.lean(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn environment(&self) -> Result<BoyanChain> {
        BoyanChain::new(self.environment.n_states, self.environment.feature_spacing)
    }

    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        BoyanChain::new(env.n_states, env.feature_spacing).map_err(|e| Error::config("environment", e.to_string()))?;
        if !(0.0..=1.0).contains(&env.gamma) {
            return Err(Error::config("environment.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", "must lie in [0, 1]"));
        }
        if !(self.ridge_epsilon > 0.0 && self.ridge_epsilon.is_finite()) {
            return Err(Error::config("ridge_epsilon", "must be positive and finite"));
        }
        if self.cadence.every == 0 {
            return Err(Error::config("cadence.every", "must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one curve is required"));
        }
        let mut labels = HashSet::new();
        for (i, curve) in self.algorithms.iter().enumerate() {
            let at = |field: &str| format!("algorithms[{i}].{field}");
            let label = curve.label();
            let label_ok = !label.is_empty()
                && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
                && !label.starts_with('.');
            if !label_ok {
                return Err(Error::config(at("label"), "use only ASCII letters, digits, '_', '-', '.'"));
            }
            if !labels.insert(label) {
                return Err(Error::config(at("label"), format!("duplicate label `{label}`")));
            }
            let alg = curve.algorithm();
            let alg_field = match alg.kind() {
                ReducerKind::Egd => "steps",
                ReducerKind::Ilstd => "alpha/repeats",
                _ => "alpha",
            };
            alg.validate().map_err(|e| Error::config(at(alg_field), e.to_string()))?;
            curve.schedule().validate_for(alg.kind()).map_err(|e| Error::config(at("schedule"), e.to_string()))?;
            let ev = curve.evaluator_config(env, self.lambda, self.ridge_epsilon);
            let mode = ev.mode.unwrap_or_else(|| alg.default_mode());
            alg.engine_options(mode, env.gamma, self.lambda, self.ridge_epsilon, ev.lean)
                .map_err(|e| Error::config(at("mode"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Sets `value` at a dotted path such as `algorithms.0.alpha` or
/// `algorithms[0].alpha` inside a JSON document.
pub fn set_json_path(doc: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let segments: Vec<String> =
        path.replace('[', ".").replace(']', "").split('.').filter(|s| !s.is_empty()).map(str::to_owned).collect();
    if segments.is_empty() {
        return Err(Error::config(path, "empty parameter path"));
    }
    let mut cursor = doc;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        cursor = match cursor {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), value);
                    return Ok(());
                }
                map.get_mut(seg).ok_or_else(|| Error::config(path, format!("no key `{seg}`")))?
            }
            serde_json::Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| Error::config(path, format!("`{seg}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(path, format!("index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(path, format!("cannot descend into `{seg}`"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
