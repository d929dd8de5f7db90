//! Config file schemas and input decoding. Everything the binary reads is
//! JSON with fixed field names; unknown fields are rejected so typos fail
//! loudly at load time instead of silently running a default.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dpaudit_core::audit::CurveFamily;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Consulted for the master seed when neither `--seed` nor the config file
/// pins one. Absent everywhere, the seed defaults to 0.
pub const SEED_ENV_VAR: &str = "DPAUDIT_SEED";

pub fn default_mc_samples() -> usize {
    100_000
}

fn default_field_prime() -> u64 {
    dpaudit_core::secagg::SecAggConfig::DEFAULT_FIELD_PRIME
}

fn default_dzk_window() -> u32 {
    80
}

/// A named component plus its parameter object. Names resolve against the
/// registry at load time; `params` is decoded per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

/// One audit request: mechanism, attack, the input pair, and the
/// statistical knobs handed to the auditor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub mechanism: ComponentSpec,
    pub attack: ComponentSpec,
    /// Mechanism-typed inputs: a number (scalar release), a category
    /// integer (one-hot encoders), a string (sketch encoders), or a vector
    /// given either as an array or as {"constant": c, "dim": n}.
    pub x0: Value,
    pub x1: Value,
    pub n: u32,
    pub gamma: f64,
    pub delta: f64,
    pub family: CurveFamily,
    pub claimed_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

/// Secure-aggregation pipeline selector, mirroring the simulator modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    DpDisabled,
    PrioSymohe,
    PrioPlusplus,
}

/// One simulation run: who submits what, through which pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub mode: SimMode,
    /// Randomized-response level; only prio_symohe reads it.
    #[serde(default)]
    pub epsilon: f64,
    /// Gaussian mask scale; only prio_plusplus reads it.
    #[serde(default)]
    pub sigma_ss: f64,
    pub d: u32,
    #[serde(default = "default_field_prime")]
    pub field_prime: u64,
    pub n_clients: u32,
    /// Per-client inputs: an array of category integers (field modes), an
    /// array of vectors, or one {"constant": c, "dim": n} shared by all
    /// clients (prio_plusplus). Omitted: categories round-robin over [1, d];
    /// plusplus clients all submit the zero vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Pair-window width for the leader-share feasibility attack summary.
    #[serde(default = "default_dzk_window")]
    pub dzk_window: u32,
}

/// Rate experiments that are not membership audits: each trial is an
/// independent derived stream, so results replay per trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Repeated noisy identity queries on a bounded integer domain, then
    /// grid-infeasibility reconstruction of the hidden value.
    AgeReconstruction {
        /// Samples per trial.
        m: u32,
        epsilon_per_sample: f64,
        /// Query range (sensitivity); lambda = range / epsilon_per_sample.
        range: f64,
        /// Domain is {0, 1, ..., domain_max}.
        domain_max: u32,
        trials: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Hamming distance between a randomized one-hot submission and the
    /// original, against per-case thresholds.
    SymoheHamming {
        cases: Vec<HammingCase>,
        trials: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammingCase {
    pub epsilon: f64,
    pub d: u32,
    pub max_distance: u32,
}

/// Decoded audit input. Mechanisms declare which variant they consume and
/// x0/x1 are decoded before any run starts, so shape errors never surface
/// mid-audit.
#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Number(f64),
    Vector(Vec<f64>),
    Category(u32),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Number,
    Vector,
    Category,
    Text,
}

impl InputKind {
    pub fn describe(self) -> &'static str {
        match self {
            InputKind::Number => "a number",
            InputKind::Vector => "an array of numbers or {\"constant\": c, \"dim\": n}",
            InputKind::Category => "a category integer >= 1",
            InputKind::Text => "a string",
        }
    }
}

/// Decode one x0/x1 entry against the kind the mechanism consumes.
pub fn decode_input(raw: &Value, kind: InputKind) -> Result<InputValue> {
    let fail = || format!("expected {}, got {raw}", kind.describe());
    match kind {
        InputKind::Number => {
            let v = raw.as_f64().with_context(fail)?;
            if !v.is_finite() {
                bail!("input number must be finite");
            }
            Ok(InputValue::Number(v))
        }
        InputKind::Category => {
            let v = raw.as_u64().with_context(fail)?;
            if v < 1 || v > u64::from(u32::MAX) {
                bail!("category must lie in [1, 2^32)");
            }
            Ok(InputValue::Category(v as u32))
        }
        InputKind::Text => Ok(InputValue::Text(raw.as_str().with_context(fail)?.to_string())),
        InputKind::Vector => {
            let vec = decode_vector(raw).with_context(fail)?;
            if vec.is_empty() {
                bail!("input vector must be non-empty");
            }
            if vec.iter().any(|v| !v.is_finite()) {
                bail!("input vector entries must be finite");
            }
            Ok(InputValue::Vector(vec))
        }
    }
}

pub fn decode_vector(raw: &Value) -> Result<Vec<f64>> {
    if let Some(items) = raw.as_array() {
        return items
            .iter()
            .map(|v| v.as_f64().context("vector entries must be numbers"))
            .collect();
    }
    if let Some(obj) = raw.as_object() {
        let constant = obj
            .get("constant")
            .and_then(Value::as_f64)
            .context("vector object needs a numeric \"constant\"")?;
        let dim = obj
            .get("dim")
            .and_then(Value::as_u64)
            .context("vector object needs an integer \"dim\"")?;
        if obj.len() != 2 {
            bail!("vector object takes exactly \"constant\" and \"dim\"");
        }
        if dim == 0 || dim > 1_000_000 {
            bail!("vector dim must lie in [1, 1e6]");
        }
        return Ok(vec![constant; dim as usize]);
    }
    bail!("not a vector encoding")
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {} file {}", what, path.display()))?;
    // serde_json errors carry line:column, which is the whole point of
    // funneling every config through here.
    serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid {what} config", path.display()))
}

/// Seed precedence: explicit flag, then config field, then environment,
/// then 0. A set-but-unparsable environment variable is an error rather
/// than a silent fallback.
pub fn resolve_seed(flag: Option<u64>, config_seed: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config_seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV_VAR} must be a u64, got {text:?}")),
        Err(_) => Ok(0),
    }
}
