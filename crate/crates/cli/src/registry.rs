//! Name resolution from config strings to runnable mechanism closures and
//! membership tests. Cross-component checks live here too: an attack only
//! resolves against a mechanism whose observations it can read, so every
//! shape mismatch is a load-time error with both names in the message.

use anyhow::{anyhow, bail, Context, Result};
use dpaudit_core::attacks::{
    boosted_gauss_membership, cms_contrast_membership, cms_exclusion_membership,
    dzk_leader_membership, hcms_contrast_membership, obh_contrast_membership,
    phi_lap_membership, prio_rule_membership, MembershipTest, Observation, PrioRule,
};
use dpaudit_core::error::Result as CoreResult;
use dpaudit_core::gaussian::gaussian_mechanism;
use dpaudit_core::laplace::{sample_laplace, LaplaceParams};
use dpaudit_core::rng::RngStream;
use dpaudit_core::secagg::gauss_secret_share;
use dpaudit_core::sketch::{cms_client, hcms_client, one_bit_histogram, sym_ohe, SketchConfig};
use serde::Deserialize;
use serde_json::Value;

use crate::config::{decode_input, AuditConfig, InputKind, InputValue};

pub const MECHANISM_NAMES: &[&str] =
    &["laplace", "gaussian", "sym_ohe", "cms", "hcms", "obh", "prio_plusplus_leader"];

pub const ATTACK_NAMES: &[&str] = &[
    "phi_lap",
    "boosted_gauss",
    "dzk_leader",
    "cms_contrast",
    "cms_exclusion",
    "hcms_contrast",
    "obh_contrast",
    "first_bit",
    "both_bits",
];

pub type MechanismFn = Box<dyn FnMut(&InputValue, &mut RngStream) -> CoreResult<Observation>>;

/// Everything `audit_epsilon_lb` needs, resolved and validated.
pub struct ResolvedAudit {
    pub x0: InputValue,
    pub x1: InputValue,
    pub mechanism: MechanismFn,
    pub test: MembershipTest,
}

/// Parsed mechanism, pre-closure: attacks read parameters back out of this.
enum Mechanism {
    Laplace { lambda: f64 },
    Gaussian { sigma: f64 },
    SymOhe { config: SketchConfig },
    Cms { config: SketchConfig },
    Hcms { config: SketchConfig },
    Obh { config: SketchConfig },
    PlusPlusLeader { sigma_ss: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaplaceSpec {
    lambda: Option<f64>,
    range: Option<f64>,
    epsilon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianSpec {
    sigma: Option<f64>,
    sigma2: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SketchSpec {
    epsilon: f64,
    d: u32,
    #[serde(default = "one")]
    k: u32,
}

fn one() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskSpec {
    sigma_ss: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowSpec {
    #[serde(default = "default_window")]
    k: u32,
}

fn default_window() -> u32 {
    80
}

fn params_from<T: serde::de::DeserializeOwned>(raw: &Value, who: &str) -> Result<T> {
    // Null means "all defaults": route through {} so serde field defaults apply.
    let effective = if raw.is_null() { Value::Object(Default::default()) } else { raw.clone() };
    serde_json::from_value(effective).with_context(|| format!("bad params for {who}"))
}

fn require_params<T: serde::de::DeserializeOwned>(raw: &Value, who: &str) -> Result<T> {
    serde_json::from_value(raw.clone()).with_context(|| format!("bad params for {who}"))
}

fn no_params(raw: &Value, who: &str) -> Result<()> {
    let empty = raw.is_null() || raw.as_object().is_some_and(|m| m.is_empty());
    if !empty {
        bail!("{who} takes no params, got {raw}");
    }
    Ok(())
}

impl Mechanism {
    fn parse(name: &str, params: &Value) -> Result<Self> {
        match name {
            "laplace" => {
                let spec: LaplaceSpec = require_params(params, "laplace")?;
                let lambda = match (spec.lambda, spec.range, spec.epsilon) {
                    (Some(l), None, None) => l,
                    (None, Some(r), Some(e)) => {
                        LaplaceParams::from_range_eps(0.0, r, e).map_err(|e| anyhow!(e))?.lambda
                    }
                    _ => bail!("laplace takes either {{lambda}} or {{range, epsilon}}"),
                };
                if !(lambda.is_finite() && lambda > 0.0) {
                    bail!("laplace lambda must be finite and positive");
                }
                Ok(Mechanism::Laplace { lambda })
            }
            "gaussian" => {
                let spec: GaussianSpec = require_params(params, "gaussian")?;
                let sigma = match (spec.sigma, spec.sigma2) {
                    (Some(s), None) => s,
                    (None, Some(s2)) if s2 > 0.0 => s2.sqrt(),
                    _ => bail!("gaussian takes exactly one of {{sigma}} or {{sigma2}}"),
                };
                if !(sigma.is_finite() && sigma > 0.0) {
                    bail!("gaussian sigma must be finite and positive");
                }
                Ok(Mechanism::Gaussian { sigma })
            }
            "sym_ohe" => {
                let spec: SketchSpec = require_params(params, "sym_ohe")?;
                let config = SketchConfig::new(spec.epsilon, spec.d, spec.k)
                    .map_err(|e| anyhow!("sym_ohe: {e}"))?;
                Ok(Mechanism::SymOhe { config })
            }
            "cms" => {
                let spec: SketchSpec = require_params(params, "cms")?;
                let config = SketchConfig::new(spec.epsilon, spec.d, spec.k)
                    .map_err(|e| anyhow!("cms: {e}"))?;
                Ok(Mechanism::Cms { config })
            }
            "hcms" => {
                let spec: SketchSpec = require_params(params, "hcms")?;
                let config = SketchConfig::new(spec.epsilon, spec.d, spec.k)
                    .map_err(|e| anyhow!("hcms: {e}"))?;
                if !config.d.is_power_of_two() {
                    bail!("hcms needs a power-of-two d, got {}", config.d);
                }
                Ok(Mechanism::Hcms { config })
            }
            "obh" => {
                let spec: SketchSpec = require_params(params, "obh")?;
                let config = SketchConfig::new(spec.epsilon, spec.d, spec.k)
                    .map_err(|e| anyhow!("obh: {e}"))?;
                if config.d > 128 {
                    bail!("obh supports d up to 128, got {}", config.d);
                }
                Ok(Mechanism::Obh { config })
            }
            "prio_plusplus_leader" => {
                let spec: MaskSpec = require_params(params, "prio_plusplus_leader")?;
                if !(spec.sigma_ss.is_finite() && spec.sigma_ss > 0.0) {
                    bail!("prio_plusplus_leader sigma_ss must be finite and positive");
                }
                Ok(Mechanism::PlusPlusLeader { sigma_ss: spec.sigma_ss })
            }
            other => bail!(
                "unknown mechanism {other:?}; registered mechanisms: {}",
                MECHANISM_NAMES.join(", ")
            ),
        }
    }

    fn input_kind(&self) -> InputKind {
        match self {
            Mechanism::Laplace { .. } => InputKind::Number,
            Mechanism::Gaussian { .. } | Mechanism::PlusPlusLeader { .. } => InputKind::Vector,
            Mechanism::SymOhe { .. } => InputKind::Category,
            Mechanism::Cms { .. } | Mechanism::Hcms { .. } | Mechanism::Obh { .. } => {
                InputKind::Text
            }
        }
    }

    fn into_fn(self) -> MechanismFn {
        match self {
            Mechanism::Laplace { lambda } => Box::new(move |x, stream| {
                let mu = expect_number(x);
                let params = LaplaceParams::new(mu, lambda)?;
                Ok(Observation::Scalar(sample_laplace(stream, params)))
            }),
            Mechanism::Gaussian { sigma } => Box::new(move |x, stream| {
                Ok(Observation::Vector32(gaussian_mechanism(expect_vector(x), sigma, stream)?))
            }),
            Mechanism::SymOhe { config } => Box::new(move |x, stream| {
                Ok(Observation::Bits(sym_ohe(expect_category(x), &config, stream)?))
            }),
            Mechanism::Cms { config } => Box::new(move |x, stream| {
                Ok(Observation::Cms(cms_client(expect_text(x).as_bytes(), &config, stream)))
            }),
            Mechanism::Hcms { config } => Box::new(move |x, stream| {
                Ok(Observation::Hcms(hcms_client(expect_text(x).as_bytes(), &config, stream)?))
            }),
            Mechanism::Obh { config } => Box::new(move |x, stream| {
                Ok(Observation::Obh(one_bit_histogram(expect_text(x).as_bytes(), &config, stream)?))
            }),
            Mechanism::PlusPlusLeader { sigma_ss } => Box::new(move |x, stream| {
                let bundle = gauss_secret_share(expect_vector(x), sigma_ss, stream)?;
                Ok(Observation::Vector64(bundle.leader_share))
            }),
        }
    }
}

// Inputs are decoded against the mechanism's kind before the closures are
// built, so these cannot fire on any path through resolve_audit.
fn expect_number(x: &InputValue) -> f64 {
    match x {
        InputValue::Number(v) => *v,
        other => unreachable!("input decoded as {other:?} for a scalar mechanism"),
    }
}

fn expect_vector(x: &InputValue) -> &[f64] {
    match x {
        InputValue::Vector(v) => v,
        other => unreachable!("input decoded as {other:?} for a vector mechanism"),
    }
}

fn expect_category(x: &InputValue) -> u32 {
    match x {
        InputValue::Category(v) => *v,
        other => unreachable!("input decoded as {other:?} for a categorical mechanism"),
    }
}

fn expect_text(x: &InputValue) -> &str {
    match x {
        InputValue::Text(v) => v,
        other => unreachable!("input decoded as {other:?} for a text mechanism"),
    }
}

fn constant_of(v: &[f64], who: &str) -> Result<f64> {
    let first = v[0];
    if v.iter().any(|&x| x != first) {
        bail!("{who} needs a constant x0 vector (per-coordinate null mean)");
    }
    Ok(first)
}

fn text_pair(x0: &InputValue, x1: &InputValue) -> (String, String) {
    match (x0, x1) {
        (InputValue::Text(a), InputValue::Text(b)) => (a.clone(), b.clone()),
        _ => unreachable!("text mechanism decoded non-text inputs"),
    }
}

fn resolve_attack(
    name: &str,
    params: &Value,
    mech: &Mechanism,
    x0: &InputValue,
    x1: &InputValue,
) -> Result<MembershipTest> {
    let wrong_mech = |needs: &str| {
        anyhow!("attack {name:?} runs against the {needs} mechanism, not this config's")
    };
    match name {
        "phi_lap" => {
            no_params(params, "phi_lap")?;
            let Mechanism::Laplace { lambda } = mech else {
                return Err(wrong_mech("laplace"));
            };
            let InputValue::Number(mu0) = x0 else {
                unreachable!("laplace inputs decode as numbers")
            };
            Ok(phi_lap_membership(*mu0, *lambda))
        }
        "boosted_gauss" => {
            let spec: WindowSpec = params_from(params, "boosted_gauss")?;
            let Mechanism::Gaussian { sigma } = mech else {
                return Err(wrong_mech("gaussian"));
            };
            let (InputValue::Vector(v0), InputValue::Vector(v1)) = (x0, x1) else {
                unreachable!("gaussian inputs decode as vectors")
            };
            // The pair test walks consecutive sampler outputs.
            if v0.len() != v1.len() || v0.len() % 2 != 0 {
                bail!("boosted_gauss needs equal even-dimension inputs");
            }
            let mu0 = constant_of(v0, "boosted_gauss")?;
            Ok(boosted_gauss_membership(mu0, sigma * sigma, spec.k))
        }
        "dzk_leader" => {
            let spec: WindowSpec = params_from(params, "dzk_leader")?;
            let Mechanism::PlusPlusLeader { sigma_ss } = mech else {
                return Err(wrong_mech("prio_plusplus_leader"));
            };
            let (InputValue::Vector(v0), InputValue::Vector(v1)) = (x0, x1) else {
                unreachable!("share inputs decode as vectors")
            };
            if v0.len() != v1.len() || v0.len() % 2 != 0 {
                bail!("dzk_leader needs equal even-dimension inputs");
            }
            Ok(dzk_leader_membership(*sigma_ss, spec.k))
        }
        "cms_contrast" | "cms_exclusion" => {
            no_params(params, name)?;
            let Mechanism::Cms { config } = mech else {
                return Err(wrong_mech("cms"));
            };
            let (t0, t1) = text_pair(x0, x1);
            Ok(if name == "cms_contrast" {
                cms_contrast_membership(t0, t1, config.d)
            } else {
                cms_exclusion_membership(t0, config.d)
            })
        }
        "hcms_contrast" => {
            no_params(params, name)?;
            let Mechanism::Hcms { config } = mech else {
                return Err(wrong_mech("hcms"));
            };
            let (t0, t1) = text_pair(x0, x1);
            Ok(hcms_contrast_membership(t0, t1, config.d))
        }
        "obh_contrast" => {
            no_params(params, name)?;
            let Mechanism::Obh { .. } = mech else {
                return Err(wrong_mech("obh"));
            };
            let (t0, t1) = text_pair(x0, x1);
            Ok(obh_contrast_membership(t0, t1))
        }
        "first_bit" | "both_bits" => {
            no_params(params, name)?;
            let Mechanism::SymOhe { config } = mech else {
                return Err(wrong_mech("sym_ohe"));
            };
            if config.d != 2 {
                bail!("{name} reads a 2-bit reconstruction; sym_ohe d must be 2");
            }
            let rule =
                if name == "first_bit" { PrioRule::FirstBit } else { PrioRule::BothBits };
            Ok(prio_rule_membership(rule))
        }
        other => bail!(
            "unknown attack {other:?}; registered attacks: {}",
            ATTACK_NAMES.join(", ")
        ),
    }
}

/// Resolve a full audit config into runnable parts, or explain what is
/// inconsistent about it.
pub fn resolve_audit(config: &AuditConfig) -> Result<ResolvedAudit> {
    let mech = Mechanism::parse(&config.mechanism.name, &config.mechanism.params)
        .context("mechanism")?;
    let kind = mech.input_kind();
    let x0 = decode_input(&config.x0, kind).context("x0")?;
    let x1 = decode_input(&config.x1, kind).context("x1")?;
    let test =
        resolve_attack(&config.attack.name, &config.attack.params, &mech, &x0, &x1)
            .context("attack")?;
    Ok(ResolvedAudit { x0, x1, mechanism: mech.into_fn(), test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base_config() -> AuditConfig {
        serde_json::from_value(json!({
            "mechanism": {"name": "laplace", "params": {"range": 1.0, "epsilon": 1.0}},
            "attack": {"name": "phi_lap"},
            "x0": 0.0, "x1": 1.0,
            "n": 1000, "gamma": 0.05, "delta": 0.0,
            "family": "laplace", "claimed_epsilon": 1.0,
            "master_seed": 7
        }))
        .unwrap()
    }

    #[test]
    fn known_pairs_resolve() {
        assert!(resolve_audit(&base_config()).is_ok());

        let sketch: AuditConfig = serde_json::from_value(json!({
            "mechanism": {"name": "cms", "params": {"epsilon": 4.0, "d": 1024, "k": 65536}},
            "attack": {"name": "cms_contrast"},
            "x0": "✗", "x1": "👉",
            "n": 1000, "gamma": 0.05, "delta": 0.0,
            "family": "eps_delta", "claimed_epsilon": 4.0
        }))
        .unwrap();
        assert!(resolve_audit(&sketch).is_ok());
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let mut config = base_config();
        config.mechanism.name = "laplcae".into();
        let err = format!("{:#}", resolve_audit(&config).err().expect("resolve must fail"));
        assert!(err.contains("unknown mechanism"), "{err}");
        assert!(err.contains("laplace"), "{err}");

        let mut config = base_config();
        config.attack.name = "phi_lappy".into();
        let err = format!("{:#}", resolve_audit(&config).err().expect("resolve must fail"));
        assert!(err.contains("unknown attack"), "{err}");
    }

    #[test]
    fn cross_component_mismatches_fail_at_resolve_time() {
        let mut config = base_config();
        config.attack.name = "boosted_gauss".into();
        let err = format!("{:#}", resolve_audit(&config).err().expect("resolve must fail"));
        assert!(err.contains("gaussian"), "{err}");

        // prio rules need d exactly 2
        let bad: AuditConfig = serde_json::from_value(json!({
            "mechanism": {"name": "sym_ohe", "params": {"epsilon": 1.0, "d": 3}},
            "attack": {"name": "both_bits"},
            "x0": 1, "x1": 2,
            "n": 1000, "gamma": 0.05, "delta": 0.0,
            "family": "eps_delta", "claimed_epsilon": 1.0
        }))
        .unwrap();
        let err = format!("{:#}", resolve_audit(&bad).err().expect("resolve must fail"));
        assert!(err.contains("d must be 2"), "{err}");
    }

    #[test]
    fn mechanism_closures_produce_matching_observations() {
        let config = base_config();
        let mut resolved = resolve_audit(&config).unwrap();
        let mut stream = dpaudit_core::rng::RngStream::new(3);
        let obs = (resolved.mechanism)(&resolved.x0, &mut stream).unwrap();
        assert!(matches!(obs, Observation::Scalar(_)));
        let pred = resolved.test.predict(&obs);
        assert!(pred == 0 || pred == 1);
    }
}
