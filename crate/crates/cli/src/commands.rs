//! Subcommand bodies. Each takes paths plus parsed flags, does all the work,
//! writes machine-readable output atomically (temp sibling, then rename), and
//! prints exactly one human summary line to stdout.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use dpaudit_core::attacks::{cms_decode, dzk_leader_membership, hcms_decode, GuessSet, Observation};
use dpaudit_core::audit::{audit_epsilon_lb_traced, AuditParams, AuditReport};
use dpaudit_core::laplace::{sample_laplace, LaplaceParams};
use dpaudit_core::rng::RngStream;
use dpaudit_core::secagg::{
    aggregate_field, aggregate_gauss, field_reconstruct, gauss_reconstruct, gauss_secret_share,
    prio_client_submit, SecAggConfig, SecAggMode, ShareSide,
};
use dpaudit_core::sketch::{hamming, sym_ohe, CmsRecord, SketchConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    decode_vector, load_json, resolve_seed, AuditConfig, ExperimentConfig, SimMode, SimulateConfig,
};
use crate::record::{parse_entry, parse_hcms_entry, parse_record};
use crate::registry::resolve_audit;

/// Write-then-rename so readers never observe a half-written report.
fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
        bail!("output path {} has no usable file name", path.display());
    };
    let tmp = path.with_file_name(format!("{name}.partial"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("moving report into {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, doc: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    atomic_write(path, &text)
}

#[derive(Serialize)]
struct AuditReportEnvelope {
    timestamp: String,
    mechanism: String,
    attack: String,
    #[serde(flatten)]
    report: AuditReport,
}

/// Run one audit config end to end. Returns whether the verdict was a
/// violation so main can pick the exit code.
pub fn cmd_audit(config_path: &Path, seed_flag: Option<u64>, out: &Path) -> Result<bool> {
    let config: AuditConfig = load_json(config_path, "audit config")?;
    let master_seed = resolve_seed(seed_flag, config.master_seed)?;
    let mut resolved = resolve_audit(&config)?;
    let params = AuditParams {
        n: config.n,
        family: config.family,
        gamma: config.gamma,
        delta: config.delta,
        claimed_epsilon: config.claimed_epsilon,
        master_seed,
        mc_samples: config.mc_samples,
    };
    let (report, runs) = audit_epsilon_lb_traced(
        &mut resolved.mechanism,
        &resolved.test,
        &resolved.x0,
        &resolved.x1,
        &params,
    )
    .map_err(|e| anyhow!("audit failed: {e}"))?;

    let trace_path = out.with_extension("csv");
    if trace_path == out {
        bail!(
            "audit report path {} must not use the .csv extension; \
             the per-run trace is written alongside it as .csv",
            out.display()
        );
    }
    let mut trace = String::from("run_index,secret_bit,prediction\n");
    for run in &runs {
        trace.push_str(&format!("{},{},{}\n", run.run_index, run.secret_bit, run.prediction));
    }

    let envelope = AuditReportEnvelope {
        timestamp: Utc::now().to_rfc3339(),
        mechanism: config.mechanism.name.clone(),
        attack: config.attack.name.clone(),
        report,
    };
    write_json(out, &envelope)?;
    atomic_write(&trace_path, &trace)?;

    let report = &envelope.report;
    println!(
        "{} {} vs {}: eps_lb {:.4} (claimed {:.4}, delta {:.1e}, n {}) -> {}",
        report.verdict,
        envelope.mechanism,
        envelope.attack,
        report.eps_lb,
        report.claimed_epsilon,
        report.delta,
        report.n_runs,
        out.display()
    );
    Ok(report.is_violation())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DecodeMechanism {
    Cms,
    Hcms,
}

/// Replay server-side decoding against an exported analytics log.
pub fn cmd_decode(
    log: &Path,
    guesses_path: &Path,
    mechanism: DecodeMechanism,
    out: &Path,
    i_own_this_log: bool,
) -> Result<()> {
    if !i_own_this_log {
        bail!(
            "refusing to decode: pass --i-own-this-log to confirm the log came from \
             your own device or simulation. Decoding third-party telemetry is not \
             something this tool will help with."
        );
    }
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let record = parse_record(&text)?;
    let (k, m) = (record.parameters.k, record.parameters.m);
    if mechanism == DecodeMechanism::Hcms && !m.is_power_of_two() {
        bail!("hcms decoding needs a power-of-two payload width, log has m = {m}");
    }

    let guesses: Vec<String> = fs::read_to_string(guesses_path)
        .with_context(|| format!("reading {}", guesses_path.display()))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if guesses.is_empty() {
        bail!("guess file {} contains no candidates", guesses_path.display());
    }
    let guesses = GuessSet::new(guesses).map_err(|e| anyhow!("guess set: {e}"))?;

    let mut results = Vec::new();
    let mut malformed = 0usize;
    for (i, line) in record.records.iter().enumerate() {
        let decoded = match mechanism {
            DecodeMechanism::Cms => parse_entry(line, k, m, i).and_then(|entry| {
                let rec = CmsRecord { bits: entry.bits, hash_index: entry.hash_index };
                let hits = cms_decode(&rec, &guesses, m).expect("record width was built as m");
                Ok((entry.hash_index, hits))
            }),
            DecodeMechanism::Hcms => parse_hcms_entry(line, k, m, i).and_then(|rec| {
                let hits = hcms_decode(&rec, &guesses, m).expect("m checked as a power of two");
                Ok((rec.hash_index, hits))
            }),
        };
        match decoded {
            Ok((hash_index, hits)) => {
                let plausible: Vec<&str> =
                    hits.iter().map(|&g| guesses.candidates()[g].as_str()).collect();
                results.push(json!({
                    "index": i,
                    "hash_index": hash_index,
                    "plausible": plausible,
                }));
            }
            Err(e) => {
                malformed += 1;
                results.push(json!({ "index": i, "error": e.to_string() }));
            }
        }
    }

    let doc = json!({
        "key": record.key,
        "mechanism": match mechanism { DecodeMechanism::Cms => "cms", DecodeMechanism::Hcms => "hcms" },
        "parameters": record.parameters,
        "n_guesses": guesses.len(),
        "results": results,
    });
    write_json(out, &doc)?;
    println!(
        "decoded {} record(s) ({} malformed) against {} guesses -> {}",
        record.records.len(),
        malformed,
        guesses.len(),
        out.display()
    );
    Ok(())
}

fn field_inputs(config: &SimulateConfig) -> Result<Vec<u32>> {
    let Some(raw) = &config.inputs else {
        return Ok((0..config.n_clients).map(|i| (i % config.d) + 1).collect());
    };
    let arr = raw.as_array().context("field-mode inputs must be an array of categories")?;
    if arr.len() != config.n_clients as usize {
        bail!("inputs lists {} clients, config says {}", arr.len(), config.n_clients);
    }
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            let x = v
                .as_u64()
                .filter(|&x| x >= 1 && x <= u64::from(config.d))
                .with_context(|| format!("input {i} must be an integer in [1, {}]", config.d))?;
            Ok(x as u32)
        })
        .collect()
}

fn vector_inputs(config: &SimulateConfig) -> Result<Vec<Vec<f64>>> {
    let d = config.d as usize;
    let n = config.n_clients as usize;
    let Some(raw) = &config.inputs else {
        return Ok(vec![vec![0.0; d]; n]);
    };
    let vectors: Vec<Vec<f64>> = if raw.is_object() {
        let v = decode_vector(raw).context("inputs")?;
        vec![v; n]
    } else {
        let arr = raw.as_array().context("vector-mode inputs must be an array of vectors")?;
        if arr.len() != n {
            bail!("inputs lists {} clients, config says {}", arr.len(), config.n_clients);
        }
        arr.iter()
            .enumerate()
            .map(|(i, v)| decode_vector(v).with_context(|| format!("input {i}")))
            .collect::<Result<_>>()?
    };
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        bail!("every input vector must have dimension {d}, found one of {}", bad.len());
    }
    Ok(vectors)
}

/// Drive the secure-aggregation simulator and record every server-side view.
pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<()> {
    let config: SimulateConfig = load_json(config_path, "simulate config")?;
    let seed = resolve_seed(None, config.seed)?;
    let doc = match config.mode {
        SimMode::DpDisabled | SimMode::PrioSymohe => {
            let mode = match config.mode {
                SimMode::DpDisabled => SecAggMode::DpDisabled,
                _ => SecAggMode::PrioSymOhe,
            };
            if mode == SecAggMode::PrioSymOhe && config.epsilon <= 0.0 {
                bail!("prio_symohe needs epsilon > 0");
            }
            // sigma_ss is a plusplus-only knob; pass something valid.
            let sa = SecAggConfig::new(
                mode,
                config.epsilon,
                config.d,
                config.field_prime,
                1.0,
                config.n_clients,
            )?;
            let xs = field_inputs(&config)?;
            let mut bundles = Vec::with_capacity(xs.len());
            let mut exact = Vec::with_capacity(xs.len());
            for (i, &x) in xs.iter().enumerate() {
                let mut stream = RngStream::derive(seed, i as u64);
                let bundle = prio_client_submit(x, &sa, &mut stream)?;
                let onehot: Vec<u64> =
                    (0..config.d).map(|b| u64::from(b == x - 1)).collect();
                exact.push(field_reconstruct(&bundle)? == onehot);
                bundles.push(bundle);
            }
            let n = xs.len() as f64;
            json!({
                "mode": config.mode,
                "d": config.d,
                "n_clients": config.n_clients,
                "field_prime": config.field_prime,
                "epsilon": config.epsilon,
                "seed": seed,
                "inputs": xs,
                "views": {
                    "leader": aggregate_field(&bundles, ShareSide::Leader)?,
                    "helper": aggregate_field(&bundles, ShareSide::Helper)?,
                    "combined": aggregate_field(&bundles, ShareSide::Combined)?,
                },
                "client_exact_reconstruction": exact,
                "exact_reconstruction_rate": exact.iter().filter(|&&e| e).count() as f64 / n,
            })
        }
        SimMode::PrioPlusplus => {
            let sa = SecAggConfig::new(
                SecAggMode::PrioPlusPlus,
                config.epsilon,
                config.d,
                config.field_prime,
                config.sigma_ss,
                config.n_clients,
            )?;
            let ys = vector_inputs(&config)?;
            let mut bundles = Vec::with_capacity(ys.len());
            let mut exact = Vec::with_capacity(ys.len());
            for (i, y) in ys.iter().enumerate() {
                let mut stream = RngStream::derive(seed, i as u64);
                let bundle = gauss_secret_share(y, sa.sigma_ss, &mut stream)?;
                exact.push(gauss_reconstruct(&bundle)? == *y);
                bundles.push(bundle);
            }
            // The leader-share feasibility test walks pairs, so it needs an
            // even dimension of at least 2; otherwise skip the summary.
            let dzk = if config.d >= 2 && config.d % 2 == 0 {
                let test = dzk_leader_membership(sa.sigma_ss, config.dzk_window);
                let flags: Vec<bool> = bundles
                    .iter()
                    .map(|b| {
                        test.predict(&Observation::Vector64(b.leader_share.clone())) == 1
                    })
                    .collect();
                let rate = flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64;
                json!({ "window": config.dzk_window, "flags": flags, "flag_rate": rate })
            } else {
                Value::Null
            };
            let n = ys.len() as f64;
            json!({
                "mode": config.mode,
                "d": config.d,
                "n_clients": config.n_clients,
                "sigma_ss": sa.sigma_ss,
                "seed": seed,
                "views": {
                    "leader": aggregate_gauss(&bundles, ShareSide::Leader)?,
                    "helper": aggregate_gauss(&bundles, ShareSide::Helper)?,
                    "combined": aggregate_gauss(&bundles, ShareSide::Combined)?,
                },
                "client_exact_reconstruction": exact,
                "exact_reconstruction_rate": exact.iter().filter(|&&e| e).count() as f64 / n,
                "dzk_leader_summary": dzk,
            })
        }
    };
    write_json(out, &doc)?;
    println!(
        "simulated {} clients through {:?} -> {}",
        config.n_clients, config.mode, out.display()
    );
    Ok(())
}

/// Rate experiments that are not membership audits.
pub fn cmd_experiment(config_path: &Path, out: &Path) -> Result<()> {
    let config: ExperimentConfig = load_json(config_path, "experiment config")?;
    let doc = match &config {
        ExperimentConfig::AgeReconstruction {
            m,
            epsilon_per_sample,
            range,
            domain_max,
            trials,
            seed,
        } => {
            if *m == 0 || *trials == 0 {
                bail!("age_reconstruction needs m >= 1 and trials >= 1");
            }
            if !(*epsilon_per_sample > 0.0 && *range > 0.0) {
                bail!("age_reconstruction needs positive epsilon_per_sample and range");
            }
            let seed = resolve_seed(None, *seed)?;
            let lambda = range / epsilon_per_sample;
            let domain: Vec<i64> = (0..=i64::from(*domain_max)).collect();
            let mut kept = 0u32;
            let mut singleton = 0u32;
            for t in 0..*trials {
                let mut stream = RngStream::derive(seed, u64::from(t));
                let truth = i64::from(stream.uniform_below(domain_max + 1));
                let params = LaplaceParams::new(truth as f64, lambda)?;
                let samples: Vec<f64> =
                    (0..*m).map(|_| sample_laplace(&mut stream, params)).collect();
                let candidates =
                    dpaudit_core::attacks::reconstruct_laplace_input(&samples, &domain, lambda);
                if candidates.contains(&truth) {
                    kept += 1;
                }
                if candidates == [truth] {
                    singleton += 1;
                }
            }
            let n = f64::from(*trials);
            json!({
                "kind": "age_reconstruction",
                "m": m,
                "epsilon_per_sample": epsilon_per_sample,
                "lambda": lambda,
                "domain_max": domain_max,
                "trials": trials,
                "seed": seed,
                "kept_truth": kept,
                "kept_truth_rate": f64::from(kept) / n,
                "exact_singleton": singleton,
                "exact_singleton_rate": f64::from(singleton) / n,
            })
        }
        ExperimentConfig::SymoheHamming { cases, trials, seed } => {
            if cases.is_empty() || *trials == 0 {
                bail!("symohe_hamming needs at least one case and trials >= 1");
            }
            let seed = resolve_seed(None, *seed)?;
            let mut rows = Vec::with_capacity(cases.len());
            for (ci, case) in cases.iter().enumerate() {
                let sketch = SketchConfig::new(case.epsilon, case.d, 1)
                    .map_err(|e| anyhow!("case {ci}: {e}"))?;
                let onehot: Vec<u8> = (0..case.d).map(|b| u8::from(b == 0)).collect();
                let mut within = 0u32;
                for t in 0..*trials {
                    let mut stream =
                        RngStream::derive(seed, u64::from(ci as u32) * u64::from(*trials) + u64::from(t));
                    let y = sym_ohe(1, &sketch, &mut stream)?;
                    if hamming(&y, &onehot)? as u64 <= u64::from(case.max_distance) {
                        within += 1;
                    }
                }
                rows.push(json!({
                    "epsilon": case.epsilon,
                    "d": case.d,
                    "max_distance": case.max_distance,
                    "within": within,
                    "within_rate": f64::from(within) / f64::from(*trials),
                }));
            }
            json!({
                "kind": "symohe_hamming",
                "trials": trials,
                "seed": seed,
                "cases": rows,
            })
        }
    };
    write_json(out, &doc)?;
    let kind = match &config {
        ExperimentConfig::AgeReconstruction { .. } => "age_reconstruction",
        ExperimentConfig::SymoheHamming { .. } => "symohe_hamming",
    };
    println!("experiment {kind} -> {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_partial() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("report.json");
        atomic_write(&target, "first").unwrap();
        atomic_write(&target, "second").unwrap();
        assert_eq!(fs::read_to_string(&target).unwrap(), "second");
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["report.json".to_string()]);
    }

    #[test]
    fn audit_out_path_must_not_be_csv() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("audit.json");
        fs::write(
            &config,
            serde_json::json!({
                "mechanism": {"name": "laplace", "params": {"lambda": 1.0}},
                "attack": {"name": "phi_lap"},
                "x0": 0.0, "x1": 1.0,
                "n": 100, "gamma": 0.05, "delta": 0.0,
                "family": "laplace", "claimed_epsilon": 1.0,
                "master_seed": 1
            })
            .to_string(),
        )
        .unwrap();
        let err = cmd_audit(&config, None, &dir.path().join("report.csv")).unwrap_err();
        assert!(err.to_string().contains(".csv"), "{err}");
    }
}
