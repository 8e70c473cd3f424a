//! Deterministic-mean policy evaluation shared by training runs and the
//! standalone eval command.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use smoothrl::env::Env;
use smoothrl::metrics::{score_trace, smoothness_score, ActionTrace, SmoothnessReport};
use smoothrl::policy::{Actor, Checkpoint};
use smoothrl::ppo::evaluate_mean_policy;

use crate::config::ExperimentConfig;

pub struct EvalOutcome {
    pub traces: Vec<ActionTrace>,
    pub returns: Vec<f64>,
    /// Per-episode aggregate smoothness (mean over action dimensions).
    pub per_episode_sm: Vec<f64>,
    pub report: SmoothnessReport,
}

/// Rolls out `n_episodes` with the deterministic mean action (episode `i`
/// reseeds the environment with `seed_base + i`), scores the executed action
/// traces, and aggregates. No exploration randomness enters anywhere.
pub fn evaluate(
    actor: &Actor,
    env_name: &str,
    env_params: &[(String, f64)],
    n_episodes: usize,
    seed_base: u64,
) -> Result<EvalOutcome> {
    let mut env = Env::from_name(env_name, env_params, 0)
        .with_context(|| format!("building environment '{env_name}'"))?;
    let f_s = env.spec().control_hz();
    let episodes = evaluate_mean_policy(&mut env, actor, n_episodes, seed_base)
        .context("mean-policy evaluation")?;
    let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
    let traces: Vec<ActionTrace> = episodes
        .into_iter()
        .enumerate()
        .map(|(i, e)| ActionTrace::new(i, f_s, e.actions))
        .collect::<smoothrl::Result<_>>()
        .context("building action traces")?;
    let per_episode_sm: Vec<f64> = traces
        .iter()
        .map(|t| {
            let dims = score_trace(t)?;
            Ok(dims.iter().sum::<f64>() / dims.len() as f64)
        })
        .collect::<smoothrl::Result<_>>()
        .context("scoring traces")?;
    let report = smoothness_score(&traces, &returns).context("aggregating smoothness")?;
    Ok(EvalOutcome { traces, returns, per_episode_sm, report })
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// JSON report for the standalone eval command. Deliberately excludes wall
/// time so the report is a pure function of (checkpoint, config, episode
/// count, seed base) and reruns are byte-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_config_hash: String,
    pub env: String,
    pub n_episodes: usize,
    pub seed_base: u64,
    pub return_mean: f64,
    pub return_std: f64,
    pub sm_mean: f64,
    pub sm_std: f64,
    pub smoothness: SmoothnessReport,
}

/// Loads a checkpoint and evaluates it under the config's environment.
/// The checkpoint must have been trained on the same environment name the
/// config declares; a mismatch is a usage error, reported before any rollout.
pub fn eval_checkpoint(
    checkpoint_path: &std::path::Path,
    cfg: &ExperimentConfig,
    n_episodes: usize,
    seed_base: u64,
) -> Result<EvalReport> {
    let text = std::fs::read_to_string(checkpoint_path)
        .with_context(|| format!("reading {}", checkpoint_path.display()))?;
    let ck = Checkpoint::from_json(&text)
        .map_err(|e| anyhow::anyhow!("parsing {}: {e}", checkpoint_path.display()))?;
    if ck.env_name != cfg.env_name {
        return Err(crate::UsageError::new(format!(
            "checkpoint was trained on '{}' but the config declares '{}'",
            ck.env_name, cfg.env_name
        ))
        .into());
    }
    let outcome = evaluate(&ck.actor, &cfg.env_name, &cfg.env_params, n_episodes, seed_base)?;
    let (return_mean, return_std) = mean_std(&outcome.returns);
    let (sm_mean, sm_std) = mean_std(&outcome.per_episode_sm);
    Ok(EvalReport {
        checkpoint_config_hash: ck.config_hash,
        env: cfg.env_name.clone(),
        n_episodes,
        seed_base,
        return_mean,
        return_std,
        sm_mean,
        sm_std,
        smoothness: outcome.report,
    })
}
