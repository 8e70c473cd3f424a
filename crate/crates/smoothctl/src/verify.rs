//! Environment verification: Monte-Carlo check that states reached from the
//! same (state, action) under independent bounded noise stay within the
//! declared similar-state bound, plus an optional composite-Lipschitz probe
//! when a trained checkpoint is supplied.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use smoothrl::env::Env;
use smoothrl::metrics::{
    check_similar_state_bound, probe_composite_lipschitz, LipschitzReport, SimilarStateReport,
};
use smoothrl::policy::Checkpoint;

pub struct VerifyOptions {
    pub anchors: usize,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { anchors: 100, samples: 10_000, pairs: 10_000, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub env: String,
    pub similar_state: SimilarStateReport,
    pub lipschitz: Option<LipschitzReport>,
    pub passed: bool,
}

/// Runs the verification suite against an already-built environment.
/// `checkpoint` optionally supplies the policy for the Lipschitz probe; the
/// probe is skipped (not failed) without one, since the spread check alone
/// decides pass/fail.
pub fn verify_env(
    env: &mut Env,
    checkpoint: Option<&Path>,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let env_name = env.spec().name.to_string();
    let similar_state = check_similar_state_bound(env, opts.anchors, opts.samples, opts.seed)
        .context("similar-state bound check")?;

    let lipschitz = match checkpoint {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let ck = Checkpoint::from_json(&text)
                .map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))?;
            if ck.env_name != env_name {
                anyhow::bail!(
                    "checkpoint was trained on '{}' but verifying '{}'",
                    ck.env_name,
                    env_name
                );
            }
            let actor = ck.actor;
            let policy = move |obs: &[f64]| actor.act_mean(obs);
            Some(
                probe_composite_lipschitz(&policy, env, opts.pairs, opts.seed)
                    .context("composite-Lipschitz probe")?,
            )
        }
    };

    let passed = similar_state.passed;
    Ok(VerifyReport { env: env_name, similar_state, lipschitz, passed })
}

/// Formats the report as one PASS/FAIL line per executed check.
pub fn report_lines(report: &VerifyReport) -> Vec<String> {
    let mut lines = Vec::new();
    let s = &report.similar_state;
    lines.push(format!(
        "{}  similar-state spread: {} anchors x {} samples, max {:.6e} vs bound {:.6e} (worst anchor {})",
        if s.passed { "PASS" } else { "FAIL" },
        s.n_anchors,
        s.n_samples,
        s.max_distance,
        s.bound,
        s.worst_anchor,
    ));
    if let Some(l) = &report.lipschitz {
        lines.push(format!(
            "INFO  composite-Lipschitz probe: {} / {} pairs, max {:.4}, median {:.4}, q90 {:.4}",
            l.n_used, l.n_pairs, l.max, l.median, l.q90,
        ));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_opts() -> VerifyOptions {
        VerifyOptions { anchors: 10, samples: 200, pairs: 50, seed: 7 }
    }

    #[test]
    fn default_envs_pass() {
        for name in ["pointmass", "pendulum", "reacher"] {
            let mut env = Env::from_name(name, &[], 0).unwrap();
            let report = verify_env(&mut env, None, &quick_opts()).unwrap();
            assert!(report.passed, "{name} should pass: {:?}", report.similar_state);
            assert!(report.lipschitz.is_none());
            let lines = report_lines(&report);
            assert_eq!(lines.len(), 1);
            assert!(lines[0].starts_with("PASS"));
        }
    }

    #[test]
    fn understated_sensitivity_fails() {
        let params = vec![("noise_sensitivity".to_string(), 0.1)];
        let mut env = Env::from_name("pendulum", &params, 0).unwrap();
        let report = verify_env(&mut env, None, &quick_opts()).unwrap();
        assert!(!report.passed);
        assert!(report_lines(&report)[0].starts_with("FAIL"));
    }

    #[test]
    fn zero_noise_passes_with_zero_spread() {
        let params = vec![("noise_bound".to_string(), 0.0)];
        let mut env = Env::from_name("pointmass", &params, 0).unwrap();
        let report = verify_env(&mut env, None, &quick_opts()).unwrap();
        assert!(report.passed);
        assert_eq!(report.similar_state.max_distance, 0.0);
        assert_eq!(report.similar_state.bound, 0.0);
    }

    #[test]
    fn checkpoint_probe_runs_and_env_mismatch_is_rejected() {
        use smoothrl::env::EnvRng;
        use smoothrl::policy::{Actor, Critic};
        use rand_chacha::rand_core::SeedableRng;

        let mut env = Env::from_name("pointmass", &[], 0).unwrap();
        let spec = env.spec().clone();
        let mut rng = EnvRng::seed_from_u64(11);
        let actor = Actor::new(
            spec.obs_dim,
            spec.action_dim,
            8,
            &spec.action_low,
            &spec.action_high,
            &mut rng,
        );
        let critic = Critic::new(spec.obs_dim, 8, &mut rng);
        let ck = Checkpoint::new("abc".into(), "pointmass".into(), actor, critic);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("checkpoint.json");
        std::fs::write(&path, ck.to_json().unwrap()).unwrap();

        let report = verify_env(&mut env, Some(&path), &quick_opts()).unwrap();
        let probe = report.lipschitz.as_ref().expect("probe should run");
        assert!(probe.n_used > 0);
        assert!(probe.max.is_finite() && probe.max >= 0.0);
        assert_eq!(report_lines(&report).len(), 2);

        let mut other = Env::from_name("pendulum", &[], 0).unwrap();
        let err = verify_env(&mut other, Some(&path), &quick_opts()).unwrap_err();
        assert!(err.to_string().contains("pointmass"));
    }
}
