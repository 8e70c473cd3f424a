//! Seeded training fan-out: one run per configured seed, each writing
//! `checkpoint.json`, `metrics.csv`, `traces.csv`, and `report.json` under
//! `<output>/<config-hash>/<seed>/`.
//!
//! Runs execute in parallel worker slots (capped by `SMOOTHCTL_THREADS`);
//! each run is internally deterministic, and all files are written via
//! temp-then-rename so a rerun either reproduces a file byte-identically or
//! leaves it untouched.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use smoothrl::env::{build_dynamics, EnvRng};
use smoothrl::metrics::{ActionTrace, SmoothnessReport};
use smoothrl::policy::{Actor, Checkpoint, Critic};
use smoothrl::ppo::{train, IterationRecord};

use crate::config::ExperimentConfig;
use crate::evaluation::{evaluate, mean_std};

/// Outcome of one `(config, seed)` training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub return_mean: f64,
    pub return_std: f64,
    pub sm_mean: f64,
    pub sm_std: f64,
    pub wall_time_s: f64,
    pub checkpoint: String,
    pub metrics_csv: String,
    pub failed: bool,
    pub error: Option<String>,
    pub smoothness: Option<SmoothnessReport>,
}

/// Writes via a temp file in the same directory, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("target path has no parent")?;
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| anyhow::anyhow!("persisting {}: {e}", path.display()))?;
    Ok(())
}

/// Worker slot count: `SMOOTHCTL_THREADS` if set and positive, else the
/// machine's available parallelism.
pub fn worker_slots() -> usize {
    if let Ok(v) = std::env::var("SMOOTHCTL_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub const METRICS_HEADER: &str =
    "iteration,steps,mean_return,J_pi,L_S,L_P,L_T,value_loss,entropy,grad_norm";

pub fn metrics_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.steps,
            r.mean_return,
            r.j_pi,
            r.l_s,
            r.l_p,
            r.l_t,
            r.value_loss,
            r.entropy,
            r.grad_norm
        ));
    }
    out
}

pub fn traces_csv(traces: &[ActionTrace]) -> String {
    let d = traces.first().map_or(0, ActionTrace::action_dim);
    let mut out = String::from("episode,step");
    for i in 0..d {
        out.push_str(&format!(",a_{i}"));
    }
    out.push('\n');
    for trace in traces {
        for (step, row) in trace.actions.iter().enumerate() {
            out.push_str(&format!("{},{step}", trace.episode));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Parses a traces CSV back into per-episode traces (inverse of
/// [`traces_csv`]); `f_s` is supplied by the caller since the CSV carries
/// only actions.
pub fn parse_traces_csv(text: &str, f_s: f64) -> Result<Vec<ActionTrace>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty traces file")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "episode" || cols[1] != "step" {
        anyhow::bail!("unexpected traces header: {header}");
    }
    let d = cols.len() - 2;
    let mut episodes: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            anyhow::bail!("traces row {}: {} fields, expected {}", i + 2, fields.len(), d + 2);
        }
        let ep: usize = fields[0].parse().with_context(|| format!("traces row {}", i + 2))?;
        let action: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("traces row {}", i + 2))?;
        match episodes.last_mut() {
            Some((cur, rows)) if *cur == ep => rows.push(action),
            _ => episodes.push((ep, vec![action])),
        }
    }
    episodes
        .into_iter()
        .map(|(ep, rows)| ActionTrace::new(ep, f_s, rows).map_err(Into::into))
        .collect()
}

pub fn config_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join(cfg.hash())
}

pub fn run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    config_dir(cfg).join(seed.to_string())
}

const MODEL_INIT_SALT: u64 = 0x243F_6A88_85A3_08D3;

/// Builds the seed's actor/critic pair. Initialization depends only on the
/// run seed and the network dimensions, so configs that differ in
/// regularization start from identical parameters.
pub fn init_models(cfg: &ExperimentConfig, seed: u64) -> Result<(Actor, Critic)> {
    let dynamics = build_dynamics(&cfg.env_name, &cfg.env_params)?;
    let spec = dynamics.spec();
    let mut rng = EnvRng::seed_from_u64(seed ^ MODEL_INIT_SALT);
    let actor = Actor::new(
        spec.obs_dim,
        spec.action_dim,
        cfg.algorithm.hidden,
        &spec.action_low,
        &spec.action_high,
        &mut rng,
    );
    let critic = Critic::new(spec.obs_dim, cfg.algorithm.hidden, &mut rng);
    Ok((actor, critic))
}

/// Trains one seed, evaluates the result, and writes the run directory.
/// A numeric failure mid-training still produces a (failed) record and
/// whatever metrics were collected before the abort.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> RunRecord {
    let started = Instant::now();
    let dir = run_dir(cfg, seed);
    let hash = cfg.hash();
    let mut record = RunRecord {
        config_hash: hash.clone(),
        method: cfg.method_label(),
        env: cfg.env_name.clone(),
        seed,
        return_mean: 0.0,
        return_std: 0.0,
        sm_mean: 0.0,
        sm_std: 0.0,
        wall_time_s: 0.0,
        checkpoint: dir.join("checkpoint.json").display().to_string(),
        metrics_csv: dir.join("metrics.csv").display().to_string(),
        failed: false,
        error: None,
        smoothness: None,
    };

    let outcome: Result<()> = (|| {
        let (mut actor, mut critic) = init_models(cfg, seed)?;
        let mut ppo = cfg.algorithm.clone();
        ppo.seed = seed;
        let env_name = cfg.env_name.clone();
        let env_params = cfg.env_params.clone();
        let factory = move || build_dynamics(&env_name, &env_params);

        let mut rows: Vec<IterationRecord> = Vec::new();
        let train_result = {
            let mut sink = |r: &IterationRecord| rows.push(r.clone());
            train(&factory, &mut actor, &mut critic, &cfg.regularizer, &ppo, &mut sink)
        };
        atomic_write(&dir.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
        train_result.context("training aborted")?;

        let eval = evaluate(
            &actor,
            &cfg.env_name,
            &cfg.env_params,
            cfg.n_eval_episodes,
            cfg.eval_seed_base,
        )?;
        let (rm, rs) = mean_std(&eval.returns);
        let (sm, ss) = mean_std(&eval.per_episode_sm);
        record.return_mean = rm;
        record.return_std = rs;
        record.sm_mean = sm;
        record.sm_std = ss;
        record.smoothness = Some(eval.report.clone());

        let checkpoint = Checkpoint::new(hash.clone(), cfg.env_name.clone(), actor, critic);
        atomic_write(&dir.join("checkpoint.json"), checkpoint.to_json()?.as_bytes())?;
        atomic_write(&dir.join("traces.csv"), traces_csv(&eval.traces).as_bytes())?;
        Ok(())
    })();

    if let Err(e) = outcome {
        record.failed = true;
        record.error = Some(format!("{e:#}"));
    }
    record.wall_time_s = started.elapsed().as_secs_f64();
    if let Ok(json) = serde_json::to_string_pretty(&record) {
        let _ = atomic_write(&dir.join("report.json"), format!("{json}\n").as_bytes());
    }
    record
}

/// One training run per configured seed, in parallel worker slots. Returns
/// records in seed order; any failed run is reported but does not stop the
/// others.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let cdir = config_dir(cfg);
    std::fs::create_dir_all(&cdir)?;
    atomic_write(&cdir.join("config.ini"), cfg.canonical().as_bytes())?;

    let slots = worker_slots().min(cfg.seeds.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, RunRecord)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..slots {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cfg.seeds.len() {
                    break;
                }
                let record = run_single(cfg, cfg.seeds[i]);
                results.lock().expect("results lock").push((i, record));
            });
        }
    });
    let mut indexed = results.into_inner().expect("results lock");
    indexed.sort_by_key(|(i, _)| *i);
    let records: Vec<RunRecord> = indexed.into_iter().map(|(_, r)| r).collect();

    println!("config {} ({} / {})", cfg.hash(), cfg.env_name, cfg.method_label());
    for r in &records {
        if r.failed {
            println!(
                "  seed {:>3}  FAILED  {}",
                r.seed,
                r.error.as_deref().unwrap_or("unknown error")
            );
        } else {
            println!(
                "  seed {:>3}  return {:>10.3} ({:.3})  sm {:>8.4} ({:.4})  {:>6.1}s",
                r.seed, r.return_mean, r.return_std, r.sm_mean, r.sm_std, r.wall_time_s
            );
        }
    }
    Ok(records)
}

/// Loads every seed record under a config directory.
pub fn load_records(config_dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(config_dir)
        .with_context(|| format!("reading {}", config_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for dir in entries {
        let report = dir.join("report.json");
        if report.is_file() {
            let text = std::fs::read_to_string(&report)?;
            let record: RunRecord = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", report.display()))?;
            records.push(record);
        }
    }
    if records.is_empty() {
        anyhow::bail!("no run records under {}", config_dir.display());
    }
    Ok(records)
}
