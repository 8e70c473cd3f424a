//! Sectioned key=value experiment configs.
//!
//! Grammar: `[section]` headers, `key = value` lines, `#`/`;` comments, blank
//! lines ignored. Sections: `[environment]` (name plus numeric overrides),
//! `[algorithm]` (PPO hyperparameters), `[regularizer]` (smoothing methods
//! and weights), `[evaluation]`, `[output]`. Every key is optional except
//! `environment.name`; omitted keys take the documented defaults.
//!
//! Configs have a canonical serialization (fixed section and key order,
//! shortest-round-trip float formatting); the run identity hash covers the
//! four semantic sections only, so changing the output directory or adding
//! seeds does not displace existing runs.

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use smoothrl::env::build_dynamics;
use smoothrl::ppo::PpoConfig;
use smoothrl::smoothing::{RegularizerSpec, SpatialMethod, TemporalMethod};

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env_name: String,
    /// Environment overrides, kept sorted by key.
    pub env_params: Vec<(String, f64)>,
    /// Per-run seed is injected at launch; the `seed` field here stays 0.
    pub algorithm: PpoConfig,
    pub regularizer: RegularizerSpec,
    pub n_eval_episodes: usize,
    pub eval_seed_base: u64,
    pub output_dir: String,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env_name: String::new(),
            env_params: Vec::new(),
            algorithm: PpoConfig::default(),
            regularizer: RegularizerSpec::none(),
            n_eval_episodes: 10,
            eval_seed_base: 10_000,
            output_dir: "runs".to_string(),
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>().map_err(|_| ConfigError::at(line, format!("invalid value '{v}' for {key}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::at(line, format!("{key} must be 'true' or 'false', got '{v}'"))),
    }
}

fn spatial_name(m: SpatialMethod) -> &'static str {
    match m {
        SpatialMethod::None => "none",
        SpatialMethod::CapsGaussian => "caps_gaussian",
        SpatialMethod::L2c2Interp => "l2c2",
        SpatialMethod::Asap => "asap",
    }
}

fn temporal_name(m: TemporalMethod) -> &'static str {
    match m {
        TemporalMethod::None => "none",
        TemporalMethod::CapsFirstOrder => "caps",
        TemporalMethod::GradCaps => "grad_caps",
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        let mut seen: Vec<(String, String)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(lineno, "unterminated section header"))?
                    .trim()
                    .to_string();
                match name.as_str() {
                    "environment" | "algorithm" | "regularizer" | "evaluation" | "output" => {
                        section = Some(name);
                    }
                    other => {
                        return Err(ConfigError::at(lineno, format!("unknown section [{other}]")))
                    }
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(lineno, format!("expected key = value, got '{line}'")))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let sec = section
                .clone()
                .ok_or_else(|| ConfigError::at(lineno, "key=value before any [section]"))?;
            if seen.iter().any(|(s, k)| *s == sec && *k == key) {
                return Err(ConfigError::at(lineno, format!("duplicate key '{key}' in [{sec}]")));
            }
            seen.push((sec.clone(), key.clone()));
            cfg.apply(lineno, &sec, &key, &value)?;
        }

        if cfg.env_name.is_empty() {
            return Err(ConfigError::general("missing required key 'name' in [environment]"));
        }
        cfg.env_params.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, sec: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        match sec {
            "environment" => {
                if key == "name" {
                    self.env_name = value.to_string();
                } else {
                    let v: f64 = parse_num(line, key, value)?;
                    self.env_params.push((key.to_string(), v));
                }
            }
            "algorithm" => {
                let a = &mut self.algorithm;
                match key {
                    "n_envs" => a.n_envs = parse_num(line, key, value)?,
                    "rollout_len" => a.rollout_len = parse_num(line, key, value)?,
                    "epochs" => a.epochs = parse_num(line, key, value)?,
                    "minibatch_size" => a.minibatch_size = parse_num(line, key, value)?,
                    "clip_eps" => a.clip_eps = parse_num(line, key, value)?,
                    "gamma" => a.gamma = parse_num(line, key, value)?,
                    "gae_lambda" => a.gae_lambda = parse_num(line, key, value)?,
                    "value_coef" => a.value_coef = parse_num(line, key, value)?,
                    "entropy_coef" => a.entropy_coef = parse_num(line, key, value)?,
                    "max_grad_norm" => a.max_grad_norm = parse_num(line, key, value)?,
                    "normalize_advantages" => {
                        a.normalize_advantages = parse_bool(line, key, value)?
                    }
                    "lr" => a.lr = parse_num(line, key, value)?,
                    "hidden" => a.hidden = parse_num(line, key, value)?,
                    "total_steps" => a.total_steps = parse_num(line, key, value)?,
                    other => {
                        return Err(ConfigError::at(
                            line,
                            format!("unknown key '{other}' in [algorithm]"),
                        ))
                    }
                }
            }
            "regularizer" => {
                let r = &mut self.regularizer;
                match key {
                    "spatial" => {
                        r.spatial = match value {
                            "none" => SpatialMethod::None,
                            "caps_gaussian" => SpatialMethod::CapsGaussian,
                            "l2c2" => SpatialMethod::L2c2Interp,
                            "asap" => SpatialMethod::Asap,
                            other => {
                                return Err(ConfigError::at(
                                    line,
                                    format!(
                                        "unknown spatial method '{other}' \
                                         (expected none, caps_gaussian, l2c2, asap)"
                                    ),
                                ))
                            }
                        }
                    }
                    "temporal" => {
                        r.temporal = match value {
                            "none" => TemporalMethod::None,
                            "caps" => TemporalMethod::CapsFirstOrder,
                            "grad_caps" => TemporalMethod::GradCaps,
                            other => {
                                return Err(ConfigError::at(
                                    line,
                                    format!(
                                        "unknown temporal method '{other}' \
                                         (expected none, caps, grad_caps)"
                                    ),
                                ))
                            }
                        }
                    }
                    "lambda_s" => r.lambda_s = parse_num(line, key, value)?,
                    "lambda_p" => r.lambda_p = parse_num(line, key, value)?,
                    "lambda_t" => r.lambda_t = parse_num(line, key, value)?,
                    "caps_sigma" => r.caps_sigma = parse_num(line, key, value)?,
                    "eps_t" => r.eps_t = parse_num(line, key, value)?,
                    other => {
                        return Err(ConfigError::at(
                            line,
                            format!("unknown key '{other}' in [regularizer]"),
                        ))
                    }
                }
            }
            "evaluation" => match key {
                "n_episodes" => self.n_eval_episodes = parse_num(line, key, value)?,
                "seed_base" => self.eval_seed_base = parse_num(line, key, value)?,
                other => {
                    return Err(ConfigError::at(
                        line,
                        format!("unknown key '{other}' in [evaluation]"),
                    ))
                }
            },
            "output" => match key {
                "dir" => self.output_dir = value.to_string(),
                "seeds" => {
                    let seeds: Result<Vec<u64>, _> = value
                        .split(',')
                        .map(|s| parse_num::<u64>(line, "seeds", s.trim()))
                        .collect();
                    self.seeds = seeds?;
                }
                other => {
                    return Err(ConfigError::at(line, format!("unknown key '{other}' in [output]")))
                }
            },
            _ => unreachable!("section names validated at header"),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Semantic validation beyond grammar: seeds, component resolution,
    /// hyperparameter ranges.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::general("seeds list must be non-empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ConfigError::general("seeds must be distinct"));
        }
        if self.n_eval_episodes == 0 {
            return Err(ConfigError::general("n_episodes must be >= 1"));
        }
        if self.output_dir.is_empty() {
            return Err(ConfigError::general("output dir must be non-empty"));
        }
        build_dynamics(&self.env_name, &self.env_params)
            .map_err(|e| ConfigError::general(format!("environment: {e}")))?;
        self.algorithm
            .validate()
            .map_err(|e| ConfigError::general(format!("algorithm: {e}")))?;
        self.regularizer
            .validate()
            .map_err(|e| ConfigError::general(format!("regularizer: {e}")))?;
        Ok(())
    }

    /// The four semantic sections in canonical order (the hashed content).
    fn canonical_semantic(&self) -> String {
        let mut s = String::new();
        s.push_str("[environment]\n");
        s.push_str(&format!("name = {}\n", self.env_name));
        for (k, v) in &self.env_params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        let a = &self.algorithm;
        s.push_str("\n[algorithm]\n");
        s.push_str(&format!("n_envs = {}\n", a.n_envs));
        s.push_str(&format!("rollout_len = {}\n", a.rollout_len));
        s.push_str(&format!("epochs = {}\n", a.epochs));
        s.push_str(&format!("minibatch_size = {}\n", a.minibatch_size));
        s.push_str(&format!("clip_eps = {}\n", a.clip_eps));
        s.push_str(&format!("gamma = {}\n", a.gamma));
        s.push_str(&format!("gae_lambda = {}\n", a.gae_lambda));
        s.push_str(&format!("value_coef = {}\n", a.value_coef));
        s.push_str(&format!("entropy_coef = {}\n", a.entropy_coef));
        s.push_str(&format!("max_grad_norm = {}\n", a.max_grad_norm));
        s.push_str(&format!("normalize_advantages = {}\n", a.normalize_advantages));
        s.push_str(&format!("lr = {}\n", a.lr));
        s.push_str(&format!("hidden = {}\n", a.hidden));
        s.push_str(&format!("total_steps = {}\n", a.total_steps));
        let r = &self.regularizer;
        s.push_str("\n[regularizer]\n");
        s.push_str(&format!("spatial = {}\n", spatial_name(r.spatial)));
        s.push_str(&format!("temporal = {}\n", temporal_name(r.temporal)));
        s.push_str(&format!("lambda_s = {}\n", r.lambda_s));
        s.push_str(&format!("lambda_p = {}\n", r.lambda_p));
        s.push_str(&format!("lambda_t = {}\n", r.lambda_t));
        s.push_str(&format!("caps_sigma = {}\n", r.caps_sigma));
        s.push_str(&format!("eps_t = {}\n", r.eps_t));
        s.push_str("\n[evaluation]\n");
        s.push_str(&format!("n_episodes = {}\n", self.n_eval_episodes));
        s.push_str(&format!("seed_base = {}\n", self.eval_seed_base));
        s
    }

    /// Fully resolved canonical text; `parse(canonical())` reproduces the
    /// config exactly.
    pub fn canonical(&self) -> String {
        let mut s = self.canonical_semantic();
        s.push_str("\n[output]\n");
        s.push_str(&format!("dir = {}\n", self.output_dir));
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        s.push_str(&format!("seeds = {}\n", seeds.join(", ")));
        s
    }

    /// Twelve hex characters of the SHA-256 of the semantic sections.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_semantic().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..12].to_string()
    }

    /// Human-readable method label derived from the regularizer section.
    pub fn method_label(&self) -> String {
        method_label(&self.regularizer)
    }
}

/// Names the smoothing method combination: `base` when nothing is active,
/// short names for the canonical single/paired methods, `spatial+temporal`
/// otherwise.
pub fn method_label(r: &RegularizerSpec) -> String {
    let spatial_active =
        r.spatial != SpatialMethod::None && (r.lambda_s > 0.0 || (r.spatial == SpatialMethod::Asap && r.lambda_p > 0.0));
    let temporal_active = r.temporal != TemporalMethod::None && r.lambda_t > 0.0;
    match (spatial_active, temporal_active) {
        (false, false) => "base".to_string(),
        (true, true) => match (r.spatial, r.temporal) {
            (SpatialMethod::Asap, TemporalMethod::GradCaps) => "asap".to_string(),
            (SpatialMethod::CapsGaussian, TemporalMethod::CapsFirstOrder) => "caps".to_string(),
            (s, t) => format!("{}+{}", spatial_name(s), temporal_name(t)),
        },
        (true, false) => match r.spatial {
            SpatialMethod::Asap => "asap-spatial".to_string(),
            SpatialMethod::CapsGaussian => "caps-spatial".to_string(),
            SpatialMethod::L2c2Interp => "l2c2".to_string(),
            SpatialMethod::None => unreachable!(),
        },
        (false, true) => match r.temporal {
            TemporalMethod::GradCaps => "gradcaps".to_string(),
            TemporalMethod::CapsFirstOrder => "caps-temporal".to_string(),
            TemporalMethod::None => unreachable!(),
        },
    }
}
