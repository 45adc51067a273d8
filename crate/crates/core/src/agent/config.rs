//! Training configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::envs::ENV_NAMES;
use crate::{Error, Result};

/// Which value estimate the critic regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Mean of the `K` expansions whose original and reconstructed values
    /// agree best.
    Dmve,
    /// Fixed-horizon expansion `V_H`.
    MveLi,
    /// λ-return over `V_1..V_H`.
    Lambda,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Dmve, Estimator::MveLi, Estimator::Lambda];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Dmve => "dmve",
            Estimator::MveLi => "mve",
            Estimator::Lambda => "lambda",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dmve" => Ok(Estimator::Dmve),
            "mve" | "mve_li" | "mve-li" => Ok(Estimator::MveLi),
            "lambda" => Ok(Estimator::Lambda),
            other => Err(format!("unknown estimator `{other}` (dmve, mve, lambda)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: String,
    pub episode_limit: usize,
    pub seed_episodes: usize,
    pub collect_interval: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub horizon: usize,
    pub top_k: usize,
    pub discount: f64,
    pub lambda: f64,
    pub model_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub explore_noise: f64,
    pub total_env_steps: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub deter_size: usize,
    pub stoch_size: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    pub kl_weight: f64,
    pub dataset_capacity: usize,
    pub clip_norm: f64,
    pub log_horizons: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "bouncing_dot".into(),
            episode_limit: 200,
            seed_episodes: 5,
            collect_interval: 100,
            batch_size: 16,
            seq_len: 30,
            horizon: 15,
            top_k: 3,
            discount: 0.99,
            lambda: 0.95,
            model_lr: 1e-3,
            actor_lr: 8e-5,
            critic_lr: 8e-5,
            explore_noise: 0.3,
            total_env_steps: 20_000,
            estimator: Estimator::Dmve,
            seed: 0,
            eval_interval: 2_000,
            eval_episodes: 5,
            deter_size: 64,
            stoch_size: 16,
            hidden_size: 64,
            embed_size: 64,
            actor_hidden: 64,
            critic_hidden: 64,
            kl_weight: 0.1,
            dataset_capacity: 1_000,
            clip_norm: 100.0,
            log_horizons: false,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value.parse().map_err(|e: V::Err| Error::Config {
        key: key.into(),
        message: format!("cannot parse `{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config {
            key: key.into(),
            message: format!("expected a boolean, got `{value}`"),
        }),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 29] = [
        "env",
        "episode_limit",
        "seed_episodes",
        "collect_interval",
        "batch_size",
        "seq_len",
        "horizon",
        "top_k",
        "discount",
        "lambda",
        "model_lr",
        "actor_lr",
        "critic_lr",
        "explore_noise",
        "total_env_steps",
        "estimator",
        "seed",
        "eval_interval",
        "eval_episodes",
        "deter_size",
        "stoch_size",
        "hidden_size",
        "embed_size",
        "actor_hidden",
        "critic_hidden",
        "kl_weight",
        "dataset_capacity",
        "clip_norm",
        "log_horizons",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "env" => self.env = v.to_owned(),
            "episode_limit" => self.episode_limit = parse(key, v)?,
            "seed_episodes" => self.seed_episodes = parse(key, v)?,
            "collect_interval" => self.collect_interval = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seq_len" => self.seq_len = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "discount" => self.discount = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "model_lr" => self.model_lr = parse(key, v)?,
            "actor_lr" => self.actor_lr = parse(key, v)?,
            "critic_lr" => self.critic_lr = parse(key, v)?,
            "explore_noise" => self.explore_noise = parse(key, v)?,
            "total_env_steps" => self.total_env_steps = parse(key, v)?,
            "estimator" => self.estimator = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "eval_interval" => self.eval_interval = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "deter_size" => self.deter_size = parse(key, v)?,
            "stoch_size" => self.stoch_size = parse(key, v)?,
            "hidden_size" => self.hidden_size = parse(key, v)?,
            "embed_size" => self.embed_size = parse(key, v)?,
            "actor_hidden" => self.actor_hidden = parse(key, v)?,
            "critic_hidden" => self.critic_hidden = parse(key, v)?,
            "kl_weight" => self.kl_weight = parse(key, v)?,
            "dataset_capacity" => self.dataset_capacity = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "log_horizons" => self.log_horizons = parse_bool(key, v)?,
            other => {
                return Err(Error::Config {
                    key: other.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// blank lines are ignored; repeated keys keep the last value.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_owned(),
                message: format!("line {} is not `key = value`", n + 1),
            })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if !ENV_NAMES.contains(&self.env.as_str()) {
            return bad("env", format!("unknown environment `{}`", self.env));
        }
        for (key, v) in [
            ("episode_limit", self.episode_limit),
            ("seed_episodes", self.seed_episodes),
            ("collect_interval", self.collect_interval),
            ("batch_size", self.batch_size),
            ("seq_len", self.seq_len),
            ("horizon", self.horizon),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
            ("deter_size", self.deter_size),
            ("stoch_size", self.stoch_size),
            ("hidden_size", self.hidden_size),
            ("embed_size", self.embed_size),
            ("actor_hidden", self.actor_hidden),
            ("critic_hidden", self.critic_hidden),
            ("dataset_capacity", self.dataset_capacity),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if self.top_k < 1 || self.top_k > self.horizon {
            return bad("top_k", format!("must lie in 1..={} (the horizon)", self.horizon));
        }
        if self.seq_len > self.episode_limit {
            return bad("seq_len", format!("exceeds the episode limit {}", self.episode_limit));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", "must lie in [0, 1]".into());
        }
        for (key, v) in [
            ("model_lr", self.model_lr),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("explore_noise", self.explore_noise),
            ("kl_weight", self.kl_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(key, "must be finite and non-negative".into());
            }
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm", "must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key).expect("known key")));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "env" => self.env.clone(),
            "episode_limit" => self.episode_limit.to_string(),
            "seed_episodes" => self.seed_episodes.to_string(),
            "collect_interval" => self.collect_interval.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seq_len" => self.seq_len.to_string(),
            "horizon" => self.horizon.to_string(),
            "top_k" => self.top_k.to_string(),
            "discount" => self.discount.to_string(),
            "lambda" => self.lambda.to_string(),
            "model_lr" => self.model_lr.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "explore_noise" => self.explore_noise.to_string(),
            "total_env_steps" => self.total_env_steps.to_string(),
            "estimator" => self.estimator.to_string(),
            "seed" => self.seed.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "deter_size" => self.deter_size.to_string(),
            "stoch_size" => self.stoch_size.to_string(),
            "hidden_size" => self.hidden_size.to_string(),
            "embed_size" => self.embed_size.to_string(),
            "actor_hidden" => self.actor_hidden.to_string(),
            "critic_hidden" => self.critic_hidden.to_string(),
            "kl_weight" => self.kl_weight.to_string(),
            "dataset_capacity" => self.dataset_capacity.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "log_horizons" => self.log_horizons.to_string(),
            _ => return None,
        })
    }
}
