//! Recorded episodes and their on-disk format.
//!
//! Layout (little-endian): magic `DMEP`, version `u32`, env-name length `u32`
//! and UTF-8 name, episode limit `u32`, step count `u32`, action dimension
//! `u32`, observation channels, height and width as `u32`; then per step the
//! action as `f64`s, the observation as `f32`s and the reward as `f64`.

use std::path::Path;

use crate::backbone::checkpoint::Reader;
use crate::world_model::{ObsShape, Observation, Sequence};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 4] = b"DMEP";
const VERSION: u32 = 1;

/// `(a_t, o_t, r_t)` triples exactly as experienced: `actions[t]` was taken
/// after seeing `observations[t]`, and `rewards[t]` is the reward of that step.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub env: String,
    pub limit: usize,
    pub action_dim: usize,
    pub obs_shape: ObsShape,
    pub actions: Vec<Vec<f64>>,
    pub observations: Vec<Observation<f32>>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn new(env: &str, limit: usize, action_dim: usize, obs_shape: ObsShape) -> Self {
        Self {
            env: env.to_owned(),
            limit,
            action_dim,
            obs_shape,
            actions: Vec::new(),
            observations: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Vec<f64>, observation: Observation<f32>, reward: f64) -> Result<()> {
        if action.len() != self.action_dim {
            return Err(Error::dim("episode action", self.action_dim, action.len()));
        }
        if observation.shape() != self.obs_shape {
            return Err(Error::dim("episode observation", self.obs_shape.len(), observation.pixels().len()));
        }
        self.actions.push(action);
        self.observations.push(observation);
        self.rewards.push(reward);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Steps `start..start + len` as a training window.
    pub fn window<T: Scalar>(&self, start: usize, len: usize) -> Sequence<T> {
        let r = start..start + len;
        Sequence {
            actions: self.actions[r.clone()]
                .iter()
                .map(|a| a.iter().map(|&v| T::c(v)).collect())
                .collect(),
            observations: self.observations[r.clone()]
                .iter()
                .map(|o| o.pixels().iter().map(|&p| T::c(f64::from(p))).collect())
                .collect(),
            rewards: self.rewards[r].iter().map(|&v| T::c(v)).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let u32s = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        u32s(&mut out, VERSION as usize);
        u32s(&mut out, self.env.len());
        out.extend_from_slice(self.env.as_bytes());
        for v in [
            self.limit,
            self.len(),
            self.action_dim,
            self.obs_shape.channels,
            self.obs_shape.height,
            self.obs_shape.width,
        ] {
            u32s(&mut out, v);
        }
        for t in 0..self.len() {
            for a in &self.actions[t] {
                out.extend_from_slice(&a.to_le_bytes());
            }
            for p in self.observations[t].pixels() {
                out.extend_from_slice(&p.to_le_bytes());
            }
            out.extend_from_slice(&self.rewards[t].to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported episode version {version}"));
        }
        let name_len = r.u32()? as usize;
        let env = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| format!("env name: {e}"))?
            .to_owned();
        let limit = r.u32()? as usize;
        let steps = r.u32()? as usize;
        let action_dim = r.u32()? as usize;
        let shape = ObsShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let mut ep = Episode::new(&env, limit, action_dim, shape);
        for t in 0..steps {
            let action = (0..action_dim).map(|_| r.f64()).collect::<std::result::Result<_, _>>()?;
            let pixels = (0..shape.len()).map(|_| r.f32()).collect::<std::result::Result<_, _>>()?;
            let obs = Observation::new(shape, pixels).map_err(|e| format!("step {t}: {e}"))?;
            let reward = r.f64()?;
            ep.push(action, obs, reward).map_err(|e| e.to_string())?;
        }
        if !r.is_done() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(ep)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|m| Error::format(path, m))
    }
}
