//! Toy pixel environments with hidden ground-truth state, episode storage and
//! a Monte-Carlo value oracle.

mod bouncing_dot;
mod episode;
mod linear_latent;
mod oracle;

pub use bouncing_dot::BouncingDot;
pub use episode::Episode;
pub use linear_latent::LinearLatentEnv;
pub use oracle::{oracle_value, OracleEstimate, RolloutPolicy};

use crate::world_model::{ObsShape, Observation};
use crate::{Error, Result};

/// Default episode length.
pub const EPISODE_LIMIT: usize = 200;

/// Observation shape shared by the bundled environments.
pub const OBS_SHAPE: ObsShape = ObsShape::new(1, 16, 16);

/// Result of one environment step. `reward` belongs to the state the action
/// was taken in; `observation` shows the state after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub observation: Observation<f32>,
    pub done: bool,
}

/// A partially observable environment. Only observations and rewards are
/// exposed to the agent.
pub trait Env {
    fn name(&self) -> &'static str;
    fn obs_shape(&self) -> ObsShape;
    fn action_dim(&self) -> usize;
    fn limit(&self) -> usize;
    /// Steps taken since the last reset.
    fn elapsed(&self) -> usize;

    /// Draws a fresh state from the seeded initial distribution.
    fn reset(&mut self, seed: u64) -> Observation<f32>;

    /// Reward of the current state, without stepping.
    fn current_reward(&self) -> f64;

    fn observe(&self) -> Observation<f32>;

    /// Advances one step. Actions are clamped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> Result<Transition>;

    /// Restarts the process-noise stream without touching the state.
    fn reseed_noise(&mut self, _seed: u64) {}

    fn is_done(&self) -> bool {
        self.elapsed() >= self.limit()
    }
}

pub(crate) fn check_step(env: &dyn Env, action: &[f64]) -> Result<()> {
    if env.is_done() {
        return Err(Error::Contract(format!(
            "step after episode end ({} steps)",
            env.limit()
        )));
    }
    if action.len() != env.action_dim() {
        return Err(Error::dim("action", env.action_dim(), action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }
    Ok(())
}

/// Either bundled environment, selectable by name.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    BouncingDot(BouncingDot),
    LinearLatent(LinearLatentEnv),
}

pub const ENV_NAMES: [&str; 2] = [BouncingDot::NAME, LinearLatentEnv::NAME];

/// Builds an environment by name with the given episode limit.
pub fn make_env(name: &str, limit: usize) -> Result<AnyEnv> {
    if limit == 0 {
        return Err(Error::InvalidArgument("episode limit must be positive".into()));
    }
    match name {
        BouncingDot::NAME => Ok(AnyEnv::BouncingDot(BouncingDot::new(limit))),
        LinearLatentEnv::NAME => Ok(AnyEnv::LinearLatent(LinearLatentEnv::new(limit))),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment `{other}` (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::BouncingDot($e) => $body,
            AnyEnv::LinearLatent($e) => $body,
        }
    };
}

impl Env for AnyEnv {
    fn name(&self) -> &'static str {
        delegate!(self, e => e.name())
    }
    fn obs_shape(&self) -> ObsShape {
        delegate!(self, e => e.obs_shape())
    }
    fn action_dim(&self) -> usize {
        delegate!(self, e => e.action_dim())
    }
    fn limit(&self) -> usize {
        delegate!(self, e => e.limit())
    }
    fn elapsed(&self) -> usize {
        delegate!(self, e => e.elapsed())
    }
    fn reset(&mut self, seed: u64) -> Observation<f32> {
        delegate!(self, e => e.reset(seed))
    }
    fn current_reward(&self) -> f64 {
        delegate!(self, e => e.current_reward())
    }
    fn observe(&self) -> Observation<f32> {
        delegate!(self, e => e.observe())
    }
    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        delegate!(self, e => e.step(action))
    }
    fn reseed_noise(&mut self, seed: u64) {
        delegate!(self, e => e.reseed_noise(seed))
    }
}

/// Gaussian bump used by the renderers.
pub(crate) fn bump(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_env_by_name() {
        assert_eq!(make_env("bouncing_dot", 200).unwrap().name(), "bouncing_dot");
        assert_eq!(make_env("linear_latent", 10).unwrap().limit(), 10);
        assert!(make_env("cartpole", 200).is_err());
        assert!(make_env("bouncing_dot", 0).is_err());
    }

    #[test]
    fn done_exactly_at_limit_and_step_after_done_fails() {
        for name in ENV_NAMES {
            let mut env = make_env(name, EPISODE_LIMIT).unwrap();
            env.reset(3);
            for t in 1..=EPISODE_LIMIT {
                let tr = env.step(&[0.2, -0.1]).unwrap();
                assert_eq!(tr.done, t == EPISODE_LIMIT, "{name} step {t}");
            }
            assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::Contract(_))));
        }
    }

    #[test]
    fn observations_in_unit_range_for_many_seeds() {
        for name in ENV_NAMES {
            let mut env = make_env(name, 20).unwrap();
            for seed in 0..1000 {
                let obs = env.reset(seed);
                assert!(obs.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
                assert_eq!(obs.shape(), OBS_SHAPE);
            }
        }
    }

    #[test]
    fn rollouts_are_deterministic_and_rewards_bounded() {
        use rand::{Rng, SeedableRng};
        for name in ENV_NAMES {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            let actions: Vec<[f64; 2]> = (0..60)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let run = || {
                let mut env = make_env(name, 60).unwrap();
                let mut trace = vec![env.reset(17)];
                let mut rewards = Vec::new();
                for a in &actions {
                    let tr = env.step(a).unwrap();
                    rewards.push(tr.reward);
                    trace.push(tr.observation);
                }
                (trace, rewards)
            };
            let (o1, r1) = run();
            let (o2, r2) = run();
            assert_eq!(o1, o2);
            assert_eq!(r1, r2);
            assert!(r1.iter().all(|r| (0.0..=1.0).contains(r)));
        }
    }
}
