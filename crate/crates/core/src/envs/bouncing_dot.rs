use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bump, check_step, Env, Transition, OBS_SHAPE};
use crate::world_model::{ObsShape, Observation};
use crate::Result;

/// A dot with hidden velocity moving in the unit square with reflecting
/// walls. Actions accelerate the dot; reward is highest at the centre.
///
/// A single frame shows position but not velocity.
#[derive(Debug, Clone)]
pub struct BouncingDot {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    steps: usize,
    limit: usize,
}

impl BouncingDot {
    pub const NAME: &'static str = "bouncing_dot";
    pub const TARGET: [f64; 2] = [0.5, 0.5];
    /// Distance at which the reward has fallen to `1/e`.
    pub const REWARD_SCALE: f64 = 0.2;
    pub const DAMPING: f64 = 0.7;
    pub const THRUST: f64 = 0.03;
    /// Blob width in pixels.
    pub const BLOB_SIGMA: f64 = 2.0;

    pub fn new(limit: usize) -> Self {
        Self {
            pos: Self::TARGET,
            vel: [0.0; 2],
            steps: 0,
            limit,
        }
    }

    /// Places the dot at a given state and restarts the step counter.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
    }

    pub fn reward_at(pos: [f64; 2]) -> f64 {
        let d = ((pos[0] - Self::TARGET[0]).powi(2) + (pos[1] - Self::TARGET[1]).powi(2)).sqrt();
        (-d / Self::REWARD_SCALE).exp()
    }

    /// Ground-truth dynamics for one step.
    pub fn advance(pos: [f64; 2], vel: [f64; 2], action: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let mut p = pos;
        let mut v = vel;
        for i in 0..2 {
            v[i] = Self::DAMPING * v[i] + Self::THRUST * action[i].clamp(-1.0, 1.0);
            p[i] += v[i];
            if p[i] < 0.0 {
                p[i] = -p[i];
                v[i] = -v[i];
            } else if p[i] > 1.0 {
                p[i] = 2.0 - p[i];
                v[i] = -v[i];
            }
        }
        (p, v)
    }

    pub fn render(pos: [f64; 2]) -> Observation<f32> {
        let s = OBS_SHAPE;
        let cx = pos[0] * (s.width - 1) as f64;
        let cy = pos[1] * (s.height - 1) as f64;
        let mut px = Vec::with_capacity(s.len());
        for row in 0..s.height {
            for col in 0..s.width {
                let d2 = (col as f64 - cx).powi(2) + (row as f64 - cy).powi(2);
                px.push(bump(d2, Self::BLOB_SIGMA) as f32);
            }
        }
        Observation::new(s, px).expect("blob intensities lie in [0, 1]")
    }
}

impl Env for BouncingDot {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn obs_shape(&self) -> ObsShape {
        OBS_SHAPE
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn limit(&self) -> usize {
        self.limit
    }

    fn elapsed(&self) -> usize {
        self.steps
    }

    fn reset(&mut self, seed: u64) -> Observation<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
        let vel = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
        self.set_state(pos, vel);
        self.observe()
    }

    fn current_reward(&self) -> f64 {
        Self::reward_at(self.pos)
    }

    fn observe(&self) -> Observation<f32> {
        Self::render(self.pos)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        check_step(self, action)?;
        let reward = self.current_reward();
        let (p, v) = Self::advance(self.pos, self.vel, [action[0], action[1]]);
        self.pos = p;
        self.vel = v;
        self.steps += 1;
        Ok(Transition {
            reward,
            observation: self.observe(),
            done: self.is_done(),
        })
    }
}
