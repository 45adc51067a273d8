use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{bump, check_step, Env, Transition, OBS_SHAPE};
use crate::world_model::{ObsShape, Observation};
use crate::Result;

type Mat2 = [[f64; 2]; 2];

/// Two-dimensional linear-Gaussian latent process rendered as a horizontal
/// and a vertical bar. Reward is linear in the latent, so values under a
/// linear policy have a closed form.
///
/// `z' = 0.9 z + 0.05 a + w`, with `w ~ N(0, 0.02²)` clipped to `±0.05`.
/// With `|a| ≤ 1` this keeps `z` inside `[-1, 1]²` without any state
/// clipping, so the dynamics stay exactly linear.
#[derive(Debug, Clone)]
pub struct LinearLatentEnv {
    pub z: [f64; 2],
    steps: usize,
    limit: usize,
    noise: ChaCha8Rng,
}

impl LinearLatentEnv {
    pub const NAME: &'static str = "linear_latent";
    pub const DECAY: f64 = 0.9;
    pub const GAIN: f64 = 0.05;
    pub const NOISE_STD: f64 = 0.02;
    pub const NOISE_CLIP: f64 = 0.05;
    pub const REWARD_BASE: f64 = 0.5;
    pub const REWARD_WEIGHTS: [f64; 2] = [0.25, 0.25];

    pub fn new(limit: usize) -> Self {
        Self {
            z: [0.0; 2],
            steps: 0,
            limit,
            noise: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn set_state(&mut self, z: [f64; 2]) {
        self.z = z;
        self.steps = 0;
    }

    pub fn reward_at(z: [f64; 2]) -> f64 {
        Self::REWARD_BASE + Self::REWARD_WEIGHTS[0] * z[0] + Self::REWARD_WEIGHTS[1] * z[1]
    }

    pub fn render(z: [f64; 2]) -> Observation<f32> {
        let s = OBS_SHAPE;
        let row_c = (z[0] + 1.0) / 2.0 * (s.height - 1) as f64;
        let col_c = (z[1] + 1.0) / 2.0 * (s.width - 1) as f64;
        let mut px = Vec::with_capacity(s.len());
        for row in 0..s.height {
            let h = bump((row as f64 - row_c).powi(2), 1.0);
            for col in 0..s.width {
                let v = bump((col as f64 - col_c).powi(2), 1.0);
                px.push(h.max(v) as f32);
            }
        }
        Observation::new(s, px).expect("bar intensities lie in [0, 1]")
    }

    /// Closed-loop matrix `0.9 I + 0.05 K` for the policy `a = K z`.
    pub fn closed_loop(gain: Mat2) -> Mat2 {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = Self::GAIN * gain[i][j] + if i == j { Self::DECAY } else { 0.0 };
            }
        }
        m
    }

    /// Expected discounted return from `z` over the `steps` remaining steps
    /// under `a = K z`. `K` must keep actions inside `[-1, 1]` for every `z`
    /// in the unit box (row sums of `|K|` at most one).
    ///
    /// `r₀ (1 − γⁿ)/(1 − γ) + c · (I − γM)⁻¹ (I − (γM)ⁿ) z`
    pub fn closed_form_value(z: [f64; 2], gain: Mat2, gamma: f64, steps: usize) -> f64 {
        assert_admissible(gain);
        let gm = scale(Self::closed_loop(gain), gamma);
        let tail = sub(identity(), power(gm, steps));
        let v = apply(mul(inverse(sub(identity(), gm)), tail), z);
        let n = steps as i32;
        let geometric = if gamma == 1.0 {
            steps as f64
        } else {
            (1.0 - gamma.powi(n)) / (1.0 - gamma)
        };
        Self::REWARD_BASE * geometric + dot(Self::REWARD_WEIGHTS, v)
    }

    /// Infinite-horizon value of the noise-free linear dynamics,
    /// `r₀/(1 − γ) + c · (I − γM)⁻¹ z`. Satisfies the one-step Bellman
    /// identity exactly.
    pub fn stationary_value(z: [f64; 2], gain: Mat2, gamma: f64) -> f64 {
        let gm = scale(Self::closed_loop(gain), gamma);
        let v = apply(inverse(sub(identity(), gm)), z);
        Self::REWARD_BASE / (1.0 - gamma) + dot(Self::REWARD_WEIGHTS, v)
    }
}

fn assert_admissible(gain: Mat2) {
    for row in gain {
        assert!(
            row[0].abs() + row[1].abs() <= 1.0,
            "gain row {row:?} can leave the action box"
        );
    }
}

fn identity() -> Mat2 {
    [[1.0, 0.0], [0.0, 1.0]]
}

fn scale(a: Mat2, s: f64) -> Mat2 {
    a.map(|r| r.map(|v| v * s))
}

fn sub(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

fn mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

fn power(a: Mat2, n: usize) -> Mat2 {
    (0..n).fold(identity(), |acc, _| mul(acc, a))
}

fn inverse(a: Mat2) -> Mat2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ]
}

fn apply(a: Mat2, z: [f64; 2]) -> [f64; 2] {
    [a[0][0] * z[0] + a[0][1] * z[1], a[1][0] * z[0] + a[1][1] * z[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl Env for LinearLatentEnv {
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
        let z = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        self.set_state(z);
        self.noise = rng;
        self.observe()
    }

    fn current_reward(&self) -> f64 {
        Self::reward_at(self.z)
    }

    fn observe(&self) -> Observation<f32> {
        Self::render(self.z)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        check_step(self, action)?;
        let reward = self.current_reward();
        let normal = Normal::new(0.0, Self::NOISE_STD).expect("valid std");
        for (i, a) in action.iter().enumerate() {
            let w: f64 = normal.sample(&mut self.noise);
            let w = w.clamp(-Self::NOISE_CLIP, Self::NOISE_CLIP);
            self.z[i] = Self::DECAY * self.z[i] + Self::GAIN * a.clamp(-1.0, 1.0) + w;
        }
        self.steps += 1;
        Ok(Transition {
            reward,
            observation: self.observe(),
            done: self.is_done(),
        })
    }

    fn reseed_noise(&mut self, seed: u64) {
        self.noise = ChaCha8Rng::seed_from_u64(seed);
    }
}
