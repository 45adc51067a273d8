use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Env;
use crate::world_model::Observation;
use crate::{Error, Result};

/// Monte-Carlo value estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub rollouts: usize,
}

/// A controller driven by ground-truth rollouts. It may inspect the hidden
/// environment state, which scripted baselines use.
pub trait RolloutPolicy<E> {
    /// Called before each rollout.
    fn begin(&mut self, _rollout: usize) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, env: &E, obs: &Observation<f32>) -> Result<Vec<f64>>;
}

impl<E, F> RolloutPolicy<E> for F
where
    F: FnMut(&E, &Observation<f32>) -> Vec<f64>,
{
    fn act(&mut self, env: &E, obs: &Observation<f32>) -> Result<Vec<f64>> {
        Ok(self(env, obs))
    }
}

/// Mean discounted return over `n_rollouts` ground-truth rollouts from the
/// state of `start` until its episode limit, with the standard error of the
/// mean. Each rollout gets its own process-noise stream derived from `seed`.
pub fn oracle_value<E, P>(
    start: &E,
    policy: &mut P,
    gamma: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<OracleEstimate>
where
    E: Env + Clone,
    P: RolloutPolicy<E>,
{
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one rollout".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_rollouts);
    for i in 0..n_rollouts {
        let mut env = start.clone();
        env.reseed_noise(seeds.next_u64());
        policy.begin(i)?;
        let mut obs = env.observe();
        let mut discount = 1.0;
        let mut ret = 0.0;
        while !env.is_done() {
            let action = policy.act(&env, &obs)?;
            let tr = env.step(&action)?;
            ret += discount * tr.reward;
            discount *= gamma;
            obs = tr.observation;
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_error = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(OracleEstimate {
        mean,
        std_error,
        rollouts: returns.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{check_step, BouncingDot, LinearLatentEnv, Transition, OBS_SHAPE};
    use crate::world_model::ObsShape;

    /// Reward 1 every step.
    #[derive(Clone)]
    struct Constant {
        steps: usize,
        limit: usize,
    }

    impl Env for Constant {
        fn name(&self) -> &'static str {
            "constant"
        }
        fn obs_shape(&self) -> ObsShape {
            OBS_SHAPE
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn limit(&self) -> usize {
            self.limit
        }
        fn elapsed(&self) -> usize {
            self.steps
        }
        fn reset(&mut self, _seed: u64) -> Observation<f32> {
            self.steps = 0;
            self.observe()
        }
        fn current_reward(&self) -> f64 {
            1.0
        }
        fn observe(&self) -> Observation<f32> {
            Observation::zeros(OBS_SHAPE)
        }
        fn step(&mut self, action: &[f64]) -> Result<Transition> {
            check_step(self, action)?;
            self.steps += 1;
            Ok(Transition {
                reward: 1.0,
                observation: self.observe(),
                done: self.is_done(),
            })
        }
    }

    #[test]
    fn zero_discount_gives_immediate_reward() {
        let mut env = BouncingDot::new(50);
        env.reset(5);
        let est = oracle_value(&env, &mut |_: &BouncingDot, _: &Observation<f32>| vec![0.3, 0.1], 0.0, 4, 1)
            .unwrap();
        assert_eq!(est.mean, env.current_reward());
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn constant_reward_is_geometric_series() {
        let env = Constant { steps: 0, limit: 200 };
        let est = oracle_value(&env, &mut |_: &Constant, _: &Observation<f32>| vec![0.0], 0.9, 3, 0).unwrap();
        let expected = (1.0 - 0.9f64.powi(200)) / (1.0 - 0.9);
        assert!((est.mean - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_rollouts() {
        let env = Constant { steps: 0, limit: 5 };
        assert!(oracle_value(&env, &mut |_: &Constant, _: &Observation<f32>| vec![0.0], 0.9, 0, 0).is_err());
    }

    #[test]
    fn linear_env_matches_closed_form_within_three_standard_errors() {
        let gain = [[-0.6, 0.3], [0.2, -0.7]];
        let gamma = 0.95;
        let mut env = LinearLatentEnv::new(200);
        env.reset(8);
        env.set_state([0.35, -0.45]);
        let mut policy = |e: &LinearLatentEnv, _: &Observation<f32>| {
            vec![
                gain[0][0] * e.z[0] + gain[0][1] * e.z[1],
                gain[1][0] * e.z[0] + gain[1][1] * e.z[1],
            ]
        };
        let est = oracle_value(&env, &mut policy, gamma, 400, 11).unwrap();
        let exact = LinearLatentEnv::closed_form_value(env.z, gain, gamma, 200);
        assert!(est.std_error > 0.0);
        assert!(
            (est.mean - exact).abs() < 3.0 * est.std_error,
            "mc {} ± {} vs exact {exact}",
            est.mean,
            est.std_error
        );
    }
}
