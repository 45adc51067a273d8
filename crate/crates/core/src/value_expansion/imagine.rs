use rand::Rng;

use super::family::{lambda_return, value_family, ValueFamily};
use crate::backbone::{normal_tensor, Graph, Tensor, Var};
use crate::world_model::{LatentBatch, LatentModel, LatentNodes, LatentState};
use crate::{Error, Result, Scalar};

/// A policy that can act inside the graph. `noise` is `n × A` standard
/// normal noise; the returned actions are reparameterized samples.
pub trait PolicyNodes<T: Scalar> {
    fn action_dim(&self) -> usize;
    fn action_nodes(&self, g: &mut Graph<T>, state: &LatentNodes, noise: Var) -> Result<Var>;
}

/// A state-value function inside the graph, `n × 1`.
pub trait ValueNodes<T: Scalar> {
    fn value_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var>;
}

/// Every random draw of an imagined rollout: per step, the action noise and
/// the transition noise. Replaying a record reproduces the rollout exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginationNoise<T> {
    pub action: Vec<Tensor<T>>,
    pub state: Vec<Tensor<T>>,
}

impl<T: Scalar> ImaginationNoise<T> {
    pub fn sample(
        rng: &mut impl Rng,
        horizon: usize,
        rows: usize,
        action_dim: usize,
        stoch: usize,
    ) -> Self {
        let mut action = Vec::with_capacity(horizon);
        let mut state = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            action.push(normal_tensor(rng, rows, action_dim));
            state.push(normal_tensor(rng, rows, stoch));
        }
        Self { action, state }
    }

    pub fn zeros(horizon: usize, rows: usize, action_dim: usize, stoch: usize) -> Self {
        Self {
            action: vec![Tensor::zeros(rows, action_dim); horizon],
            state: vec![Tensor::zeros(rows, stoch); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.action.len()
    }

    pub fn rows(&self) -> usize {
        self.action.first().map_or(0, Tensor::rows)
    }

    /// The record of a single batch row.
    pub fn row(&self, r: usize) -> Self {
        let pick = |ts: &[Tensor<T>]| {
            ts.iter()
                .map(|t| Tensor::row_vector(t.row(r).to_vec()))
                .collect()
        };
        Self {
            action: pick(&self.action),
            state: pick(&self.state),
        }
    }

    /// Stacks single-row records into one batch record.
    pub fn stack(rows: &[Self]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InsufficientData("no noise records".into()))?;
        let h = first.horizon();
        let gather = |get: &dyn Fn(&Self) -> &Vec<Tensor<T>>, t: usize| -> Result<Tensor<T>> {
            let parts: Vec<&[T]> = rows.iter().map(|r| get(r)[t].data()).collect();
            Tensor::from_rows(&parts).ok_or_else(|| Error::InvalidArgument("ragged noise".into()))
        };
        let mut out = Self {
            action: Vec::with_capacity(h),
            state: Vec::with_capacity(h),
        };
        for t in 0..h {
            if rows.iter().any(|r| r.horizon() != h) {
                return Err(Error::dim("noise horizon", h, 0));
            }
            out.action.push(gather(&|r| &r.action, t)?);
            out.state.push(gather(&|r| &r.state, t)?);
        }
        Ok(out)
    }
}

/// A batched rollout as graph nodes. `states`, `rewards` and `values` have
/// `H + 1` entries (`τ = t..t+H`); `actions` has `H`.
#[derive(Debug, Clone)]
pub struct ImaginedNodes {
    pub states: Vec<LatentNodes>,
    pub actions: Vec<Var>,
    pub rewards: Vec<Var>,
    pub values: Vec<Var>,
}

impl ImaginedNodes {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// `[V_1, .., V_H]` as `n × 1` nodes, built incrementally.
    pub fn family_nodes<T: Scalar>(&self, g: &mut Graph<T>, gamma: T) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(self.horizon());
        let mut partial = self.rewards[0];
        let mut discount = T::one();
        for h in 1..=self.horizon() {
            if h > 1 {
                let r = g.scale(self.rewards[h - 1], discount)?;
                partial = g.add(partial, r)?;
            }
            discount *= gamma;
            let boot = g.scale(self.values[h], discount)?;
            out.push(g.add(partial, boot)?);
        }
        Ok(out)
    }

    /// Families of every row, computed from the node values.
    pub fn families<T: Scalar>(&self, g: &Graph<T>, gamma: T) -> Result<Vec<ValueFamily<T>>> {
        let rows = g.value(self.rewards[0]).rows();
        (0..rows)
            .map(|b| {
                let r: Vec<T> = self.rewards.iter().map(|&v| g.value(v).get(b, 0)).collect();
                let v: Vec<T> = self.values.iter().map(|&v| g.value(v).get(b, 0)).collect();
                value_family(&r, &v, gamma)
            })
            .collect()
    }

    pub fn trajectory<T: Scalar>(
        &self,
        g: &Graph<T>,
        row: usize,
        noise: &ImaginationNoise<T>,
    ) -> ImaginedTrajectory<T> {
        ImaginedTrajectory {
            states: self.states.iter().map(|s| s.state(g, row)).collect(),
            actions: self.actions.iter().map(|&a| g.value(a).row(row).to_vec()).collect(),
            rewards: self.rewards.iter().map(|&r| g.value(r).get(row, 0)).collect(),
            values: self.values.iter().map(|&v| g.value(v).get(row, 0)).collect(),
            noise: noise.row(row),
        }
    }
}

/// Rolls `start` forward through the transition module under `policy` for
/// `noise.horizon()` steps, scoring every state with the reward head and the
/// critic. No observations are consumed after the start state.
pub fn imagine_nodes<T, M, P, C>(
    g: &mut Graph<T>,
    model: &M,
    policy: &P,
    critic: &C,
    start: &LatentNodes,
    noise: &ImaginationNoise<T>,
) -> Result<ImaginedNodes>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
    P: PolicyNodes<T> + ?Sized,
    C: ValueNodes<T> + ?Sized,
{
    let horizon = noise.horizon();
    if horizon < 1 {
        return Err(Error::InvalidArgument("imagination horizon must be at least 1".into()));
    }
    let n = start.batch_size(g);
    let d = *model.dims();
    for t in 0..horizon {
        if noise.action[t].shape() != (n, policy.action_dim()) {
            return Err(Error::dim("action noise", policy.action_dim(), noise.action[t].cols()));
        }
        if noise.state[t].shape() != (n, d.stoch) {
            return Err(Error::dim("transition noise", d.stoch, noise.state[t].cols()));
        }
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon + 1);
    let mut values = Vec::with_capacity(horizon + 1);
    let mut s = *start;
    for t in 0..=horizon {
        rewards.push(model.reward_nodes(g, &s)?);
        values.push(critic.value_nodes(g, &s)?);
        states.push(s);
        if t == horizon {
            break;
        }
        let eps_a = g.constant(noise.action[t].clone());
        let a = policy.action_nodes(g, &s, eps_a)?;
        let eps_s = g.constant(noise.state[t].clone());
        s = model.transition_nodes(g, &s, a, eps_s)?;
        actions.push(a);
    }
    Ok(ImaginedNodes {
        states,
        actions,
        rewards,
        values,
    })
}

/// One imagined rollout from a single state, with its noise record.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedTrajectory<T> {
    pub states: Vec<LatentState<T>>,
    pub actions: Vec<Vec<T>>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub noise: ImaginationNoise<T>,
}

impl<T: Scalar> ImaginedTrajectory<T> {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn family(&self, gamma: T) -> Result<ValueFamily<T>> {
        value_family(&self.rewards, &self.values, gamma)
    }

    pub fn lambda_return(&self, gamma: T, lambda: T) -> Result<T> {
        lambda_return(&self.family(gamma)?, lambda)
    }
}

/// Single-state rollout. Pass a recorded `noise` to replay a trajectory, or a
/// fresh [`ImaginationNoise::sample`] for a new one.
pub fn imagine<T, M, P, C>(
    model: &M,
    policy: &P,
    critic: &C,
    start: &LatentState<T>,
    noise: &ImaginationNoise<T>,
) -> Result<ImaginedTrajectory<T>>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
    P: PolicyNodes<T> + ?Sized,
    C: ValueNodes<T> + ?Sized,
{
    if noise.rows() != 1 {
        return Err(Error::dim("noise rows", 1, noise.rows()));
    }
    let mut g = Graph::new();
    let s = LatentBatch::from_states(std::slice::from_ref(start)).to_nodes(&mut g);
    let nodes = imagine_nodes(&mut g, model, policy, critic, &s, noise)?;
    Ok(nodes.trajectory(&g, 0, noise))
}
