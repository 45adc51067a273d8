use rand::Rng;

use crate::backbone::{Activation, Checkpoint, GaussianNodes, Graph, Mlp, ParamStore, Var, MIN_STD};
use crate::value_expansion::{PolicyNodes, ValueNodes};
use crate::world_model::{LatentBatch, LatentNodes, LatentState};
use crate::{Error, Result, Scalar};

/// Gaussian policy over pre-squash actions; actions are `tanh` of a
/// reparameterized sample, so they always lie in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Actor<T: Scalar> {
    pub params: ParamStore<T>,
    pub net: Mlp,
    pub feature: usize,
    pub hidden: usize,
    pub action_dim: usize,
}

impl<T: Scalar> Actor<T> {
    pub const HEAD_INIT_SCALE: f64 = 0.1;
    /// Pre-squash means are kept within `±MEAN_BOUND` by a scaled `tanh`.
    pub const MEAN_BOUND: f64 = 5.0;
    /// Standard deviation at a zero raw output.
    pub const INIT_STD: f64 = 5.0;

    pub fn new(feature: usize, hidden: usize, action_dim: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new("actor");
        let net = Mlp::new(
            &mut params,
            "net",
            &[feature, hidden, hidden, 2 * action_dim],
            Activation::Elu,
            rng,
        );
        // A small head starts the policy near zero actions, away from the
        // flat ends of the squashing.
        let w = net.output_layer().weight;
        *params.value_mut(w) = params.value(w).map(|x| x * T::c(Self::HEAD_INIT_SCALE));
        Self {
            params,
            net,
            feature,
            hidden,
            action_dim,
        }
    }

    /// Distribution over pre-squash actions: mean `b·tanh(μ/b)` and std
    /// `softplus(ρ + c) + MIN_STD`, with `c` chosen so that `ρ = 0` gives
    /// `INIT_STD`.
    pub fn dist_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<GaussianNodes> {
        let f = state.feature(g)?;
        let head = self.net.forward(g, &self.params, f)?;
        let bound = Self::MEAN_BOUND;
        let mean = g.slice(head, 0, self.action_dim)?;
        let mean = g.scale(mean, T::c(1.0 / bound))?;
        let mean = g.tanh(mean)?;
        let mean = g.scale(mean, T::c(bound))?;
        let raw = g.slice(head, self.action_dim, self.action_dim)?;
        let offset = Self::INIT_STD.exp_m1().ln();
        let raw = g.shift(raw, T::c(offset))?;
        let std = g.softplus(raw)?;
        let std = g.shift(std, T::c(MIN_STD))?;
        Ok(GaussianNodes { mean, std })
    }

    /// `tanh(mean)`, the noise-free action.
    pub fn mode_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var> {
        let d = self.dist_nodes(g, state)?;
        Ok(g.tanh(d.mean)?)
    }

    /// Sampled action for one state given standard-normal `noise`, or the
    /// mode when `noise` is `None`.
    pub fn act(&self, state: &LatentState<T>, noise: Option<&[T]>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let s = LatentBatch::from_states(std::slice::from_ref(state)).to_nodes(&mut g);
        let a = match noise {
            Some(eps) => {
                if eps.len() != self.action_dim {
                    return Err(Error::dim("action noise", self.action_dim, eps.len()));
                }
                let eps = g.constant(crate::backbone::Tensor::row_vector(eps.to_vec()));
                self.action_nodes(&mut g, &s, eps)?
            }
            None => self.mode_nodes(&mut g, &s)?,
        };
        Ok(g.value(a).data().to_vec())
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        ck.push_scalar("actor/manifest/hidden", self.hidden as f64);
        ck.push_scalar("actor/manifest/action", self.action_dim as f64);
        ck.push_store(&self.params);
    }

    pub fn load(ck: &Checkpoint, feature: usize) -> Result<Self> {
        let hidden = manifest(ck, "actor/manifest/hidden")?;
        let action = manifest(ck, "actor/manifest/action")?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut actor = Self::new(feature, hidden, action, &mut rng);
        ck.load_store(&mut actor.params)?;
        Ok(actor)
    }
}

impl<T: Scalar> PolicyNodes<T> for Actor<T> {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn action_nodes(&self, g: &mut Graph<T>, state: &LatentNodes, noise: Var) -> Result<Var> {
        let d = self.dist_nodes(g, state)?;
        let pre = d.sample(g, noise)?;
        Ok(g.tanh(pre)?)
    }
}

/// State-value network.
#[derive(Debug, Clone)]
pub struct Critic<T: Scalar> {
    pub params: ParamStore<T>,
    pub net: Mlp,
    pub hidden: usize,
}

impl<T: Scalar> Critic<T> {
    pub fn new(feature: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new("critic");
        let net = Mlp::new(&mut params, "net", &[feature, hidden, hidden, 1], Activation::Elu, rng);
        Self { params, net, hidden }
    }

    pub fn value(&self, state: &LatentState<T>) -> Result<T> {
        let mut g = Graph::new();
        let s = LatentBatch::from_states(std::slice::from_ref(state)).to_nodes(&mut g);
        let v = self.value_nodes(&mut g, &s)?;
        Ok(g.value(v).item())
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        ck.push_scalar("critic/manifest/hidden", self.hidden as f64);
        ck.push_store(&self.params);
    }

    pub fn load(ck: &Checkpoint, feature: usize) -> Result<Self> {
        let hidden = manifest(ck, "critic/manifest/hidden")?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut critic = Self::new(feature, hidden, &mut rng);
        ck.load_store(&mut critic.params)?;
        Ok(critic)
    }
}

impl<T: Scalar> ValueNodes<T> for Critic<T> {
    fn value_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var> {
        let f = state.feature(g)?;
        Ok(self.net.forward(g, &self.params, f)?)
    }
}

fn manifest(ck: &Checkpoint, key: &str) -> Result<usize> {
    ck.scalar(key)
        .map(|v| v as usize)
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks `{key}`")))
}
