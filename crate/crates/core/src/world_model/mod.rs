//! Latent world model: representation, reconstruction, reward and transition
//! modules sharing one recurrent core.
//!
//! Every network runs on the autodiff [`Graph`] with one latent state per row.
//! The value-level methods of [`LatentModel`] wrap the graph code for single
//! states; training and imagination use the batched node functions directly.

mod batch;
mod latent;
mod observation;

pub use batch::{Sequence, SequenceBatch};
pub use latent::{LatentBatch, LatentNodes, LatentState};
pub use observation::{ObsShape, Observation};

use rand::Rng;

use crate::backbone::{
    adam_step, normal_tensor, Activation, Checkpoint, Dense, GaussianNodes, Graph, Mlp,
    OptimizerState, ParamStore, Tensor, Var,
};
use crate::{Error, Result, Scalar};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Sizes of the world model networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub obs: ObsShape,
    pub action: usize,
    pub deter: usize,
    pub stoch: usize,
    pub hidden: usize,
    pub embed: usize,
}

impl ModelDims {
    /// 1×16×16 images, `d_h = 64`, `d_z = 16`.
    pub fn desk(action: usize) -> Self {
        Self {
            obs: ObsShape::new(1, 16, 16),
            action,
            deter: 64,
            stoch: 16,
            hidden: 64,
            embed: 64,
        }
    }

    pub fn feature(&self) -> usize {
        self.deter + self.stoch
    }
}

/// Model loss terms, each averaged over batch and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelLossReport<T> {
    pub total: T,
    pub reconstruction: T,
    pub reward: T,
    pub kl: T,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelLossNodes {
    pub total: Var,
    pub reconstruction: Var,
    pub reward: Var,
    pub kl: Var,
}

impl ModelLossNodes {
    pub fn report<T: Scalar>(&self, g: &Graph<T>) -> ModelLossReport<T> {
        ModelLossReport {
            total: g.value(self.total).item(),
            reconstruction: g.value(self.reconstruction).item(),
            reward: g.value(self.reward).item(),
            kl: g.value(self.kl).item(),
        }
    }
}

/// Posterior state at one step of an observed sequence, with the prior that
/// shares its deterministic part.
#[derive(Debug, Clone, Copy)]
pub struct ObservedStep {
    pub posterior: LatentNodes,
    pub prior: GaussianNodes,
}

/// Interface the value estimators need from a world model.
pub trait LatentModel<T: Scalar> {
    fn dims(&self) -> &ModelDims;

    /// Prior step: advance the recurrent core, then sample from the prior.
    fn transition_nodes(
        &self,
        g: &mut Graph<T>,
        prev: &LatentNodes,
        action: Var,
        noise: Var,
    ) -> Result<LatentNodes>;

    /// Posterior step: advance the recurrent core, then sample from the
    /// posterior conditioned on the encoded observation.
    fn represent_nodes(
        &self,
        g: &mut Graph<T>,
        prev: &LatentNodes,
        action: Var,
        obs: Var,
        noise: Var,
    ) -> Result<LatentNodes>;

    /// Reconstructed image clamped to `[0, 1]`, detached from the graph.
    fn reconstruct_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var>;

    /// Mean predicted reward, `n × 1`.
    fn reward_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var>;

    fn represent<U: Scalar>(
        &self,
        prev: &LatentState<T>,
        prev_action: &[T],
        obs: &Observation<U>,
        noise: &[T],
    ) -> Result<LatentState<T>> {
        let d = *self.dims();
        if obs.pixels().len() != d.obs.len() {
            return Err(Error::dim("observation", d.obs.len(), obs.pixels().len()));
        }
        let mut g = Graph::new();
        let (prev, action, noise) = single_inputs(&mut g, &d, prev, prev_action, noise)?;
        let obs = g.constant(obs.to_row());
        let s = self.represent_nodes(&mut g, &prev, action, obs, noise)?;
        Ok(s.state(&g, 0))
    }

    fn transition(
        &self,
        prev: &LatentState<T>,
        prev_action: &[T],
        noise: &[T],
    ) -> Result<LatentState<T>> {
        let d = *self.dims();
        let mut g = Graph::new();
        let (prev, action, noise) = single_inputs(&mut g, &d, prev, prev_action, noise)?;
        let s = self.transition_nodes(&mut g, &prev, action, noise)?;
        Ok(s.state(&g, 0))
    }

    fn reconstruct(&self, state: &LatentState<T>) -> Result<Observation<T>> {
        let d = *self.dims();
        check_state(&d, state)?;
        let mut g = Graph::new();
        let s = LatentBatch::from_states(std::slice::from_ref(state)).to_nodes(&mut g);
        let img = self.reconstruct_nodes(&mut g, &s)?;
        Observation::new(d.obs, g.value(img).data().to_vec())
    }

    fn predict_reward(&self, state: &LatentState<T>) -> Result<T> {
        let d = *self.dims();
        check_state(&d, state)?;
        let mut g = Graph::new();
        let s = LatentBatch::from_states(std::slice::from_ref(state)).to_nodes(&mut g);
        let r = self.reward_nodes(&mut g, &s)?;
        Ok(g.value(r).item())
    }
}

fn check_state<T: Scalar>(d: &ModelDims, s: &LatentState<T>) -> Result<()> {
    if s.deter.len() != d.deter {
        return Err(Error::dim("deterministic state", d.deter, s.deter.len()));
    }
    if s.stoch.len() != d.stoch || s.dist.dim() != d.stoch {
        return Err(Error::dim("stochastic state", d.stoch, s.stoch.len()));
    }
    Ok(())
}

fn single_inputs<T: Scalar>(
    g: &mut Graph<T>,
    d: &ModelDims,
    prev: &LatentState<T>,
    action: &[T],
    noise: &[T],
) -> Result<(LatentNodes, Var, Var)> {
    check_state(d, prev)?;
    if action.len() != d.action {
        return Err(Error::dim("action", d.action, action.len()));
    }
    if noise.len() != d.stoch {
        return Err(Error::dim("noise", d.stoch, noise.len()));
    }
    let prev = LatentBatch::from_states(std::slice::from_ref(prev)).to_nodes(g);
    let action = g.constant(Tensor::row_vector(action.to_vec()));
    let noise = g.constant(Tensor::row_vector(noise.to_vec()));
    Ok((prev, action, noise))
}

/// Standard-normal posterior noise for a `len`-step batch of `batch` rows.
pub fn sequence_noise<T: Scalar>(
    rng: &mut impl Rng,
    len: usize,
    batch: usize,
    stoch: usize,
) -> Vec<Tensor<T>> {
    (0..len).map(|_| normal_tensor(rng, batch, stoch)).collect()
}

#[derive(Debug, Clone)]
pub struct WorldModel<T: Scalar> {
    pub params: ParamStore<T>,
    pub dims: ModelDims,
    pub kl_weight: T,
    pub encoder: Mlp,
    pub core_input: Dense,
    pub gru_input: Dense,
    pub gru_hidden: Dense,
    pub prior: Mlp,
    pub posterior: Mlp,
    pub decoder: Mlp,
    pub reward: Mlp,
}

impl<T: Scalar> WorldModel<T> {
    pub fn new(dims: ModelDims, kl_weight: T, rng: &mut impl Rng) -> Self {
        let mut p = ParamStore::new("world_model");
        let d = dims;
        let p_len = d.obs.len();
        let encoder = Mlp::new(&mut p, "encoder", &[p_len, d.hidden, d.embed], Activation::Elu, rng);
        let core_input = Dense::new(&mut p, "core_in", d.stoch + d.action, d.hidden, rng);
        let gru_input = Dense::new(&mut p, "gru_x", d.hidden, 3 * d.deter, rng);
        let gru_hidden = Dense::new(&mut p, "gru_h", d.deter, 3 * d.deter, rng);
        let prior = Mlp::new(&mut p, "prior", &[d.deter, d.hidden, 2 * d.stoch], Activation::Elu, rng);
        let posterior = Mlp::new(
            &mut p,
            "posterior",
            &[d.deter + d.embed, d.hidden, 2 * d.stoch],
            Activation::Elu,
            rng,
        );
        let decoder = Mlp::new(&mut p, "decoder", &[d.feature(), d.hidden, p_len], Activation::Elu, rng);
        let reward = Mlp::new(&mut p, "reward", &[d.feature(), d.hidden, 1], Activation::Elu, rng);
        Self {
            params: p,
            dims,
            kl_weight,
            encoder,
            core_input,
            gru_input,
            gru_hidden,
            prior,
            posterior,
            decoder,
            reward,
        }
    }

    /// Gated recurrent update of the deterministic state from
    /// `(deter, stoch, action)` of the previous step.
    pub fn core_nodes(&self, g: &mut Graph<T>, prev: &LatentNodes, action: Var) -> Result<Var> {
        let p = &self.params;
        let d = self.dims.deter;
        let x = g.concat(&[prev.stoch, action])?;
        let x = self.core_input.forward(g, p, x)?;
        let x = g.elu(x)?;
        let gx = self.gru_input.forward(g, p, x)?;
        let gh = self.gru_hidden.forward(g, p, prev.deter)?;
        let gate = |g: &mut Graph<T>, k: usize| -> Result<Var> {
            let a = g.slice(gx, k * d, d)?;
            let b = g.slice(gh, k * d, d)?;
            let s = g.add(a, b)?;
            Ok(g.sigmoid(s)?)
        };
        let reset = gate(g, 0)?;
        let update = gate(g, 1)?;
        let cand_x = g.slice(gx, 2 * d, d)?;
        let cand_h = g.slice(gh, 2 * d, d)?;
        let cand_h = g.mul(reset, cand_h)?;
        let cand = g.add(cand_x, cand_h)?;
        let cand = g.tanh(cand)?;
        // h' = (1 − u)·n + u·h = n + u·(h − n)
        let diff = g.sub(prev.deter, cand)?;
        let keep = g.mul(update, diff)?;
        Ok(g.add(cand, keep)?)
    }

    pub fn prior_nodes(&self, g: &mut Graph<T>, deter: Var) -> Result<GaussianNodes> {
        let head = self.prior.forward(g, &self.params, deter)?;
        Ok(GaussianNodes::from_head(g, head, self.dims.stoch)?)
    }

    pub fn embed_nodes(&self, g: &mut Graph<T>, obs: Var) -> Result<Var> {
        let e = self.encoder.forward(g, &self.params, obs)?;
        Ok(g.elu(e)?)
    }

    pub fn posterior_nodes(&self, g: &mut Graph<T>, deter: Var, obs: Var) -> Result<GaussianNodes> {
        let e = self.embed_nodes(g, obs)?;
        let x = g.concat(&[deter, e])?;
        let head = self.posterior.forward(g, &self.params, x)?;
        Ok(GaussianNodes::from_head(g, head, self.dims.stoch)?)
    }

    /// Unclamped decoder mean (sigmoid output), differentiable.
    pub fn decode_mean_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var> {
        let f = state.feature(g)?;
        let logits = self.decoder.forward(g, &self.params, f)?;
        Ok(g.sigmoid(logits)?)
    }

    /// One observed step: posterior state plus the prior over the same
    /// deterministic part.
    pub fn observe_step(
        &self,
        g: &mut Graph<T>,
        prev: &LatentNodes,
        action: Var,
        obs: Var,
        noise: Var,
    ) -> Result<ObservedStep> {
        let deter = self.core_nodes(g, prev, action)?;
        let prior = self.prior_nodes(g, deter)?;
        let post = self.posterior_nodes(g, deter, obs)?;
        let stoch = post.sample(g, noise)?;
        Ok(ObservedStep {
            posterior: LatentNodes {
                deter,
                stoch,
                dist: post,
            },
            prior,
        })
    }

    /// Posterior states for a whole batch, chained from the zero state with
    /// the recorded actions.
    pub fn observe_nodes(
        &self,
        g: &mut Graph<T>,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<Vec<ObservedStep>> {
        self.check_batch(batch, noise)?;
        let d = self.dims;
        let mut prev = LatentBatch::zeros(batch.batch_size(), d.deter, d.stoch).to_nodes(g);
        let mut steps = Vec::with_capacity(batch.len());
        for t in 0..batch.len() {
            let action = g.constant(batch.prev_action(t));
            let obs = g.constant(batch.observations[t].clone());
            let eps = g.constant(noise[t].clone());
            let step = self.observe_step(g, &prev, action, obs, eps)?;
            prev = step.posterior;
            steps.push(step);
        }
        Ok(steps)
    }

    fn check_batch(&self, batch: &SequenceBatch<T>, noise: &[Tensor<T>]) -> Result<()> {
        let d = self.dims;
        if batch.is_empty() {
            return Err(Error::InsufficientData("empty sequence".into()));
        }
        if batch.obs_len() != d.obs.len() {
            return Err(Error::dim("batch observations", d.obs.len(), batch.obs_len()));
        }
        if batch.action_dim() != d.action {
            return Err(Error::dim("batch actions", d.action, batch.action_dim()));
        }
        if noise.len() != batch.len() {
            return Err(Error::dim("noise steps", batch.len(), noise.len()));
        }
        if let Some(n) = noise
            .iter()
            .find(|n| n.shape() != (batch.batch_size(), d.stoch))
        {
            return Err(Error::dim("noise columns", d.stoch, n.cols()));
        }
        Ok(())
    }

    /// Posterior state sequence for each batch element.
    pub fn observe_sequence(
        &self,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<Vec<Vec<LatentState<T>>>> {
        let mut g = Graph::new();
        let steps = self.observe_nodes(&mut g, batch, noise)?;
        Ok((0..batch.batch_size())
            .map(|b| steps.iter().map(|s| s.posterior.state(&g, b)).collect())
            .collect())
    }

    /// Negative log-likelihood of images and rewards under unit-variance
    /// Gaussians plus `β · KL(posterior ‖ prior)`, each averaged over batch
    /// and time. Returns the loss nodes and the observed steps.
    pub fn loss_nodes(
        &self,
        g: &mut Graph<T>,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<(ModelLossNodes, Vec<ObservedStep>)> {
        let steps = self.observe_nodes(g, batch, noise)?;
        let half = T::c(0.5);
        let pixels = T::c(self.dims.obs.len() as f64);
        let mut recon_terms = Vec::with_capacity(steps.len());
        let mut reward_terms = Vec::with_capacity(steps.len());
        let mut kl_terms = Vec::with_capacity(steps.len());
        for (t, step) in steps.iter().enumerate() {
            let mean = self.decode_mean_nodes(g, &step.posterior)?;
            let obs = g.constant(batch.observations[t].clone());
            let err = g.sub(obs, mean)?;
            let sq = g.square(err)?;
            let per_row = g.sum_cols(sq)?;
            let per_row = g.scale(per_row, half)?;
            recon_terms.push(g.shift(per_row, T::c(HALF_LOG_2PI) * pixels)?);

            let pred = self.reward_nodes(g, &step.posterior)?;
            let r = g.constant(batch.rewards[t].clone());
            let err = g.sub(r, pred)?;
            let sq = g.square(err)?;
            let sq = g.scale(sq, half)?;
            reward_terms.push(g.shift(sq, T::c(HALF_LOG_2PI))?);

            kl_terms.push(step.posterior.dist.kl(g, &step.prior)?);
        }
        let mean_of = |g: &mut Graph<T>, terms: &[Var]| -> Result<Var> {
            let all = g.concat(terms)?;
            Ok(g.mean(all)?)
        };
        let reconstruction = mean_of(g, &recon_terms)?;
        let reward = mean_of(g, &reward_terms)?;
        let kl = mean_of(g, &kl_terms)?;
        let weighted_kl = g.scale(kl, self.kl_weight)?;
        let total = g.add(reconstruction, reward)?;
        let total = g.add(total, weighted_kl)?;
        Ok((
            ModelLossNodes {
                total,
                reconstruction,
                reward,
                kl,
            },
            steps,
        ))
    }

    pub fn model_loss(
        &self,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<ModelLossReport<T>> {
        let mut g = Graph::new();
        let (loss, _) = self.loss_nodes(&mut g, batch, noise)?;
        let report = loss.report(&g);
        if !report.total.is_finite() {
            return Err(Error::NonFinite("model loss".into()));
        }
        Ok(report)
    }

    /// One optimizer step on the model loss. Returns the pre-update report.
    pub fn fit(
        &mut self,
        opt: &mut OptimizerState<T>,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<ModelLossReport<T>> {
        let mut g = Graph::new();
        let (loss, _) = self.loss_nodes(&mut g, batch, noise)?;
        let report = loss.report(&g);
        if !report.total.is_finite() {
            return Err(Error::NonFinite("model loss".into()));
        }
        let grads = g.backprop_params(loss.total, &[&self.params])?;
        let grads = grads.for_store(&self.params);
        adam_step(self.params.values_mut(), &grads, opt)?;
        Ok(report)
    }

    /// Mean squared pixel error between observations and the decoder mean of
    /// their posterior states.
    pub fn reconstruction_mse(
        &self,
        batch: &SequenceBatch<T>,
        noise: &[Tensor<T>],
    ) -> Result<T> {
        let mut g = Graph::new();
        let steps = self.observe_nodes(&mut g, batch, noise)?;
        let mut total = T::zero();
        let mut count = 0usize;
        for (t, step) in steps.iter().enumerate() {
            let mean = self.decode_mean_nodes(&mut g, &step.posterior)?;
            for (&a, &b) in g.value(mean).data().iter().zip(batch.observations[t].data()) {
                total += (a - b) * (a - b);
                count += 1;
            }
        }
        Ok(total / T::c(count as f64))
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        let d = self.dims;
        let m = |k: &str| format!("world_model/manifest/{k}");
        ck.push_scalar(&m("format_version"), f64::from(crate::backbone::checkpoint::FORMAT_VERSION));
        for (k, v) in [
            ("d_h", d.deter),
            ("d_z", d.stoch),
            ("channels", d.obs.channels),
            ("height", d.obs.height),
            ("width", d.obs.width),
            ("action", d.action),
            ("hidden", d.hidden),
            ("embed", d.embed),
        ] {
            ck.push_scalar(&m(k), v as f64);
        }
        ck.push_scalar(&m("kl_weight"), self.kl_weight.as_f64());
        ck.push_store(&self.params);
    }

    pub fn load(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ck.scalar(&format!("world_model/manifest/{k}")).ok_or_else(|| {
                Error::InvalidArgument(format!("checkpoint manifest lacks `{k}`"))
            })
        };
        let n = |k: &str| get(k).map(|v| v as usize);
        let dims = ModelDims {
            obs: ObsShape::new(n("channels")?, n("height")?, n("width")?),
            action: n("action")?,
            deter: n("d_h")?,
            stoch: n("d_z")?,
            hidden: n("hidden")?,
            embed: n("embed")?,
        };
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = Self::new(dims, T::c(get("kl_weight")?), &mut rng);
        ck.load_store(&mut model.params)?;
        Ok(model)
    }
}

impl<T: Scalar> LatentModel<T> for WorldModel<T> {
    fn dims(&self) -> &ModelDims {
        &self.dims
    }

    fn transition_nodes(
        &self,
        g: &mut Graph<T>,
        prev: &LatentNodes,
        action: Var,
        noise: Var,
    ) -> Result<LatentNodes> {
        let deter = self.core_nodes(g, prev, action)?;
        let dist = self.prior_nodes(g, deter)?;
        let stoch = dist.sample(g, noise)?;
        Ok(LatentNodes { deter, stoch, dist })
    }

    fn represent_nodes(
        &self,
        g: &mut Graph<T>,
        prev: &LatentNodes,
        action: Var,
        obs: Var,
        noise: Var,
    ) -> Result<LatentNodes> {
        let deter = self.core_nodes(g, prev, action)?;
        let dist = self.posterior_nodes(g, deter, obs)?;
        let stoch = dist.sample(g, noise)?;
        Ok(LatentNodes { deter, stoch, dist })
    }

    fn reconstruct_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var> {
        let mean = self.decode_mean_nodes(g, state)?;
        let clamped = g.value(mean).map(|v| v.max(T::zero()).min(T::one()));
        Ok(g.constant(clamped))
    }

    fn reward_nodes(&self, g: &mut Graph<T>, state: &LatentNodes) -> Result<Var> {
        let f = state.feature(g)?;
        Ok(self.reward.forward(g, &self.params, f)?)
    }
}

#[cfg(test)]
mod tests;
