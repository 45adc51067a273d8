//! Reconstruction-driven horizon selection.
//!
//! For a posterior state `s` we decode its observation, re-encode it into
//! `ŝ` with the same context and posterior noise, and imagine from both with
//! one shared noise record. The horizons where the two value families agree
//! best are trusted; the final estimate averages `V_h(s)` over them.

use std::io::Write;

use crate::backbone::{Graph, Tensor, Var};
use crate::value_expansion::{
    imagine, imagine_nodes, ImaginationNoise, ImaginedNodes, ImaginedTrajectory, PolicyNodes,
    ValueFamily, ValueNodes,
};
use crate::world_model::{LatentBatch, LatentModel, LatentNodes, LatentState};
use crate::{Error, Result, Scalar};

/// Re-encodes the decoded observation of `s`: `ŝ = represent(prev,
/// prev_action, reconstruct(s), noise)`. `noise` must be the posterior noise
/// that produced `s`.
pub fn reconstruction_state<T, M>(
    model: &M,
    prev: &LatentState<T>,
    prev_action: &[T],
    s: &LatentState<T>,
    noise: &[T],
) -> Result<LatentState<T>>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
{
    let image = model.reconstruct(s)?;
    model.represent(prev, prev_action, &image, noise)
}

/// Batched [`reconstruction_state`] on the graph. The decoded image enters as
/// a constant.
pub fn reconstruction_nodes<T, M>(
    g: &mut Graph<T>,
    model: &M,
    prev: &LatentNodes,
    prev_action: Var,
    s: &LatentNodes,
    noise: Var,
) -> Result<LatentNodes>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
{
    let image = model.reconstruct_nodes(g, s)?;
    model.represent_nodes(g, prev, prev_action, image, noise)
}

/// `|V_h(s) − V_h(ŝ)|` for every horizon.
pub fn horizon_errors<T: Scalar>(original: &ValueFamily<T>, reconstructed: &ValueFamily<T>) -> Result<Vec<T>> {
    if original.horizon() != reconstructed.horizon() {
        return Err(Error::dim("value family", original.horizon(), reconstructed.horizon()));
    }
    if original.gamma() != reconstructed.gamma() {
        return Err(Error::InvalidArgument("value families use different discounts".into()));
    }
    Ok(original
        .values()
        .iter()
        .zip(reconstructed.values())
        .map(|(&a, &b)| (a - b).abs())
        .collect())
}

/// The `k` horizons (1-based, ascending) with the smallest errors. Ties go to
/// the smaller horizon.
pub fn select_horizons<T: Scalar>(errors: &[T], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > errors.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} of {} horizons",
            errors.len()
        )));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("horizon errors".into()));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| {
        errors[a]
            .partial_cmp(&errors[b])
            .expect("finite")
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order[..k].iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Mean of `V_h(s)` over the selected horizons.
pub fn dmve_value<T: Scalar>(family: &ValueFamily<T>, selected: &[usize]) -> Result<T> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("no horizons selected".into()));
    }
    if let Some(&h) = selected.iter().find(|&&h| h < 1 || h > family.horizon()) {
        return Err(Error::InvalidArgument(format!(
            "horizon {h} outside 1..={}",
            family.horizon()
        )));
    }
    let sum: T = selected.iter().map(|&h| family.get(h)).sum();
    Ok(sum / T::c(selected.len() as f64))
}

/// Outcome of horizon selection for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSelection<T> {
    pub family: ValueFamily<T>,
    pub reconstructed_family: ValueFamily<T>,
    pub errors: Vec<T>,
    pub selected: Vec<usize>,
    pub value: T,
}

impl<T: Scalar> HorizonSelection<T> {
    pub fn from_families(family: ValueFamily<T>, reconstructed_family: ValueFamily<T>, k: usize) -> Result<Self> {
        let errors = horizon_errors(&family, &reconstructed_family)?;
        let selected = select_horizons(&errors, k)?;
        let value = dmve_value(&family, &selected)?;
        Ok(Self {
            family,
            reconstructed_family,
            errors,
            selected,
            value,
        })
    }

    pub fn mean_selected_horizon(&self) -> f64 {
        self.selected.iter().sum::<usize>() as f64 / self.selected.len() as f64
    }

    pub fn min_error(&self) -> T {
        self.errors.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_error(&self) -> T {
        self.errors.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Single-state estimate with every intermediate artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate<T> {
    pub reconstructed_state: LatentState<T>,
    pub trajectory: ImaginedTrajectory<T>,
    pub reconstructed_trajectory: ImaginedTrajectory<T>,
    pub selection: HorizonSelection<T>,
}

/// Generating context of a posterior state.
#[derive(Debug, Clone, Copy)]
pub struct StateContext<'a, T> {
    pub prev: &'a LatentState<T>,
    pub prev_action: &'a [T],
    pub state: &'a LatentState<T>,
    /// Posterior noise that produced `state`.
    pub posterior_noise: &'a [T],
}

/// Reconstruct, imagine from both states with one noise record, compare the
/// families, select `k` horizons and average.
pub fn estimate_state_value<T, M, P, C>(
    model: &M,
    policy: &P,
    critic: &C,
    ctx: StateContext<'_, T>,
    noise: &ImaginationNoise<T>,
    k: usize,
    gamma: T,
) -> Result<StateEstimate<T>>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
    P: PolicyNodes<T> + ?Sized,
    C: ValueNodes<T> + ?Sized,
{
    let s_hat = reconstruction_state(model, ctx.prev, ctx.prev_action, ctx.state, ctx.posterior_noise)?;
    let trajectory = imagine(model, policy, critic, ctx.state, noise)?;
    let reconstructed_trajectory = imagine(model, policy, critic, &s_hat, noise)?;
    let selection = HorizonSelection::from_families(
        trajectory.family(gamma)?,
        reconstructed_trajectory.family(gamma)?,
        k,
    )?;
    Ok(StateEstimate {
        reconstructed_state: s_hat,
        trajectory,
        reconstructed_trajectory,
        selection,
    })
}

/// Batched contexts: row `i` of each field belongs to state `i`.
#[derive(Debug, Clone)]
pub struct BatchContext<T> {
    pub prev: LatentBatch<T>,
    pub prev_action: Tensor<T>,
    pub state: LatentBatch<T>,
    pub posterior_noise: Tensor<T>,
}

impl<T: Scalar> BatchContext<T> {
    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }
}

/// Result of [`estimate_batch`]. `rollout` is the imagination from the
/// original states, left on the graph so callers can differentiate through it.
pub struct BatchEstimate<T> {
    pub start: LatentNodes,
    pub rollout: ImaginedNodes,
    pub selections: Vec<HorizonSelection<T>>,
}

impl<T: Scalar> BatchEstimate<T> {
    pub fn mean_selected_horizon(&self) -> f64 {
        self.selections.iter().map(HorizonSelection::mean_selected_horizon).sum::<f64>()
            / self.selections.len() as f64
    }
}

/// [`estimate_state_value`] for a batch of states on one graph. The original
/// states enter as constants.
#[allow(clippy::too_many_arguments)]
pub fn estimate_batch<T, M, P, C>(
    g: &mut Graph<T>,
    model: &M,
    policy: &P,
    critic: &C,
    ctx: &BatchContext<T>,
    noise: &ImaginationNoise<T>,
    k: usize,
    gamma: T,
) -> Result<BatchEstimate<T>>
where
    T: Scalar,
    M: LatentModel<T> + ?Sized,
    P: PolicyNodes<T> + ?Sized,
    C: ValueNodes<T> + ?Sized,
{
    // The reconstruction branch only feeds the selection, so it lives on a
    // scratch graph that is dropped before the caller differentiates.
    let recon_families = {
        let mut scratch = Graph::new();
        let g = &mut scratch;
        let start = ctx.state.to_nodes(g);
        let prev = ctx.prev.to_nodes(g);
        let prev_action = g.constant(ctx.prev_action.clone());
        let post_noise = g.constant(ctx.posterior_noise.clone());
        let s_hat = reconstruction_nodes(g, model, &prev, prev_action, &start, post_noise)?;
        let recon_rollout = imagine_nodes(g, model, policy, critic, &s_hat, noise)?;
        recon_rollout.families(g, gamma)?
    };
    let start = ctx.state.to_nodes(g);
    let rollout = imagine_nodes(g, model, policy, critic, &start, noise)?;
    let families = rollout.families(g, gamma)?;
    let selections = families
        .into_iter()
        .zip(recon_families)
        .map(|(f, rf)| HorizonSelection::from_families(f, rf, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchEstimate {
        start,
        rollout,
        selections,
    })
}

pub const HORIZON_CSV_HEADER: &str = "step,state_id,selected,mean_selected_horizon,min_error,max_error";

/// Writes one diagnostics row per selection; selected horizons are joined
/// with `;`.
pub fn write_horizon_csv<T: Scalar, W: Write>(
    out: &mut W,
    step: usize,
    selections: &[HorizonSelection<T>],
) -> std::io::Result<()> {
    for (id, s) in selections.iter().enumerate() {
        let picked: Vec<String> = s.selected.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{step},{id},{},{},{},{}",
            picked.join(";"),
            s.mean_selected_horizon(),
            s.min_error(),
            s.max_error()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
