use crate::backbone::{Graph, Tensor, Var};
use crate::value_expansion::ValueNodes;
use crate::world_model::LatentNodes;
use crate::{Error, Result, Scalar};

/// `−mean_states max_h V_h`. `family` holds the `n × 1` nodes `V_1..V_H`;
/// the gradient reaches only the largest expansion of each state, with ties
/// going to the smaller horizon.
pub fn actor_loss<T: Scalar>(g: &mut Graph<T>, family: &[Var]) -> Result<Var> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty value family".into()));
    }
    let stacked = g.concat(family)?;
    let best = g.max_cols(stacked)?;
    let mean = g.mean(best)?;
    Ok(g.neg(mean)?)
}

/// `mean ½ (v(s) − target)²` with constant targets.
pub fn critic_loss<T, C>(g: &mut Graph<T>, critic: &C, states: &LatentNodes, targets: &[T]) -> Result<Var>
where
    T: Scalar,
    C: ValueNodes<T> + ?Sized,
{
    let v = critic.value_nodes(g, states)?;
    if g.value(v).rows() != targets.len() {
        return Err(Error::dim("critic targets", g.value(v).rows(), targets.len()));
    }
    let target = g.constant(Tensor::column(targets.to_vec()));
    let diff = g.sub(v, target)?;
    let sq = g.square(diff)?;
    let mean = g.mean(sq)?;
    Ok(g.scale(mean, T::c(0.5))?)
}
