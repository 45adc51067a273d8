//! Latent imagination and the value estimators built on it: per-horizon
//! expansions `V_h`, the family over `h = 1..H`, and the λ-return.
//!
//! A trajectory from `s_t` holds `H + 1` states `s_t..s_{t+H}` with rewards
//! and critic values aligned index for index, so
//! `V_h = Σ_{k<h} γᵏ r_k + γʰ v_h`.

mod family;
mod imagine;

pub use family::{lambda_return, value_expansion, value_family, ValueFamily};
pub use imagine::{
    imagine, imagine_nodes, ImaginationNoise, ImaginedNodes, ImaginedTrajectory, PolicyNodes,
    ValueNodes,
};

use std::io::Write;

use crate::{Result, Scalar};

/// Writes the per-horizon diagnostic rows
/// `state_id,h,value,last_reward,bootstrap` for one trajectory, where
/// `last_reward = r_{t+h−1}` and `bootstrap = v_{t+h}`.
pub fn write_family_csv<T: Scalar, W: Write>(
    out: &mut W,
    state_id: usize,
    traj: &ImaginedTrajectory<T>,
    gamma: T,
) -> std::io::Result<()> {
    let family = traj.family(gamma).map_err(|e| std::io::Error::other(e.to_string()))?;
    for h in 1..=family.horizon() {
        writeln!(
            out,
            "{state_id},{h},{},{},{}",
            family.get(h),
            traj.rewards[h - 1],
            traj.values[h]
        )?;
    }
    Ok(())
}

pub const FAMILY_CSV_HEADER: &str = "state_id,h,value,last_reward,bootstrap";

pub(crate) fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma >= T::zero() && gamma < T::one()) {
        return Err(crate::Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    Ok(())
}
