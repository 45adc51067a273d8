//! Adaptive-moment optimizer with global-norm gradient clipping.

use super::tensor::Tensor;
use crate::{Error, Result, Scalar};

pub const DEFAULT_CLIP_NORM: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Global gradient norm above which gradients are rescaled; `None` disables clipping.
    pub clip_norm: Option<T>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[Tensor<T>], lr: T) -> Self {
        let zeros: Vec<_> = params
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            lr,
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            eps: T::c(1e-8),
            clip_norm: Some(T::c(DEFAULT_CLIP_NORM)),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Tensor<T>] {
        &self.second
    }
}

pub fn global_norm<T: Scalar>(grads: &[Tensor<T>]) -> T {
    grads.iter().map(Tensor::sq_norm).sum::<T>().sqrt()
}

/// One descent step `params ← params − lr · m̂ / (√v̂ + eps)`.
///
/// Returns the pre-clipping global gradient norm.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
) -> Result<T> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::dim("optimizer parameter list", params.len(), grads.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::dim("optimizer tensor", p.len(), g.len()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    let norm = global_norm(grads);
    let scale = match state.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => T::one(),
    };

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let gv = gv * scale;
            *mv = b1 * *mv + (T::one() - b1) * gv;
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
            let mhat = *mv / bias1;
            let vhat = *vv / bias2;
            *pv -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(norm)
}
