//! Central finite differences, the independent oracle for analytic gradients.

use super::tensor::Tensor;
use crate::Scalar;

/// Numerical gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference<T: Scalar>(
    x: &Tensor<T>,
    h: T,
    mut f: impl FnMut(&Tensor<T>) -> T,
) -> Tensor<T> {
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    let two = T::c(2.0);
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (two * h);
    }
    grad
}

/// Largest elementwise `|a − n| / max(|a|, |n|, floor)`.
pub fn max_rel_error<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>, floor: T) -> T {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), T::max)
}
