//! Diagonal Gaussians: value-level type, closed-form KL, and the graph-level
//! counterparts used inside model losses.

use super::graph::{Graph, GraphError, Var};
use super::tensor::Tensor;
use crate::{Error, Result, Scalar};

/// Lower bound added after the softplus that produces standard deviations.
pub const MIN_STD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian<T> {
    mean: Vec<T>,
    std: Vec<T>,
}

impl<T: Scalar> DiagGaussian<T> {
    pub fn new(mean: Vec<T>, std: Vec<T>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::dim("gaussian std", mean.len(), std.len()));
        }
        if std.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "standard deviations must be positive and finite".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    /// Unit-variance Gaussian centred at zero.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            std: vec![T::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn std(&self) -> &[T] {
        &self.std
    }

    /// Reparameterised sample `mean + std ⊙ noise`.
    pub fn sample(&self, noise: &[T]) -> Result<Vec<T>> {
        if noise.len() != self.dim() {
            return Err(Error::dim("gaussian noise", self.dim(), noise.len()));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.std)
            .zip(noise)
            .map(|((&m, &s), &e)| m + s * e)
            .collect())
    }

    pub fn log_prob(&self, x: &[T]) -> T {
        let half = T::c(0.5);
        let log_2pi = T::c((2.0 * std::f64::consts::PI).ln());
        self.mean
            .iter()
            .zip(&self.std)
            .zip(x)
            .map(|((&m, &s), &x)| {
                let z = (x - m) / s;
                -half * z * z - s.ln() - half * log_2pi
            })
            .sum()
    }
}

/// `KL(p ‖ q)` for diagonal Gaussians.
pub fn kl_diag_gaussian<T: Scalar>(p: &DiagGaussian<T>, q: &DiagGaussian<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::dim("kl operands", p.dim(), q.dim()));
    }
    let half = T::c(0.5);
    let kl: T = (0..p.dim())
        .map(|i| {
            let (mp, sp, mq, sq) = (p.mean[i], p.std[i], q.mean[i], q.std[i]);
            let d = mp - mq;
            sq.ln() - sp.ln() + (sp * sp + d * d) / (T::c(2.0) * sq * sq) - half
        })
        .sum();
    // Rounding can leave a tiny negative residue when p == q.
    Ok(kl.max(T::zero()))
}

/// A batch of diagonal Gaussians as graph nodes, one distribution per row.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNodes {
    pub mean: Var,
    pub std: Var,
}

impl GaussianNodes {
    /// Splits `n×2d` head output into mean and `softplus(raw) + MIN_STD`.
    pub fn from_head<T: Scalar>(g: &mut Graph<T>, head: Var, dim: usize) -> Result<Self, GraphError> {
        let mean = g.slice(head, 0, dim)?;
        let raw = g.slice(head, dim, dim)?;
        let std = g.softplus(raw)?;
        let std = g.shift(std, T::c(MIN_STD))?;
        Ok(Self { mean, std })
    }

    pub fn sample<T: Scalar>(&self, g: &mut Graph<T>, noise: Var) -> Result<Var, GraphError> {
        let scaled = g.mul(self.std, noise)?;
        g.add(self.mean, scaled)
    }

    /// Per-row `KL(self ‖ other)` as an `n×1` node.
    pub fn kl<T: Scalar>(&self, g: &mut Graph<T>, other: &GaussianNodes) -> Result<Var, GraphError> {
        let log_sq = g.log(other.std)?;
        let log_sp = g.log(self.std)?;
        let log_ratio = g.sub(log_sq, log_sp)?;
        let var_p = g.square(self.std)?;
        let diff = g.sub(self.mean, other.mean)?;
        let diff2 = g.square(diff)?;
        let num = g.add(var_p, diff2)?;
        let var_q = g.square(other.std)?;
        let den = g.scale(var_q, T::c(2.0))?;
        let frac = g.div(num, den)?;
        let per_dim = g.add(log_ratio, frac)?;
        let per_dim = g.shift(per_dim, T::c(-0.5))?;
        g.sum_cols(per_dim)
    }

    pub fn to_values<T: Scalar>(&self, g: &Graph<T>, row: usize) -> DiagGaussian<T> {
        DiagGaussian {
            mean: g.value(self.mean).row(row).to_vec(),
            std: g.value(self.std).row(row).to_vec(),
        }
    }
}

/// Fills a tensor with standard-normal draws.
pub fn normal_tensor<T: Scalar>(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Tensor<T> {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..rows * cols)
        .map(|_| T::c(StandardNormal.sample(rng)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kl_of_identical_is_zero() {
        let p = DiagGaussian::<f64>::new(vec![0.3, -1.0], vec![0.5, 2.0]).unwrap();
        assert!(kl_diag_gaussian(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_unit_shift_is_half() {
        let p = DiagGaussian::<f64>::new(vec![0.0], vec![1.0]).unwrap();
        let q = DiagGaussian::new(vec![1.0], vec![1.0]).unwrap();
        assert!((kl_diag_gaussian(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let p = DiagGaussian::<f64>::standard(2);
        let q = DiagGaussian::<f64>::standard(3);
        assert!(matches!(kl_diag_gaussian(&p, &q), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_non_positive_std() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = DiagGaussian::new(vec![0.2, -0.5, 1.0, 0.0], vec![0.8, 1.3, 0.6, 1.0]).unwrap();
        let q = DiagGaussian::new(vec![-0.1, 0.4, 0.7, 0.5], vec![1.1, 0.9, 0.8, 1.4]).unwrap();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let eps: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = p.sample(&eps).unwrap();
            acc += p.log_prob(&x) - q.log_prob(&x);
        }
        let mc = acc / n as f64;
        let exact = kl_diag_gaussian(&p, &q).unwrap();
        assert!((mc - exact).abs() < 1e-2, "mc {mc} exact {exact}");
    }

    #[test]
    fn graph_kl_matches_closed_form() {
        let mut g = Graph::<f64>::new();
        let pm = g.input("pm", Tensor::row_vector(vec![0.2, -0.5]));
        let ps = g.input("ps", Tensor::row_vector(vec![0.8, 1.3]));
        let qm = g.input("qm", Tensor::row_vector(vec![-0.1, 0.4]));
        let qs = g.input("qs", Tensor::row_vector(vec![1.1, 0.9]));
        let p = GaussianNodes { mean: pm, std: ps };
        let q = GaussianNodes { mean: qm, std: qs };
        let kl = p.kl(&mut g, &q).unwrap();
        let exact = kl_diag_gaussian(&p.to_values(&g, 0), &q.to_values(&g, 0)).unwrap();
        assert!((g.value(kl).item() - exact).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_sample_is_mean() {
        let p = DiagGaussian::new(vec![0.4, -2.0], vec![3.0, 0.1]).unwrap();
        assert_eq!(p.sample(&[0.0, 0.0]).unwrap(), vec![0.4, -2.0]);
    }

    proptest::proptest! {
        #[test]
        fn kl_is_nonnegative(
            pm in proptest::collection::vec(-3.0f64..3.0, 3),
            ps in proptest::collection::vec(0.05f64..4.0, 3),
            qm in proptest::collection::vec(-3.0f64..3.0, 3),
            qs in proptest::collection::vec(0.05f64..4.0, 3),
        ) {
            let p = DiagGaussian::new(pm, ps).unwrap();
            let q = DiagGaussian::new(qm, qs).unwrap();
            proptest::prop_assert!(kl_diag_gaussian(&p, &q).unwrap() >= 0.0);
        }
    }
}
