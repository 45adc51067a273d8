use crate::backbone::{DiagGaussian, GaussianNodes, Graph, Tensor, Var};
use crate::Scalar;

/// Model state: deterministic recurrent part plus a stochastic sample and the
/// diagonal Gaussian it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState<T> {
    pub deter: Vec<T>,
    pub stoch: Vec<T>,
    pub dist: DiagGaussian<T>,
}

impl<T: Scalar> LatentState<T> {
    /// All-zero state used at sequence starts.
    pub fn zero(deter: usize, stoch: usize) -> Self {
        Self {
            deter: vec![T::zero(); deter],
            stoch: vec![T::zero(); stoch],
            dist: DiagGaussian::standard(stoch),
        }
    }

    /// `[deter, stoch]`, the input of every head.
    pub fn feature(&self) -> Vec<T> {
        let mut f = self.deter.clone();
        f.extend_from_slice(&self.stoch);
        f
    }
}

/// A batch of latent states as graph nodes, one state per row.
#[derive(Debug, Clone, Copy)]
pub struct LatentNodes {
    pub deter: Var,
    pub stoch: Var,
    pub dist: GaussianNodes,
}

impl LatentNodes {
    pub fn batch_size<T: Scalar>(&self, g: &Graph<T>) -> usize {
        g.value(self.deter).rows()
    }

    pub fn feature<T: Scalar>(&self, g: &mut Graph<T>) -> crate::Result<Var> {
        Ok(g.concat(&[self.deter, self.stoch])?)
    }

    pub fn state<T: Scalar>(&self, g: &Graph<T>, row: usize) -> LatentState<T> {
        LatentState {
            deter: g.value(self.deter).row(row).to_vec(),
            stoch: g.value(self.stoch).row(row).to_vec(),
            dist: self.dist.to_values(g, row),
        }
    }

    pub fn detach<T: Scalar>(&self, g: &Graph<T>) -> LatentBatch<T> {
        LatentBatch {
            deter: g.value(self.deter).clone(),
            stoch: g.value(self.stoch).clone(),
            mean: g.value(self.dist.mean).clone(),
            std: g.value(self.dist.std).clone(),
        }
    }
}

/// Detached batch of latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<T> {
    pub deter: Tensor<T>,
    pub stoch: Tensor<T>,
    pub mean: Tensor<T>,
    pub std: Tensor<T>,
}

impl<T: Scalar> LatentBatch<T> {
    pub fn zeros(rows: usize, deter: usize, stoch: usize) -> Self {
        Self {
            deter: Tensor::zeros(rows, deter),
            stoch: Tensor::zeros(rows, stoch),
            mean: Tensor::zeros(rows, stoch),
            std: Tensor::full(rows, stoch, T::one()),
        }
    }

    pub fn from_states(states: &[LatentState<T>]) -> Self {
        let rows = |f: &dyn Fn(&LatentState<T>) -> &[T]| {
            Tensor::from_rows(&states.iter().map(f).collect::<Vec<_>>()).expect("uniform states")
        };
        Self {
            deter: rows(&|s| &s.deter),
            stoch: rows(&|s| &s.stoch),
            mean: rows(&|s| s.dist.mean()),
            std: rows(&|s| s.dist.std()),
        }
    }

    /// Stacks batches row-wise.
    pub fn stack(parts: &[LatentBatch<T>]) -> Self {
        let cat = |f: &dyn Fn(&LatentBatch<T>) -> &Tensor<T>| {
            let rows: Vec<&[T]> = parts
                .iter()
                .flat_map(|p| (0..f(p).rows()).map(move |r| f(p).row(r)))
                .collect();
            Tensor::from_rows(&rows).expect("uniform batches")
        };
        Self {
            deter: cat(&|p| &p.deter),
            stoch: cat(&|p| &p.stoch),
            mean: cat(&|p| &p.mean),
            std: cat(&|p| &p.std),
        }
    }

    pub fn len(&self) -> usize {
        self.deter.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, row: usize) -> LatentState<T> {
        LatentState {
            deter: self.deter.row(row).to_vec(),
            stoch: self.stoch.row(row).to_vec(),
            dist: DiagGaussian::new(self.mean.row(row).to_vec(), self.std.row(row).to_vec())
                .expect("batch holds valid gaussians"),
        }
    }

    /// Adds the batch to `g` as constants (no gradient flows into it).
    pub fn to_nodes(&self, g: &mut Graph<T>) -> LatentNodes {
        LatentNodes {
            deter: g.constant(self.deter.clone()),
            stoch: g.constant(self.stoch.clone()),
            dist: GaussianNodes {
                mean: g.constant(self.mean.clone()),
                std: g.constant(self.std.clone()),
            },
        }
    }

    pub fn feature(&self) -> Tensor<T> {
        let rows: Vec<Vec<T>> = (0..self.len())
            .map(|r| {
                let mut f = self.deter.row(r).to_vec();
                f.extend_from_slice(self.stoch.row(r));
                f
            })
            .collect();
        Tensor::from_rows(&rows).expect("uniform")
    }
}
