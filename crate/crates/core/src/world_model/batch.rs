use crate::backbone::Tensor;
use crate::{Error, Result, Scalar};

/// `B` contiguous windows of length `L`, stored time-major so each step is a
/// ready-made `B × ·` matrix.
///
/// `actions[t]` is the action taken at `observations[t]`; `rewards[t]` is the
/// reward received in that step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch<T> {
    pub actions: Vec<Tensor<T>>,
    pub observations: Vec<Tensor<T>>,
    pub rewards: Vec<Tensor<T>>,
}

/// One window of experience as plain rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<T> {
    pub actions: Vec<Vec<T>>,
    pub observations: Vec<Vec<T>>,
    pub rewards: Vec<T>,
}

impl<T: Scalar> SequenceBatch<T> {
    pub fn from_sequences(seqs: &[Sequence<T>]) -> Result<Self> {
        let first = seqs
            .first()
            .ok_or_else(|| Error::InsufficientData("empty batch".into()))?;
        let len = first.rewards.len();
        if len == 0 {
            return Err(Error::InsufficientData("empty sequence".into()));
        }
        for s in seqs {
            if s.rewards.len() != len || s.actions.len() != len || s.observations.len() != len {
                return Err(Error::dim("sequence length", len, s.rewards.len()));
            }
        }
        let step = |t: usize, f: &dyn Fn(&Sequence<T>, usize) -> Vec<T>| {
            let rows: Vec<Vec<T>> = seqs.iter().map(|s| f(s, t)).collect();
            Tensor::from_rows(&rows).ok_or_else(|| {
                Error::InvalidArgument(format!("ragged rows at step {t}"))
            })
        };
        let mut out = SequenceBatch {
            actions: Vec::with_capacity(len),
            observations: Vec::with_capacity(len),
            rewards: Vec::with_capacity(len),
        };
        for t in 0..len {
            out.actions.push(step(t, &|s, t| s.actions[t].clone())?);
            out.observations.push(step(t, &|s, t| s.observations[t].clone())?);
            out.rewards.push(step(t, &|s, t| vec![s.rewards[t]])?);
        }
        Ok(out)
    }

    pub fn batch_size(&self) -> usize {
        self.rewards.first().map_or(0, Tensor::rows)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Tensor::cols)
    }

    pub fn obs_len(&self) -> usize {
        self.observations.first().map_or(0, Tensor::cols)
    }

    /// Action fed to the recurrent core before observation `t`: the recorded
    /// previous action, or zeros at the window start.
    pub fn prev_action(&self, t: usize) -> Tensor<T> {
        if t == 0 {
            Tensor::zeros(self.batch_size(), self.action_dim())
        } else {
            self.actions[t - 1].clone()
        }
    }

    /// First `len` steps.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            actions: self.actions[..len].to_vec(),
            observations: self.observations[..len].to_vec(),
            rewards: self.rewards[..len].to_vec(),
        }
    }

    /// Batch element `b` alone.
    pub fn element(&self, b: usize) -> Self {
        let pick = |ts: &[Tensor<T>]| {
            ts.iter()
                .map(|t| Tensor::row_vector(t.row(b).to_vec()))
                .collect()
        };
        Self {
            actions: pick(&self.actions),
            observations: pick(&self.observations),
            rewards: pick(&self.rewards),
        }
    }
}
