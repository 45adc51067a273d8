use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::tensor::Tensor;
use crate::Scalar;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Identifies one parameter tensor across graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey {
    store: u64,
    index: usize,
}

impl ParamKey {
    pub fn store(self) -> u64 {
        self.store
    }

    pub fn index(self) -> usize {
        self.index
    }
}

/// Named parameter tensors of one network group (world model, actor, critic).
///
/// Every store carries a process-unique id so several stores can feed the same
/// graph; clones receive a fresh id.
#[derive(Debug)]
pub struct ParamStore<T> {
    id: u64,
    prefix: String,
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            prefix: self.prefix.clone(),
            names: self.names.clone(),
            values: self.values.clone(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(prefix: &str) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            prefix: prefix.to_owned(),
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self, index: usize) -> ParamKey {
        ParamKey {
            store: self.id,
            index,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> usize {
        self.names.push(name.to_owned());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Glorot-uniform initialised `fan_in × fan_out` matrix.
    pub fn add_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::c(rng.gen_range(-limit..limit)))
            .collect();
        self.add(name, Tensor::from_vec(fan_in, fan_out, data).expect("sized"))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn qualified_name(&self, index: usize) -> String {
        format!("{}/{}", self.prefix, self.names[index])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, index: usize) -> &Tensor<T> {
        &self.values[index]
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.values[index]
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// `(qualified name, tensor)` pairs in insertion order.
    pub fn named(&self) -> impl Iterator<Item = (String, &Tensor<T>)> {
        (0..self.len()).map(move |i| (self.qualified_name(i), &self.values[i]))
    }
}
