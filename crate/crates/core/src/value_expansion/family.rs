use super::check_gamma;
use crate::{Error, Result, Scalar};

/// `[V_1, .., V_H]` for one start state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFamily<T> {
    values: Vec<T>,
    gamma: T,
}

impl<T: Scalar> ValueFamily<T> {
    pub fn new(values: Vec<T>, gamma: T) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty value family".into()));
        }
        Ok(Self { values, gamma })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `V_h`, 1-based.
    pub fn get(&self, h: usize) -> T {
        self.values[h - 1]
    }

    /// 1-based horizon of the largest expansion; ties go to the smaller one.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best + 1
    }

    pub fn max(&self) -> T {
        self.get(self.argmax())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::c(self.values.len() as f64)
    }
}

fn check_aligned<T>(rewards: &[T], values: &[T]) -> Result<usize> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("trajectory needs at least one step".into()));
    }
    if rewards.len() + 1 < values.len() {
        return Err(Error::dim("trajectory rewards", values.len() - 1, rewards.len()));
    }
    Ok(values.len() - 1)
}

/// `V_h = Σ_{k<h} γᵏ rewards[k] + γʰ values[h]`.
pub fn value_expansion<T: Scalar>(rewards: &[T], values: &[T], h: usize, gamma: T) -> Result<T> {
    let horizon = check_aligned(rewards, values)?;
    check_gamma(gamma)?;
    if h < 1 || h > horizon {
        return Err(Error::InvalidArgument(format!("horizon {h} outside 1..={horizon}")));
    }
    let mut sum = T::zero();
    let mut discount = T::one();
    for &r in &rewards[..h] {
        sum += discount * r;
        discount *= gamma;
    }
    Ok(sum + discount * values[h])
}

/// Every `V_h` for `h = 1..H` in one pass over the trajectory.
pub fn value_family<T: Scalar>(rewards: &[T], values: &[T], gamma: T) -> Result<ValueFamily<T>> {
    let horizon = check_aligned(rewards, values)?;
    check_gamma(gamma)?;
    let mut out = Vec::with_capacity(horizon);
    let mut partial = T::zero();
    let mut discount = T::one();
    for h in 1..=horizon {
        partial += discount * rewards[h - 1];
        discount *= gamma;
        out.push(partial + discount * values[h]);
    }
    ValueFamily::new(out, gamma)
}

/// `(1 − λ) Σ_{n=1}^{H−1} λⁿ⁻¹ V_n + λᴴ⁻¹ V_H`, evaluated at the rollout
/// root.
pub fn lambda_return<T: Scalar>(family: &ValueFamily<T>, lambda: T) -> Result<T> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::InvalidArgument(format!("λ = {lambda} outside [0, 1]")));
    }
    let h = family.horizon();
    let mut mix = T::zero();
    let mut weight = T::one();
    for n in 1..h {
        mix += weight * family.get(n);
        weight *= lambda;
    }
    Ok((T::one() - lambda) * mix + weight * family.get(h))
}
