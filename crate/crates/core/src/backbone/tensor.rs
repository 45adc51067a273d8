use std::fmt;

use crate::Scalar;

/// Dense row-major 2-D array. Row vectors, column vectors and scalars are all
/// expressed as matrices; batches run along the rows.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]{:?}", self.rows, self.cols, self.data)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, T::zero())
    }

    pub fn full(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// Returns `None` when `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn column(data: Vec<T>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    /// Stacks equally sized row slices into a matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return None;
            }
            data.extend_from_slice(r.as_ref());
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::c(v.as_f64())).collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// The single element of a 1x1 tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }
}

impl<T> Tensor<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `a · b` for `a: n×k`, `b: k×m`. Each output row is accumulated in the same
/// order regardless of `n`, so a row computed alone matches the same row
/// computed inside a batch bit for bit.
pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate().take(k) {
            let brow = &b.data[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `dy · bᵀ` for `dy: n×m`, `b: k×m`.
pub(crate) fn matmul_nt<T: Scalar>(dy: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, m, k) = (dy.rows, dy.cols, b.rows);
    let mut out = Tensor::zeros(n, k);
    for i in 0..n {
        let drow = dy.row(i);
        for kk in 0..k {
            let brow = &b.data[kk * m..(kk + 1) * m];
            let mut acc = T::zero();
            for (&d, &bv) in drow.iter().zip(brow) {
                acc += d * bv;
            }
            out.data[i * k + kk] = acc;
        }
    }
    out
}

/// `aᵀ · dy` for `a: n×k`, `dy: n×m`.
pub(crate) fn matmul_tn<T: Scalar>(a: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows, a.cols, dy.cols);
    let mut out = Tensor::zeros(k, m);
    for i in 0..n {
        let arow = a.row(i);
        let drow = dy.row(i);
        for (kk, &aik) in arow.iter().enumerate() {
            let orow = &mut out.data[kk * m..(kk + 1) * m];
            for (o, &d) in orow.iter_mut().zip(drow) {
                *o += aik * d;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        let dy = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(matmul_nt(&dy, &b).data(), &[7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        assert_eq!(matmul_tn(&a, &dy).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn batched_row_matches_single_row() {
        let a = Tensor::from_vec(3, 2, vec![0.1, 0.7, -0.3, 0.2, 1.1, -0.9]).unwrap();
        let b = Tensor::from_vec(2, 2, vec![0.33, -0.12, 0.5, 0.91]).unwrap();
        let full = matmul(&a, &b);
        let single = matmul(&Tensor::row_vector(a.row(1).to_vec()), &b);
        assert_eq!(full.row(1), single.data());
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Tensor::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
