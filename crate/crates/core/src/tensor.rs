//! Dense derivative tensors stored row-major over `d^order` entries.

use serde::{Deserialize, Serialize};

/// Order-`order` tensor over a `dim`-dimensional space.
///
/// Entry `(i_1, ..., i_r)` lives at flat index `sum_j i_j * dim^(r-j)`, so the
/// first index is the most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dim: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn from_vec(dim: usize, order: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim.pow(order as u32), "tensor size mismatch");
        Self { dim, order, data }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(0, 0, vec![value])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let i = self.flat(index);
        self.data[i] = value;
    }

    pub fn flat(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    /// Multi-index of a flat position.
    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.order];
        for slot in index.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
        index
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest difference between entries related by an index permutation.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for flat in 0..self.len() {
            let mut idx = self.unflat(flat);
            idx.sort_unstable();
            worst = worst.max((self.data[flat] - self.get(&idx)).abs());
        }
        worst
    }

    /// Number of times each axis appears in a multi-index.
    pub fn axis_counts(index: &[usize], dim: usize) -> Vec<usize> {
        let mut counts = vec![0; dim];
        for &i in index {
            counts[i] += 1;
        }
        counts
    }
}
