use crate::{Error, Result};

/// Stores standardized training rows; prediction is a majority vote of the
/// `k` nearest by Euclidean distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Knn {
    k: usize,
    dim: usize,
    rows: Vec<f64>,
    labels: Vec<u8>,
}

impl Knn {
    pub fn fit(rows: Vec<f64>, dim: usize, labels: Vec<u8>, k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("k must be a positive odd number, got {k}")));
        }
        if k > labels.len() {
            return Err(Error::InvalidArgument(format!("k={k} exceeds {} training rows", labels.len())));
        }
        Ok(Knn { k, dim, rows, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances keep the lower training index first.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist[..self.k].iter().map(|&(_, i)| i).collect()
    }

    pub fn predict_row(&self, query: &[f64]) -> u8 {
        let ones = self.neighbors(query).iter().filter(|&&i| self.labels[i] == 1).count();
        u8::from(2 * ones > self.k)
    }
}
