//! Zipf-distributed batch row updates.
//!
//! Each batch draws `batch_size` row indices with probability proportional
//! to (rank+1)^-factor, pairs every draw with a random row delta, and merges
//! duplicate rows by summing their deltas. The merged batch is one rank-k
//! update with k = number of distinct rows hit, so heavier skew (larger
//! factor) concentrates the draws and lowers the effective rank: factor 0 is
//! uniform, large factors degenerate to row 0 only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::fixtures::rng_from_seed;
use crate::matrix::Matrix;
use crate::scalar::{cast, Scalar};

pub struct ZipfStream {
    cdf: Vec<f64>,
    rows: usize,
    value_len: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    name: String,
}

/// Stream of rank-k batch updates against an n x n target named "A".
pub fn zipf_batch_stream(
    n: usize,
    batch_size: usize,
    zipf_factor: f64,
    seed: u64,
) -> Result<ZipfStream> {
    if n == 0 || batch_size == 0 {
        return Err(Error::config("zipf stream needs n >= 1 and batch_size >= 1"));
    }
    if !zipf_factor.is_finite() || zipf_factor < 0.0 {
        return Err(Error::config(format!(
            "zipf factor must be finite and >= 0, got {zipf_factor}"
        )));
    }
    let weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-zipf_factor)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let cdf = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    Ok(ZipfStream {
        cdf,
        rows: n,
        value_len: n,
        batch_size,
        rng: rng_from_seed(seed),
        name: "A".to_string(),
    })
}

impl ZipfStream {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Length of each row delta, for non-square targets (rows stay zipfed).
    pub fn with_value_len(mut self, len: usize) -> Self {
        self.value_len = len;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// One merged batch. Effective rank = distinct rows drawn, at most
    /// min(batch_size, n).
    pub fn next_batch<T: Scalar>(&mut self) -> RankKUpdate<T> {
        let mut merged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for _ in 0..self.batch_size {
            let r = self.rng.gen_range(0.0..1.0);
            let row = self.cdf.partition_point(|&c| c <= r).min(self.rows - 1);
            let delta: Vec<f64> = (0..self.value_len)
                .map(|_| 0.1 * self.rng.gen_range(-1.0..1.0))
                .collect();
            match merged.entry(row) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(delta);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    for (acc, d) in e.get_mut().iter_mut().zip(&delta) {
                        *acc += d;
                    }
                }
            }
        }
        let rank = merged.len();
        let rows: Vec<usize> = merged.keys().copied().collect();
        let u = Matrix::from_fn(self.rows, rank, |i, j| {
            if i == rows[j] {
                cast(1.0)
            } else {
                cast(0.0)
            }
        });
        let v = Matrix::from_fn(self.value_len, rank, |i, j| cast(merged[&rows[j]][i]));
        RankKUpdate::new(self.name.clone(), u, v).expect("batch construction is shape-safe")
    }
}
