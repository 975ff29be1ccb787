use std::ops::AddAssign;

use crate::error::{param, Error, Result};
use crate::grad::DenseGradient;
use crate::rng::{derive_seed, mix64};

use super::SparseSignGradient;

/// Count sketch with `rows × width` real counters.
///
/// Row `r` hashes coordinate `j` to bucket `mix64(key_r ^ j) mod width` and to
/// sign `+1` or `-1` from the lowest bit of `mix64(sign_key_r ^ j)`, where the
/// keys are derived from the sketch seed. Two sketches with equal seeds and
/// shapes are compatible and add counter-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSketch {
    dim: usize,
    rows: usize,
    width: usize,
    seed: u64,
    index_keys: Vec<u64>,
    sign_keys: Vec<u64>,
    table: Vec<f64>,
}

impl CountSketch {
    pub fn new(dim: usize, rows: usize, width: usize, seed: u64) -> Result<Self> {
        if rows == 0 || width == 0 {
            return Err(param("sketch", "rows and width must be >= 1"));
        }
        let index_keys = (0..rows as u64).map(|r| derive_seed(seed, &[r, 0])).collect();
        let sign_keys = (0..rows as u64).map(|r| derive_seed(seed, &[r, 1])).collect();
        Ok(Self {
            dim,
            rows,
            width,
            seed,
            index_keys,
            sign_keys,
            table: vec![0.0; rows * width],
        })
    }

    /// An empty sketch with the same shape and hashes.
    pub fn empty_like(&self) -> Self {
        Self { table: vec![0.0; self.table.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    fn bucket(&self, row: usize, j: usize) -> usize {
        (mix64(self.index_keys[row] ^ j as u64) % self.width as u64) as usize
    }

    #[inline]
    fn sign(&self, row: usize, j: usize) -> f64 {
        if mix64(self.sign_keys[row] ^ j as u64) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn add_entry(&mut self, j: usize, v: f64) {
        for row in 0..self.rows {
            let b = self.bucket(row, j);
            let s = self.sign(row, j);
            self.table[row * self.width + b] += s * v;
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: d });
        }
        Ok(())
    }

    /// Adds a dense vector; zero coordinates are skipped.
    pub fn add_dense(&mut self, g: &DenseGradient) -> Result<()> {
        self.check_dim(g.dim())?;
        for (j, &v) in g.values().iter().enumerate() {
            if v != 0.0 {
                self.add_entry(j, v);
            }
        }
        Ok(())
    }

    /// Adds a sparse sign vote vector.
    pub fn add_sparse(&mut self, g: &SparseSignGradient) -> Result<()> {
        self.check_dim(g.dim())?;
        for &(j, s) in g.entries() {
            self.add_entry(j, f64::from(s));
        }
        Ok(())
    }

    /// Adds another compatible sketch counter-wise.
    pub fn merge(&mut self, other: &CountSketch) -> Result<()> {
        if other.seed != self.seed
            || other.rows != self.rows
            || other.width != self.width
            || other.dim != self.dim
        {
            return Err(param("sketch", "cannot merge sketches with different shape or seed"));
        }
        for (a, b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
        Ok(())
    }

    /// Median-of-rows estimate of every coordinate.
    pub fn unsketch(&self) -> DenseGradient {
        let mut est = vec![0.0; self.dim];
        let mut row_vals = vec![0.0; self.rows];
        for (j, e) in est.iter_mut().enumerate() {
            for (row, slot) in row_vals.iter_mut().enumerate() {
                *slot = self.sign(row, j) * self.table[row * self.width + self.bucket(row, j)];
            }
            *e = median(&mut row_vals);
        }
        DenseGradient::from_finite(est)
    }
}

impl AddAssign<&CountSketch> for CountSketch {
    fn add_assign(&mut self, rhs: &CountSketch) {
        self.merge(rhs).expect("incompatible sketches");
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
