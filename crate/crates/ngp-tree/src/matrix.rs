//! Row-major storage for feature vectors with stable row identifiers.

use std::collections::HashMap;

use crate::{Error, Result};

/// An `n x d` table of real-valued feature vectors.
///
/// Every row carries a stable `u64` identifier so that points remain
/// traceable through the arbitrary re-partitioning the index performs.
/// Values are stored row-major and are guaranteed finite.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    dim: usize,
    values: Vec<f64>,
    ids: Vec<u64>,
    by_id: HashMap<u64, usize>,
}

impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.ids == other.ids && self.values == other.values
    }
}

impl FeatureMatrix {
    /// Builds a matrix from row-major values and per-row identifiers.
    ///
    /// Rejects empty shapes, `values` whose length is not `ids.len() * dim`,
    /// non-finite entries, and duplicate identifiers.
    pub fn new(dim: usize, values: Vec<f64>, ids: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DegenerateInput("dimension must be at least 1".into()));
        }
        if ids.is_empty() {
            return Err(Error::EmptyData);
        }
        if values.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite value at row {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        let mut by_id = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if by_id.insert(id, row).is_some() {
                return Err(Error::DegenerateInput(format!("duplicate row id {id}")));
            }
        }
        Ok(Self {
            dim,
            values,
            ids,
            by_id,
        })
    }

    /// Builds a matrix from rows, assigning identifiers `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let dim = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let _ = i;
        }
        let values = rows.iter().flatten().copied().collect();
        let ids = (0..rows.len() as u64).collect();
        Self::new(dim, values, ids)
    }

    /// Internal constructor for rows already validated by an existing matrix.
    fn from_validated(dim: usize, values: Vec<f64>, ids: Vec<u64>) -> Self {
        let by_id = ids.iter().enumerate().map(|(row, &id)| (id, row)).collect();
        Self {
            dim,
            values,
            ids,
            by_id,
        }
    }

    pub fn nrows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row position of `id`, if present.
    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    /// Row slice for `id`, if present.
    pub fn row_by_id(&self, id: u64) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Componentwise mean of all rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.nrows() as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Subtracts the componentwise mean from every row. Returns the centered
    /// matrix and the mean that was removed. Identifiers are preserved.
    pub fn centered(&self) -> (Self, Vec<f64>) {
        let mean = self.mean();
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(self.dim) {
            for (v, m) in row.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        (
            Self::from_validated(self.dim, values, self.ids.clone()),
            mean,
        )
    }

    /// Mean squared Euclidean distance of the rows to their centroid.
    pub fn scatter_value(&self) -> f64 {
        let mean = self.mean();
        let mut acc = 0.0;
        for row in self.rows() {
            for (v, m) in row.iter().zip(&mean) {
                let d = v - m;
                acc += d * d;
            }
        }
        acc / self.nrows() as f64
    }

    /// New matrix containing the given row positions, in order, with their
    /// identifiers preserved.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &i in rows {
            values.extend_from_slice(self.row(i));
            ids.push(self.ids[i]);
        }
        Ok(Self::from_validated(self.dim, values, ids))
    }
}
