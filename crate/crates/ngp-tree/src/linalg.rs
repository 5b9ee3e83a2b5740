//! Dense linear-algebra primitives: directions, projections, the first
//! principal component, PCA whitening, and Householder reflections.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::matrix::FeatureMatrix;
use crate::{Error, Result};

/// Threshold below which a component is treated as zero when fixing the sign
/// of a [`Direction`].
const SIGN_EPS: f64 = 1e-12;

/// A unit-norm direction in feature space with a deterministic sign: the
/// first component whose magnitude exceeds `1e-12` is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    components: Vec<f64>,
}

impl Direction {
    /// Normalizes `components` to unit Euclidean norm and fixes the sign.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < SIGN_EPS {
            return Err(Error::DegenerateInput(
                "direction has (near-)zero norm".into(),
            ));
        }
        let mut components: Vec<f64> = components.iter().map(|c| c / norm).collect();
        if let Some(first) = components.iter().find(|c| c.abs() > SIGN_EPS) {
            if *first < 0.0 {
                for c in &mut components {
                    *c = -*c;
                }
            }
        }
        Ok(Self { components })
    }

    /// Unit vector along coordinate axis `axis` in `dim` dimensions.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut components = vec![0.0; dim];
        components[axis] = 1.0;
        Self { components }
    }

    /// Wraps components that are already unit-norm and sign-fixed, e.g. read
    /// back verbatim from an index file.
    pub(crate) fn from_normalized(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Dot product with a raw vector of the same dimension.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.components.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Projects every row of `m` onto `a`, in row order.
pub fn project(m: &FeatureMatrix, a: &Direction) -> Result<Vec<f64>> {
    if a.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: a.dim(),
        });
    }
    Ok(m.rows().map(|row| a.dot(row)).collect())
}

/// Sample covariance (`1/(n-1)` convention) of an already centered matrix,
/// returned row-major as `d*d` values.
fn sample_covariance(m: &FeatureMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut cov = vec![0.0; d * d];
    for row in m.rows() {
        for i in 0..d {
            let xi = row[i];
            for j in i..d {
                cov[i * d + j] += xi * row[j];
            }
        }
    }
    let denom = (m.nrows() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

/// First principal component of a centered matrix, by power iteration on the
/// sample covariance. Converges when `|<w_t, w_{t-1}>| > 1 - tol`; if the cap
/// is reached the current iterate is returned.
pub fn principal_component(m: &FeatureMatrix, tol: f64, max_iter: usize) -> Result<Direction> {
    if m.nrows() < 2 {
        return Err(Error::DegenerateInput(
            "principal component needs at least 2 rows".into(),
        ));
    }
    let d = m.dim();
    let cov = sample_covariance(m);

    // Start from the largest column of the covariance; a zero matrix means
    // every row is identical.
    let mut best_col = 0;
    let mut best_norm = 0.0;
    for j in 0..d {
        let norm: f64 = (0..d).map(|i| cov[i * d + j] * cov[i * d + j]).sum();
        if norm > best_norm {
            best_norm = norm;
            best_col = j;
        }
    }
    if best_norm <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut w: Vec<f64> = (0..d).map(|i| cov[i * d + best_col]).collect();
    normalize(&mut w)?;

    let mut next = vec![0.0; d];
    for _ in 0..max_iter {
        for i in 0..d {
            next[i] = (0..d).map(|j| cov[i * d + j] * w[j]).sum();
        }
        if normalize(&mut next).is_err() {
            // The iterate landed in the null space; the start column already
            // ruled out a zero matrix, so fall back to the current vector.
            break;
        }
        let dot: f64 = next.iter().zip(&w).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut w, &mut next);
        if dot.abs() > 1.0 - tol {
            break;
        }
    }
    Direction::new(w)
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < SIGN_EPS {
        return Err(Error::ZeroVariance);
    }
    for c in v {
        *c /= norm;
    }
    Ok(())
}

/// PCA whitening transform restricted to components whose eigenvalue exceeds
/// `eps` times the largest eigenvalue.
///
/// Whitened data satisfy `z_j = (v_j . x) / sqrt(lambda_j)`; the struct also
/// translates directions between the two coordinate systems.
#[derive(Debug, Clone)]
pub struct Whitening {
    dim: usize,
    /// Retained eigenvectors, each of length `dim`, eigenvalue-descending.
    basis: Vec<Vec<f64>>,
    /// `sqrt(lambda_j)` for each retained component.
    scale: Vec<f64>,
}

impl Whitening {
    /// Number of retained components (the whitened dimensionality).
    pub fn retained(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Forward data map: original-space point to whitened coordinates.
    pub fn whiten_point(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .zip(&self.scale)
            .map(|(v, s)| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / s)
            .collect()
    }

    /// Maps an original-space direction into whitened coordinates. A
    /// projection along the result orders points identically to one along
    /// `a`, up to positive scale.
    pub fn to_whitened(&self, a: &Direction) -> Result<Direction> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.dim(),
            });
        }
        let w: Vec<f64> = self
            .basis
            .iter()
            .zip(&self.scale)
            .map(|(v, s)| a.dot(v) * s)
            .collect();
        Direction::new(w).map_err(|_| {
            Error::DegenerateInput("direction lies outside the retained subspace".into())
        })
    }

    /// Maps a whitened-space direction back to original coordinates and
    /// renormalizes.
    pub fn to_original(&self, w: &[f64]) -> Result<Direction> {
        if w.len() != self.retained() {
            return Err(Error::DimensionMismatch {
                expected: self.retained(),
                got: w.len(),
            });
        }
        let mut a = vec![0.0; self.dim];
        for ((v, s), wj) in self.basis.iter().zip(&self.scale).zip(w) {
            let coeff = wj / s;
            for (ai, vi) in a.iter_mut().zip(v) {
                *ai += coeff * vi;
            }
        }
        Direction::new(a).map_err(|_| {
            Error::DegenerateInput("whitened direction maps to the zero vector".into())
        })
    }
}

/// Centers are assumed removed already; computes the PCA whitening of `m`,
/// returning the whitened rows (ids preserved) and the transform.
pub fn whiten(m: &FeatureMatrix, eps: f64) -> Result<(FeatureMatrix, Whitening)> {
    if m.nrows() < 2 {
        return Err(Error::ZeroVariance);
    }
    let d = m.dim();
    let cov = DMatrix::from_row_slice(d, d, &sample_covariance(m));
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let lambda_max = eigen.eigenvalues[order[0]];
    if !(lambda_max > 0.0) {
        return Err(Error::ZeroVariance);
    }

    let mut basis = Vec::new();
    let mut scale = Vec::new();
    for &j in &order {
        let lambda = eigen.eigenvalues[j];
        if lambda <= eps * lambda_max {
            break;
        }
        let mut v: Vec<f64> = eigen.eigenvectors.column(j).iter().copied().collect();
        if let Some(first) = v.iter().find(|c| c.abs() > SIGN_EPS) {
            if *first < 0.0 {
                for c in &mut v {
                    *c = -*c;
                }
            }
        }
        basis.push(v);
        scale.push(lambda.sqrt());
    }
    let w = Whitening { dim: d, basis, scale };

    let values: Vec<f64> = m.rows().flat_map(|row| w.whiten_point(row)).collect();
    let white = FeatureMatrix::new(w.retained(), values, m.ids().to_vec())?;
    Ok((white, w))
}

/// An isometry of feature space: the identity or a Householder reflection
/// `x -> x - 2 (v.x) v` for a unit vector `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reflection {
    Identity,
    Householder { v: Vec<f64> },
}

impl Reflection {
    /// Applies the reflection to one point.
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// Applies the reflection writing into `out` (same length as `x`).
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Reflection::Identity => {
                out.copy_from_slice(x);
                Ok(())
            }
            Reflection::Householder { v } => {
                if v.len() != x.len() || out.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: v.len(),
                        got: x.len(),
                    });
                }
                let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
                    *o = xi - 2.0 * dot * vi;
                }
                Ok(())
            }
        }
    }

    /// Applies the reflection to every row; ids are preserved.
    pub fn apply_matrix(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            Reflection::Identity => Ok(m.clone()),
            Reflection::Householder { v } => {
                if v.len() != m.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: v.len(),
                        got: m.dim(),
                    });
                }
                let mut values = Vec::with_capacity(m.nrows() * m.dim());
                let mut out = vec![0.0; m.dim()];
                for row in m.rows() {
                    self.apply_into(row, &mut out)?;
                    values.extend_from_slice(&out);
                }
                FeatureMatrix::new(m.dim(), values, m.ids().to_vec())
            }
        }
    }
}

/// Reflection that maps `a` onto the first coordinate axis `e_1`. Returns the
/// identity when `a` is already within `1e-12` of `e_1`.
pub fn householder_from_direction(a: &Direction) -> Reflection {
    let mut v = a.components().to_vec();
    v[0] -= 1.0;
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Reflection::Identity;
    }
    for c in &mut v {
        *c /= norm;
    }
    Reflection::Householder { v }
}
