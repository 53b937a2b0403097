//! Sparse data vectors and small dense-vector helpers.
//!
//! Iterates and mechanism outputs are plain `Vec<f64>`; noise densifies
//! everything, so only data points and per-example gradients are sparse.

use crate::error::{invalid, Error, Result};

/// `(l0, l1, l2, linf)` norms of a vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Norms {
    pub l0: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl Norms {
    pub fn of<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let mut n = Norms::default();
        let mut sq = 0.0;
        for &v in values {
            if v != 0.0 {
                n.l0 += 1;
            }
            let a = v.abs();
            n.l1 += a;
            sq += v * v;
            n.linf = n.linf.max(a);
        }
        n.l2 = sq.sqrt();
        n
    }
}

/// Norms of a dense vector.
pub fn norms(v: &[f64]) -> Norms {
    Norms::of(v)
}

/// An element of R^d stored as strictly increasing `(index, nonzero value)` pairs,
/// with its norms cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
    norms: Norms,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs in any order. Zero values are
    /// dropped; duplicate or out-of-range indices are rejected.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(invalid("entries", format!("duplicate index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(invalid("entries", format!("index {i} out of range for dim {dim}")));
            }
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("sparse vector entries"));
        }
        let (indices, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let norms = Norms::of(&values);
        Ok(Self { dim, indices, values, norms })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, indices: Vec::new(), values: Vec::new(), norms: Norms::default() }
    }

    pub fn from_dense(v: &[f64]) -> Result<Self> {
        let entries = v.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect();
        Self::new(v.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norms(&self) -> Norms {
        self.norms
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_to(&mut out, 1.0);
        out
    }

    /// `<self, x>` for a dense `x` of the same dimension.
    pub fn dot(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    /// `out += scale * self`.
    pub fn add_to(&self, out: &mut [f64], scale: f64) {
        debug_assert_eq!(out.len(), self.dim);
        for (i, v) in self.iter() {
            out[i] += scale * v;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 0.0 {
            return Self::zeros(self.dim);
        }
        let values: Vec<f64> = self.values.iter().map(|v| v * factor).collect();
        let norms = Norms::of(&values);
        Self { dim: self.dim, indices: self.indices.clone(), values, norms }
    }

    /// Restriction to the given indices with new values, used by losses whose
    /// gradient shares the support of the datum.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.indices.len() {
            return Err(Error::DimensionMismatch { expected: self.indices.len(), actual: values.len() });
        }
        Self::new(self.dim, self.indices.iter().copied().zip(values).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
