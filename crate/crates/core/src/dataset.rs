//! Datasets of sparse points and their text format.
//!
//! Text format: a header line `d s L`, then one point per line as
//! space-separated `index:value` pairs with 0-based indices. An empty line is
//! the zero vector. Lines starting with `#` are comments.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::vector::SparseVector;

/// Declared bounds on every point: dimension, maximum sparsity, maximum l2 norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetBounds {
    pub dim: usize,
    pub sparsity: usize,
    pub norm_bound: f64,
}

/// Default relative tolerance for norm checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Which set the points are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// `||z||_0 <= s` and `||z||_2 <= L`.
    #[default]
    Sparse,
    /// The l1 relaxation `||z||_1 <= L sqrt(s)`, with no sparsity requirement.
    L1Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension { point: usize, dim: usize },
    Sparsity { point: usize, nnz: usize },
    Norm { point: usize, norm: f64 },
    L1Norm { point: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<SparseVector>,
    bounds: DatasetBounds,
}

impl Dataset {
    /// Wraps points without checking sparsity or norm bounds; use
    /// [`Dataset::validate`] for that.
    pub fn new(points: Vec<SparseVector>, bounds: DatasetBounds) -> Result<Self> {
        if bounds.dim == 0 {
            return Err(crate::error::invalid("dim", "must be positive"));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != bounds.dim) {
            return Err(Error::DimensionMismatch { expected: bounds.dim, actual: p.dim() });
        }
        Ok(Self { points, bounds })
    }

    pub fn points(&self) -> &[SparseVector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SparseVector {
        &self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> DatasetBounds {
        self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim
    }

    /// `(1/n) sum_i z_i` as a dense vector.
    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(self.subset_mean(0..self.points.len()))
    }

    /// Mean over the points selected by `idx`; an empty selection gives zeros.
    pub fn subset_mean(&self, idx: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.bounds.dim];
        let mut count = 0usize;
        for i in idx {
            self.points[i].add_to(&mut acc, 1.0);
            count += 1;
        }
        if count > 0 {
            let inv = 1.0 / count as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        acc
    }

    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        self.validate_with(tol, ValidationMode::Sparse)
    }

    pub fn validate_with(&self, tol: f64, mode: ValidationMode) -> Vec<Violation> {
        let b = self.bounds;
        let mut out = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if p.dim() != b.dim {
                out.push(Violation::Dimension { point: i, dim: p.dim() });
                continue;
            }
            let n = p.norms();
            match mode {
                ValidationMode::Sparse => {
                    if n.l0 > b.sparsity {
                        out.push(Violation::Sparsity { point: i, nnz: n.l0 });
                    }
                    if n.l2 > b.norm_bound * (1.0 + tol) {
                        out.push(Violation::Norm { point: i, norm: n.l2 });
                    }
                }
                ValidationMode::L1Relaxed => {
                    let radius = b.norm_bound * (b.sparsity as f64).sqrt();
                    if n.l1 > radius * (1.0 + tol) {
                        out.push(Violation::L1Norm { point: i, norm: n.l1 });
                    }
                }
            }
        }
        out
    }

    /// Parses the text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "missing header".into() })?;
        let bounds = parse_header(header).map_err(|reason| Error::Parse { line: hline + 1, reason })?;
        let mut points = Vec::new();
        for (ln, line) in lines {
            let point = parse_point(line, bounds.dim).map_err(|reason| Error::Parse { line: ln + 1, reason })?;
            points.push(point);
        }
        Self::new(points, bounds)
    }

    pub fn to_text(&self) -> String {
        let b = self.bounds;
        let mut out = format!("{} {} {:?}\n", b.dim, b.sparsity, b.norm_bound);
        for p in &self.points {
            let mut first = true;
            for (i, v) in p.iter() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{i}:{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

fn parse_header(line: &str) -> std::result::Result<DatasetBounds, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(format!("header needs `d s L`, got {} fields", fields.len()));
    }
    let dim: usize = fields[0].parse().map_err(|e| format!("bad d: {e}"))?;
    let sparsity: usize = fields[1].parse().map_err(|e| format!("bad s: {e}"))?;
    let norm_bound: f64 = fields[2].parse().map_err(|e| format!("bad L: {e}"))?;
    if dim == 0 {
        return Err("d must be positive".into());
    }
    if !(norm_bound.is_finite() && norm_bound > 0.0) {
        return Err("L must be finite and positive".into());
    }
    Ok(DatasetBounds { dim, sparsity, norm_bound })
}

fn parse_point(line: &str, dim: usize) -> std::result::Result<SparseVector, String> {
    let mut entries = Vec::new();
    for tok in line.split_whitespace() {
        let (i, v) = tok.split_once(':').ok_or_else(|| format!("expected index:value, got `{tok}`"))?;
        let i: usize = i.parse().map_err(|e| format!("bad index `{i}`: {e}"))?;
        let v: f64 = v.parse().map_err(|e| format!("bad value `{v}`: {e}"))?;
        entries.push((i, v));
    }
    SparseVector::new(dim, entries).map_err(|e| e.to_string())
}
