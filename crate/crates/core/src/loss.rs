//! Per-example losses with sparse gradients.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::vector::SparseVector;

/// Problem constants a loss declares about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    /// Lipschitz constant: bound on `||grad f(x, z)||_2` over the feasible set.
    pub lipschitz: f64,
    /// Smoothness of `f(., z)`.
    pub smoothness: Option<f64>,
    /// Range: `sup f - inf f` over the feasible set.
    pub range: Option<f64>,
    /// Initial suboptimality `F(x0) - inf F`.
    pub gap: Option<f64>,
    /// Distance bound `||x0 - x*||_2`.
    pub diameter: Option<f64>,
    /// Gradient sparsity.
    pub sparsity: usize,
    pub dim: usize,
}

impl LossConstants {
    pub fn smoothness(&self) -> Result<f64> {
        self.smoothness.ok_or(Error::MissingConstant("H"))
    }

    pub fn range(&self) -> Result<f64> {
        self.range.ok_or(Error::MissingConstant("B"))
    }

    pub fn gap(&self) -> Result<f64> {
        self.gap.ok_or(Error::MissingConstant("Gamma"))
    }

    pub fn diameter(&self) -> Result<f64> {
        self.diameter.ok_or(Error::MissingConstant("D"))
    }
}

pub trait LossModel: Send + Sync {
    fn value(&self, x: &[f64], z: &SparseVector) -> f64;

    /// Gradient in `x`; its support is contained in the support of `z`.
    fn gradient(&self, x: &[f64], z: &SparseVector) -> SparseVector;

    fn constants(&self) -> &LossConstants;

    fn is_convex(&self) -> bool;
}

/// `F_S(x) = (1/n) sum_i f(x, z_i)`.
pub fn empirical_risk(loss: &dyn LossModel, data: &Dataset, x: &[f64]) -> f64 {
    let n = data.len().max(1) as f64;
    data.points().iter().map(|z| loss.value(x, z)).sum::<f64>() / n
}

/// Mean gradient over the points selected by `idx` (zeros for an empty selection).
pub fn batch_gradient(
    loss: &dyn LossModel,
    data: &Dataset,
    x: &[f64],
    idx: impl IntoIterator<Item = usize>,
) -> Vec<f64> {
    let mut acc = vec![0.0; x.len()];
    let mut count = 0usize;
    for i in idx {
        loss.gradient(x, data.point(i)).add_to(&mut acc, 1.0);
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    acc
}

/// `grad F_S(x)`.
pub fn full_gradient(loss: &dyn LossModel, data: &Dataset, x: &[f64]) -> Vec<f64> {
    batch_gradient(loss, data, x, 0..data.len())
}

/// `f(x, z) = <x, z>`. The gradient is the datum itself.
#[derive(Debug, Clone)]
pub struct LinearLoss {
    constants: LossConstants,
}

impl LinearLoss {
    /// `point_norm` bounds `||z||_2`; `radius` bounds `||x||_2` on the feasible set.
    pub fn new(dim: usize, sparsity: usize, point_norm: f64, radius: f64) -> Self {
        Self {
            constants: LossConstants {
                lipschitz: point_norm,
                smoothness: Some(0.0),
                range: Some(2.0 * radius * point_norm),
                gap: Some(2.0 * radius * point_norm),
                diameter: Some(2.0 * radius),
                sparsity,
                dim,
            },
        }
    }
}

impl LossModel for LinearLoss {
    fn value(&self, x: &[f64], z: &SparseVector) -> f64 {
        z.dot(x)
    }

    fn gradient(&self, _x: &[f64], z: &SparseVector) -> SparseVector {
        z.clone()
    }

    fn constants(&self) -> &LossConstants {
        &self.constants
    }

    fn is_convex(&self) -> bool {
        true
    }
}

/// `f(x, z) = 1/2 (<x, z> - y_z)^2` with noiseless labels `y_z = <target, z>`.
#[derive(Debug, Clone)]
pub struct SparseLeastSquares {
    target: Vec<f64>,
    constants: LossConstants,
}

impl SparseLeastSquares {
    /// `radius` bounds `||x||_2` and `||target||_2`; `point_norm` bounds `||z||_2`.
    pub fn new(target: Vec<f64>, sparsity: usize, point_norm: f64, radius: f64) -> Self {
        let dim = target.len();
        let spread = 2.0 * radius * point_norm;
        Self {
            target,
            constants: LossConstants {
                lipschitz: spread * point_norm,
                smoothness: Some(point_norm * point_norm),
                range: Some(0.5 * spread * spread),
                gap: Some(0.5 * spread * spread),
                diameter: Some(2.0 * radius),
                sparsity,
                dim,
            },
        }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn label(&self, z: &SparseVector) -> f64 {
        z.dot(&self.target)
    }
}

impl LossModel for SparseLeastSquares {
    fn value(&self, x: &[f64], z: &SparseVector) -> f64 {
        let r = z.dot(x) - self.label(z);
        0.5 * r * r
    }

    fn gradient(&self, x: &[f64], z: &SparseVector) -> SparseVector {
        z.scaled(z.dot(x) - self.label(z))
    }

    fn constants(&self) -> &LossConstants {
        &self.constants
    }

    fn is_convex(&self) -> bool {
        true
    }
}

/// Embedding-table style loss touching only the coordinates in the support of
/// `z`: `f(x, z) = 1/2 sum_{j in supp z} (x_j - z_j)^2`.
#[derive(Debug, Clone)]
pub struct EmbeddingToy {
    constants: LossConstants,
}

impl EmbeddingToy {
    pub fn new(dim: usize, sparsity: usize, point_norm: f64, radius: f64) -> Self {
        let l = radius + point_norm;
        Self {
            constants: LossConstants {
                lipschitz: l,
                smoothness: Some(1.0),
                range: Some(0.5 * l * l),
                gap: Some(0.5 * l * l),
                diameter: Some(2.0 * radius),
                sparsity,
                dim,
            },
        }
    }
}

impl LossModel for EmbeddingToy {
    fn value(&self, x: &[f64], z: &SparseVector) -> f64 {
        z.iter().map(|(j, v)| 0.5 * (x[j] - v) * (x[j] - v)).sum()
    }

    fn gradient(&self, x: &[f64], z: &SparseVector) -> SparseVector {
        let entries = z.iter().map(|(j, v)| (j, x[j] - v)).collect();
        SparseVector::new(z.dim(), entries).expect("support of a valid sparse vector")
    }

    fn constants(&self) -> &LossConstants {
        &self.constants
    }

    fn is_convex(&self) -> bool {
        true
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Maximum of `|sigma''|`, attained at `u = ln(2 -+ sqrt 3)`: `1 / (6 sqrt 3)`.
pub const SIGMOID_CURVATURE: f64 = 0.096_225_044_864_937_63;

/// Smooth nonconvex sigmoid loss `f(x, z) = sigma(-y_z <x, z>)` with labels
/// `y_z = sign <w, z>` from a reference direction `w` (`+1` on ties).
#[derive(Debug, Clone)]
pub struct SigmoidLoss {
    direction: Vec<f64>,
    constants: LossConstants,
}

impl SigmoidLoss {
    pub fn new(direction: Vec<f64>, sparsity: usize, point_norm: f64) -> Self {
        let dim = direction.len();
        Self {
            direction,
            constants: LossConstants {
                lipschitz: 0.25 * point_norm,
                smoothness: Some(SIGMOID_CURVATURE * point_norm * point_norm),
                range: Some(1.0),
                gap: Some(1.0),
                diameter: None,
                sparsity,
                dim,
            },
        }
    }

    pub fn label(&self, z: &SparseVector) -> f64 {
        if z.dot(&self.direction) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl LossModel for SigmoidLoss {
    fn value(&self, x: &[f64], z: &SparseVector) -> f64 {
        sigmoid(-self.label(z) * z.dot(x))
    }

    fn gradient(&self, x: &[f64], z: &SparseVector) -> SparseVector {
        let y = self.label(z);
        let s = sigmoid(-y * z.dot(x));
        z.scaled(-y * s * (1.0 - s))
    }

    fn constants(&self) -> &LossConstants {
        &self.constants
    }

    fn is_convex(&self) -> bool {
        false
    }
}
