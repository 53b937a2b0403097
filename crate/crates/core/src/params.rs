//! Privacy parameters and feasible sets.

use crate::error::{invalid, Result};
use crate::geometry;
use crate::vector::norm2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(invalid("eps", format!("must be finite and positive, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
        }
        Ok(Self { eps, delta })
    }

    pub fn pure(eps: f64) -> Result<Self> {
        Self::new(eps, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// `(eps * a, delta * b)` without revalidation; `a, b` must be in `(0, 1]`.
    pub fn split(&self, a: f64, b: f64) -> Self {
        debug_assert!(a > 0.0 && a <= 1.0 && (0.0..=1.0).contains(&b));
        Self { eps: self.eps * a, delta: self.delta * b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Unconstrained,
    L2Ball { radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    L1Ball { radius: f64 },
}

impl FeasibleSet {
    pub fn l2_ball(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self::L2Ball { radius })
    }

    pub fn l1_ball(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self::L1Ball { radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("box", "lo and hi must have equal, positive length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(invalid("box", "need finite lo <= hi componentwise"));
        }
        Ok(Self::Box { lo, hi })
    }

    /// Euclidean projection, used for SGD steps.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Unconstrained => v.to_vec(),
            Self::L2Ball { radius } => geometry::project_l2_ball(v, *radius).point,
            Self::L1Ball { radius } => match geometry::project_l1_ball(v, *radius) {
                Ok(r) => r.point,
                Err(_) => v.to_vec(),
            },
            Self::Box { lo, hi } => v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Self::Unconstrained => true,
            Self::L2Ball { radius } => norm2(x) <= radius * (1.0 + tol),
            Self::L1Ball { radius } => x.iter().map(|v| v.abs()).sum::<f64>() <= radius * (1.0 + tol),
            Self::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
        }
    }

    /// Whether zeroing any set of coordinates keeps a feasible point feasible.
    pub fn is_sparsifiable(&self) -> bool {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0),
            _ => true,
        }
    }

    /// Euclidean diameter, infinite when unbounded.
    pub fn diameter(&self) -> f64 {
        match self {
            Self::Unconstrained => f64::INFINITY,
            Self::L2Ball { radius } | Self::L1Ball { radius } => 2.0 * radius,
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt(),
        }
    }

    pub fn is_unconstrained(&self) -> bool {
        matches!(self, Self::Unconstrained)
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(invalid("radius", format!("must be finite and positive, got {radius}")))
    }
}
