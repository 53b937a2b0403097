//! Synthetic problems and benchmark datasets.

use rand::Rng;
use spdp_core::loss::{empirical_risk, full_gradient, EmbeddingToy, LinearLoss, SigmoidLoss, SparseLeastSquares};
use spdp_core::noise::gaussian_vector;
use spdp_core::sgd::solve_reference;
use spdp_core::vector::{dist2, norm2};
use spdp_core::{Dataset, DatasetBounds, FeasibleSet, LossModel, SparseVector, StreamRng};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Linear,
    SparseLeastSquares,
    EmbeddingToy,
    NonconvexSmooth,
}

impl std::str::FromStr for ProblemKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "sparse-least-squares" | "sls" => Ok(Self::SparseLeastSquares),
            "embedding-toy" => Ok(Self::EmbeddingToy),
            "nonconvex-smooth" => Ok(Self::NonconvexSmooth),
            _ => Err(HarnessError::Value { key: "problem".into(), reason: format!("unknown kind `{s}`") }),
        }
    }
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::SparseLeastSquares => "sparse-least-squares",
            Self::EmbeddingToy => "embedding-toy",
            Self::NonconvexSmooth => "nonconvex-smooth",
        }
    }
}

/// How supports are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Popularity {
    Uniform,
    /// Coordinate `j` drawn with weight `1/(j+1)`.
    Zipf,
    /// Supports inside the first `k` coordinates.
    Hot(usize),
}

impl std::str::FromStr for Popularity {
    type Err = HarnessError;

    /// `uniform`, `zipf` or `hot:K`.
    fn from_str(s: &str) -> Result<Self> {
        let err =
            || HarnessError::Value { key: "points.popularity".into(), reason: format!("unknown popularity `{s}`") };
        match s {
            "uniform" => Ok(Self::Uniform),
            "zipf" => Ok(Self::Zipf),
            _ => {
                let k = s.strip_prefix("hot:").ok_or_else(err)?;
                k.parse::<usize>().ok().filter(|k| *k > 0).map(Self::Hot).ok_or_else(err)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signs {
    Random,
    Positive,
}

impl std::str::FromStr for Signs {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "positive" => Ok(Self::Positive),
            _ => Err(HarnessError::Value { key: "points.signs".into(), reason: format!("unknown signs `{s}`") }),
        }
    }
}

/// How the data points of a problem are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub popularity: Popularity,
    pub signs: Signs,
}

impl PointSpec {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Linear => Self { popularity: Popularity::Uniform, signs: Signs::Random },
            ProblemKind::EmbeddingToy => Self { popularity: Popularity::Zipf, signs: Signs::Positive },
            ProblemKind::SparseLeastSquares | ProblemKind::NonconvexSmooth => {
                Self { popularity: Popularity::Zipf, signs: Signs::Random }
            }
        }
    }
}

/// `n` points with exactly `s` nonzeros of magnitude `1/sqrt(s)`.
pub fn sparse_unit_points(
    n: usize,
    d: usize,
    s: usize,
    pop: Popularity,
    signs: Signs,
    rng: &mut StreamRng,
) -> Result<Dataset> {
    if s == 0 || s > d {
        return Err(HarnessError::Value { key: "s".into(), reason: format!("need 1 <= s <= d, got {s}") });
    }
    let v = 1.0 / (s as f64).sqrt();
    let zipf_cdf: Vec<f64> = match pop {
        Popularity::Zipf => {
            let mut acc = 0.0;
            let mut c: Vec<f64> = (0..d)
                .map(|j| {
                    acc += 1.0 / (j + 1) as f64;
                    acc
                })
                .collect();
            c.iter_mut().for_each(|x| *x /= acc);
            c
        }
        _ => Vec::new(),
    };
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let support: Vec<usize> = match pop {
            Popularity::Uniform => rand::seq::index::sample(rng, d, s).into_vec(),
            Popularity::Hot(k) => {
                let k = k.clamp(s, d);
                rand::seq::index::sample(rng, k, s).into_vec()
            }
            Popularity::Zipf => {
                let mut sup: Vec<usize> = Vec::with_capacity(s);
                while sup.len() < s {
                    let u: f64 = rng.random();
                    let j = zipf_cdf.partition_point(|&c| c < u).min(d - 1);
                    if !sup.contains(&j) {
                        sup.push(j);
                    }
                }
                sup
            }
        };
        let entries = support
            .into_iter()
            .map(|j| {
                let sign = match signs {
                    Signs::Positive => 1.0,
                    Signs::Random => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                (j, sign * v)
            })
            .collect();
        pts.push(SparseVector::new(d, entries)?);
    }
    Ok(Dataset::new(pts, DatasetBounds { dim: d, sparsity: s, norm_bound: 1.0 })?)
}

pub struct Problem {
    pub kind: ProblemKind,
    pub data: Dataset,
    pub loss: Box<dyn LossModel>,
    pub set: FeasibleSet,
    /// Minimizer of `F_S` over `set` (convex kinds).
    pub x_star: Option<Vec<f64>>,
    pub f_star: Option<f64>,
    /// Gradient-mapping norm at `x_star`.
    pub certificate: Option<f64>,
}

impl Problem {
    pub fn risk(&self, x: &[f64]) -> f64 {
        empirical_risk(self.loss.as_ref(), &self.data, x)
    }

    pub fn excess_risk(&self, x: &[f64]) -> Option<f64> {
        self.f_star.map(|f| self.risk(x) - f)
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        norm2(&full_gradient(self.loss.as_ref(), &self.data, x))
    }
}

/// Radius of the feasible ball for the convex kinds.
pub const RADIUS: f64 = 1.0;
const SOLVER_TOL: f64 = 1e-10;
const SOLVER_MAX_ITER: usize = 200_000;

/// Builds a problem of the given kind on `n` unit-norm `s`-sparse points.
///
/// * `linear`: uniform supports, random signs; `X` the unit ball.
/// * `sparse-least-squares`: Zipf supports; labels from a planted `x` of norm
///   1/2 on the 16 most popular coordinates, so `x*(S) = x` and `F* = 0`.
/// * `embedding-toy`: Zipf supports with positive entries; `X` the unit ball.
/// * `nonconvex-smooth`: sigmoid loss with labels from a random direction,
///   unconstrained.
pub fn make_problem(kind: ProblemKind, d: usize, s: usize, n: usize, rng: &mut StreamRng) -> Result<Problem> {
    make_problem_with(kind, PointSpec::default_for(kind), d, s, n, rng)
}

pub fn make_problem_with(
    kind: ProblemKind,
    pts: PointSpec,
    d: usize,
    s: usize,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Problem> {
    let ball = FeasibleSet::l2_ball(RADIUS)?;
    let solved = |data: Dataset, loss: Box<dyn LossModel>, set: FeasibleSet| -> Result<Problem> {
        let sol = solve_reference(loss.as_ref(), &data, &set, 0.0, SOLVER_TOL, SOLVER_MAX_ITER)?;
        Ok(Problem {
            kind,
            data,
            loss,
            set,
            f_star: Some(sol.value),
            certificate: Some(sol.residual),
            x_star: Some(sol.x),
        })
    };
    match kind {
        ProblemKind::Linear => {
            let data = sparse_unit_points(n, d, s, pts.popularity, pts.signs, rng)?;
            solved(data, Box::new(LinearLoss::new(d, s, 1.0, RADIUS)), ball)
        }
        ProblemKind::EmbeddingToy => {
            let data = sparse_unit_points(n, d, s, pts.popularity, pts.signs, rng)?;
            solved(data, Box::new(EmbeddingToy::new(d, s, 1.0, RADIUS)), ball)
        }
        ProblemKind::SparseLeastSquares => {
            let data = sparse_unit_points(n, d, s, pts.popularity, pts.signs, rng)?;
            let planted = planted_vector(d, 16, 0.5 * RADIUS, rng);
            let loss = SparseLeastSquares::new(planted.clone(), s, 1.0, RADIUS);
            let cert = norm2(&full_gradient(&loss, &data, &planted));
            Ok(Problem {
                kind,
                f_star: Some(empirical_risk(&loss, &data, &planted)),
                data,
                loss: Box::new(loss),
                set: ball,
                x_star: Some(planted),
                certificate: Some(cert),
            })
        }
        ProblemKind::NonconvexSmooth => {
            let data = sparse_unit_points(n, d, s, pts.popularity, pts.signs, rng)?;
            let w = planted_vector(d, d, 1.0, rng);
            Ok(Problem {
                kind,
                data,
                loss: Box::new(SigmoidLoss::new(w, s, 1.0)),
                set: FeasibleSet::Unconstrained,
                x_star: None,
                f_star: None,
                certificate: None,
            })
        }
    }
}

/// Uniformly random direction on the first `k` coordinates, scaled to `norm`.
fn planted_vector(d: usize, k: usize, norm: f64, rng: &mut StreamRng) -> Vec<f64> {
    let k = k.min(d);
    let mut v = gaussian_vector(1.0, k, rng).expect("unit sigma is valid");
    let m = norm2(&v);
    v.iter_mut().for_each(|x| *x *= norm / m);
    v.resize(d, 0.0);
    v
}

/// Largest ratios observed when probing the declared constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsReport {
    /// `max ||grad f(x, z)|| / L`.
    pub lipschitz_ratio: f64,
    /// `max ||grad f(x, z) - grad f(y, z)|| / (H ||x - y||)`.
    pub smoothness_ratio: f64,
    /// `max |f(x, z) - f(y, z)| / B`.
    pub range_ratio: f64,
    /// Max gradient support size over `s`.
    pub sparsity_ratio: f64,
}

impl ConstantsReport {
    /// All ratios within `1 + slack`.
    pub fn consistent(&self, slack: f64) -> bool {
        [self.lipschitz_ratio, self.smoothness_ratio, self.range_ratio, self.sparsity_ratio]
            .iter()
            .all(|r| *r <= 1.0 + slack)
    }
}

/// Probes the declared constants at random feasible points (the unit ball
/// for unconstrained problems).
pub fn verify_constants(p: &Problem, samples: usize, rng: &mut StreamRng) -> Result<ConstantsReport> {
    let c = p.loss.constants();
    let d = p.data.dim();
    let radius = match p.set {
        FeasibleSet::L2Ball { radius } => radius,
        _ => RADIUS,
    };
    let random_point = |rng: &mut StreamRng| {
        let mut v = gaussian_vector(1.0, d, rng).expect("unit sigma is valid");
        // Mix interior and boundary points.
        let r = radius * rng.random::<f64>().sqrt().max(if rng.random::<bool>() { 1.0 } else { 0.0 });
        let m = norm2(&v);
        v.iter_mut().for_each(|x| *x *= r / m);
        v
    };
    let mut rep =
        ConstantsReport { lipschitz_ratio: 0.0, smoothness_ratio: 0.0, range_ratio: 0.0, sparsity_ratio: 0.0 };
    for _ in 0..samples {
        let x = random_point(rng);
        let y = random_point(rng);
        let z = p.data.point(rng.random_range(0..p.data.len()));
        let gx = p.loss.gradient(&x, z);
        let gy = p.loss.gradient(&y, z);
        rep.lipschitz_ratio = rep.lipschitz_ratio.max(gx.norms().l2 / c.lipschitz);
        rep.sparsity_ratio = rep.sparsity_ratio.max(gx.nnz() as f64 / c.sparsity as f64);
        if let Some(h) = c.smoothness {
            let diff = dist2(&gx.to_dense(), &gy.to_dense());
            let gap = dist2(&x, &y);
            let ratio = if h > 0.0 {
                diff / (h * gap)
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            rep.smoothness_ratio = rep.smoothness_ratio.max(ratio);
        }
        if let Some(b) = c.range {
            let spread = (p.loss.value(&x, z) - p.loss.value(&y, z)).abs();
            rep.range_ratio = rep.range_ratio.max(spread / b);
        }
    }
    Ok(rep)
}
