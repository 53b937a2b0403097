//! Private estimation of the mean of sparse vectors.
//!
//! Two mechanisms are provided:
//!
//! * [`projection_mechanism`]: Laplace (pure DP) or Gaussian (approximate DP)
//!   noise on the empirical mean followed by Euclidean projection onto the
//!   l1 ball `B1(0, L sqrt(s))`, which contains every mean of s-sparse points
//!   of norm at most `L`.
//! * [`gaussian_l1_recovery`]: privatize a random Gaussian sketch `A zbar` of
//!   the mean and decode it by basis pursuit. When the sketch would not be
//!   shorter than the vector, falls back to the plain Gaussian mechanism.

pub mod basis_pursuit;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::geometry::project_l1_ball;
use crate::noise::{gaussian_vector, laplace_vector};
use crate::params::PrivacyParams;
use crate::vector::{dist2, norm2, norm_inf};

pub use basis_pursuit::{basis_pursuit, BasisPursuitProblem, BasisPursuitSolution, BpSolver};

/// `2 L sqrt(s) / n`: l1 sensitivity of the mean of s-sparse points of norm `<= L`.
pub fn l1_sensitivity(l: f64, s: usize, n: usize) -> f64 {
    2.0 * l * (s as f64).sqrt() / n as f64
}

/// `2 L / n`: l2 sensitivity of the mean of points of norm `<= L`.
pub fn l2_sensitivity(l: f64, n: usize) -> f64 {
    2.0 * l / n as f64
}

/// Standard deviation of the Gaussian mechanism, `sqrt(2 ln(1.25/delta)) * l2_sens / eps`.
pub fn gaussian_sigma(l2_sens: f64, pp: PrivacyParams) -> f64 {
    l2_sens * (2.0 * (1.25 / pp.delta).ln()).sqrt() / pp.eps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Laplace,
    GaussianProjection,
    GaussianDirect,
    CompressedSensing,
    Exact,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Laplace => "laplace",
            Branch::GaussianProjection => "gaussian-projection",
            Branch::GaussianDirect => "gaussian-direct",
            Branch::CompressedSensing => "compressed-sensing",
            Branch::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutput {
    pub estimate: Vec<f64>,
    /// `||xi||_inf` of the noise actually added (measurement noise for the sketch).
    pub noise_linf: f64,
    pub branch: Branch,
    pub meta: BTreeMap<&'static str, f64>,
}

/// Calibrated noise, or none at all for tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Calibrated,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub noise: NoiseMode,
    /// Absolute slack for the pathwise error bound.
    pub check_slack: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { noise: NoiseMode::Calibrated, check_slack: 1e-7 }
    }
}

fn check_common(zbar: &[f64], n: usize, l: f64, s: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(invalid("L", "must be finite and positive"));
    }
    if s == 0 || s > zbar.len() {
        return Err(invalid("s", format!("need 1 <= s <= d = {}", zbar.len())));
    }
    ensure_finite(zbar, "mean")
}

pub fn projection_mechanism<R: Rng + ?Sized>(
    zbar: &[f64],
    pp: PrivacyParams,
    n: usize,
    l: f64,
    s: usize,
    rng: &mut R,
) -> Result<MechanismOutput> {
    projection_mechanism_with(zbar, pp, n, l, s, &ProjectionConfig::default(), rng)
}

pub fn projection_mechanism_with<R: Rng + ?Sized>(
    zbar: &[f64],
    pp: PrivacyParams,
    n: usize,
    l: f64,
    s: usize,
    cfg: &ProjectionConfig,
    rng: &mut R,
) -> Result<MechanismOutput> {
    check_common(zbar, n, l, s)?;
    let d = zbar.len();
    let (branch, sigma) = if pp.is_pure() {
        (Branch::Laplace, l1_sensitivity(l, s, n) / pp.eps)
    } else {
        (Branch::GaussianProjection, gaussian_sigma(l2_sensitivity(l, n), pp))
    };
    let xi = match (cfg.noise, branch) {
        (NoiseMode::Zero, _) => vec![0.0; d],
        (_, Branch::Laplace) => laplace_vector(sigma, d, rng)?,
        _ => gaussian_vector(sigma, d, rng)?,
    };
    let noisy: Vec<f64> = zbar.iter().zip(&xi).map(|(a, b)| a + b).collect();
    let radius = l * (s as f64).sqrt();
    let proj = project_l1_ball(&noisy, radius)?;
    let noise_linf = norm_inf(&xi);

    let mut meta = BTreeMap::new();
    meta.insert("sigma", sigma);
    meta.insert("radius", radius);
    // The bound needs zbar in the ball, which holds for valid data.
    let inside = zbar.iter().map(|v| v.abs()).sum::<f64>() <= radius * (1.0 + 1e-9);
    if inside {
        let err = dist2(&proj.point, zbar);
        let bound = (2.0 * l * noise_linf * (s as f64).sqrt()).sqrt();
        meta.insert("error", err);
        meta.insert("bound", bound);
        if err > bound + cfg.check_slack {
            return Err(Error::Consistency(format!("projection error {err:.6e} exceeds pathwise bound {bound:.6e}")));
        }
    } else {
        meta.insert("mean_outside_ball", 1.0);
    }
    Ok(MechanismOutput { estimate: proj.point, noise_linf, branch, meta })
}

/// Which branch of [`gaussian_l1_recovery`] to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchPolicy {
    /// Sketch unless `d < m ln^2 m`.
    #[default]
    Auto,
    ForceCompressed,
    ForceDirect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    /// Constant in `m = ceil(c_m n eps sqrt(s ln(d/s) / ln(1/delta)))`.
    pub c_m: f64,
    /// Overrides the measurement count formula.
    pub measurements: Option<usize>,
    pub branch: BranchPolicy,
    pub noise: NoiseMode,
    pub tol: f64,
    pub max_iter: usize,
    pub solver: BpSolver,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            c_m: 1.0,
            measurements: None,
            branch: BranchPolicy::Auto,
            noise: NoiseMode::Calibrated,
            tol: basis_pursuit::DEFAULT_TOL,
            max_iter: basis_pursuit::DEFAULT_MAX_ITER,
            solver: BpSolver::default(),
        }
    }
}

/// Number of Gaussian measurements for a batch of size `n`.
pub fn measurement_count(c_m: f64, n: usize, pp: PrivacyParams, s: usize, d: usize) -> usize {
    let s = s as f64;
    let m = c_m * n as f64 * pp.eps * (s * (d as f64 / s).ln() / (1.0 / pp.delta).ln()).sqrt();
    (m.ceil() as usize).max(1)
}

/// `d < m ln^2(max(m, 2))` or `m >= d`: the sketch is not worth it.
pub fn direct_branch_applies(m: usize, d: usize) -> bool {
    let lm = (m.max(2) as f64).ln();
    m >= d || (d as f64) < m as f64 * lm * lm
}

/// Measurement count below which the random sketch is not expected to be a
/// restricted isometry on `s`-sparse vectors.
pub fn rip_heuristic_floor(s: usize, d: usize) -> f64 {
    16.0 * s as f64 * (d as f64 / s as f64).ln()
}

#[allow(clippy::too_many_arguments)]
pub fn gaussian_l1_recovery<R: Rng + ?Sized>(
    zbar: &[f64],
    pp: PrivacyParams,
    n: usize,
    l: f64,
    s: usize,
    cfg: &RecoveryConfig,
    rng: &mut R,
) -> Result<MechanismOutput> {
    check_common(zbar, n, l, s)?;
    let d = zbar.len();
    if pp.delta <= 0.0 {
        return Err(invalid("delta", "the sketching mechanism needs delta > 0"));
    }
    if pp.eps > 1.0 {
        return Err(invalid("eps", format!("must be at most 1, got {}", pp.eps)));
    }
    if d < 2 * s {
        return Err(invalid("d", format!("need d >= 2s, got d = {d}, s = {s}")));
    }
    let m = cfg.measurements.unwrap_or_else(|| measurement_count(cfg.c_m, n, pp, s, d)).max(1);
    let direct = match cfg.branch {
        BranchPolicy::Auto => direct_branch_applies(m, d),
        BranchPolicy::ForceDirect => true,
        BranchPolicy::ForceCompressed => m >= d,
    };
    let mut meta = BTreeMap::new();
    meta.insert("m", m as f64);

    if direct {
        let sigma = gaussian_sigma(l2_sensitivity(l, n), pp);
        meta.insert("sigma", sigma);
        let xi = match cfg.noise {
            NoiseMode::Zero => vec![0.0; d],
            NoiseMode::Calibrated => gaussian_vector(sigma, d, rng)?,
        };
        let estimate = zbar.iter().zip(&xi).map(|(a, b)| a + b).collect();
        return Ok(MechanismOutput { estimate, noise_linf: norm_inf(&xi), branch: Branch::GaussianDirect, meta });
    }

    if (m as f64) < rip_heuristic_floor(s, d) {
        meta.insert("rip_low", 1.0);
        log::debug!("sketch with m = {m} measurements is below 16 s ln(d/s) for s = {s}, d = {d}");
    }
    // 18 L^2 ln(2.5/delta) / (n eps)^2
    let sigma = 3.0 * l * (2.0 * (2.5 / pp.delta).ln()).sqrt() / (n as f64 * pp.eps);
    meta.insert("sigma", sigma);
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();
    // Row-major draw order.
    let mut entries = Vec::with_capacity(m * d);
    for _ in 0..m * d {
        entries.push(inv_sqrt_m * rng.sample::<f64, _>(StandardNormal));
    }
    let a = DMatrix::from_row_slice(m, d, &entries);
    let xi = match cfg.noise {
        NoiseMode::Zero => vec![0.0; m],
        NoiseMode::Calibrated => gaussian_vector(sigma, m, rng)?,
    };
    let az = &a * DVector::from_column_slice(zbar);
    let b: Vec<f64> = az.iter().zip(&xi).map(|(a, b)| a + b).collect();
    let problem = BasisPursuitProblem { a, b, tol: cfg.tol, max_iter: cfg.max_iter, solver: cfg.solver };
    let sol = basis_pursuit::solve(&problem)?;
    meta.insert("bp_iterations", sol.iterations as f64);
    let mut estimate = sol.x;
    if norm2(&estimate) > 2.0 * l {
        meta.insert("clamped", 1.0);
        estimate.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(MechanismOutput { estimate, noise_linf: norm_inf(&xi), branch: Branch::CompressedSensing, meta })
}

/// The mean estimator used inside the bias-reduced gradient oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanMechanism {
    Projection(ProjectionConfig),
    CompressedSensing(RecoveryConfig),
    /// Returns the mean unchanged. Not private; for tests.
    Exact,
}

impl Default for MeanMechanism {
    fn default() -> Self {
        Self::CompressedSensing(RecoveryConfig::default())
    }
}

impl MeanMechanism {
    pub fn apply<R: Rng + ?Sized>(
        &self,
        zbar: &[f64],
        pp: PrivacyParams,
        n: usize,
        l: f64,
        s: usize,
        rng: &mut R,
    ) -> Result<MechanismOutput> {
        match self {
            Self::Projection(cfg) => projection_mechanism_with(zbar, pp, n, l, s, cfg, rng),
            Self::CompressedSensing(cfg) => gaussian_l1_recovery(zbar, pp, n, l, s, cfg, rng),
            Self::Exact => Ok(MechanismOutput {
                estimate: zbar.to_vec(),
                noise_linf: 0.0,
                branch: Branch::Exact,
                meta: BTreeMap::new(),
            }),
        }
    }

    /// Whether the mechanism adds calibrated noise.
    pub fn is_private(&self) -> bool {
        match self {
            Self::Projection(cfg) => cfg.noise == NoiseMode::Calibrated,
            Self::CompressedSensing(cfg) => cfg.noise == NoiseMode::Calibrated,
            Self::Exact => false,
        }
    }
}
