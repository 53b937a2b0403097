//! Exponential mechanism over a net of sparse vectors.

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::geometry::sparsify_threshold;
use crate::loss::{empirical_risk, LossModel};
use crate::params::FeasibleSet;
use crate::rng::RngStream;

pub const TAU_LO: f64 = 1e-6;
pub const TAU_HI: f64 = 1.0;
pub const TAU_BISECTION_ITERS: usize = 200;

/// Which calibration equation fixes the net resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauRule {
    /// `tau^3 / ln(d/(tau beta)) = L sqrt(s) eps n / B`. For the usual
    /// parameter range the right side exceeds what `tau <= 1` can reach and the
    /// solution clamps to 1.
    #[default]
    Literal,
    /// `tau^3 / ln(d/(tau beta)) = B / (L sqrt(s) eps n)`, which balances the
    /// sparsification error against the selection error.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSolution {
    pub tau: f64,
    /// Calibration residual at `tau`.
    pub residual: f64,
    /// The root lies outside `[TAU_LO, TAU_HI]`.
    pub clamped: bool,
}

/// Bisection for the net resolution on `[1e-6, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_tau(
    l: f64,
    s: usize,
    eps: f64,
    n: usize,
    b: f64,
    d: usize,
    beta: f64,
    rule: TauRule,
) -> Result<TauSolution> {
    if !(l > 0.0 && b > 0.0 && eps > 0.0 && beta > 0.0 && beta < 1.0) || n == 0 || s == 0 {
        return Err(invalid("tau", "need positive L, B, eps, n, s and beta in (0, 1)"));
    }
    let ratio = l * (s as f64).sqrt() * eps * n as f64 / b;
    let rhs = match rule {
        TauRule::Literal => ratio,
        TauRule::Balanced => 1.0 / ratio,
    };
    let df = d as f64;
    // ln(d/(tau beta)) > 0 on the whole bracket since d >= 1 > tau beta.
    let residual = |t: f64| t.powi(3) / (df / (t * beta)).ln() - rhs;
    let (mut lo, mut hi) = (TAU_LO, TAU_HI);
    if residual(hi) <= 0.0 {
        return Ok(TauSolution { tau: hi, residual: residual(hi), clamped: residual(hi) < 0.0 });
    }
    if residual(lo) >= 0.0 {
        return Ok(TauSolution { tau: lo, residual: residual(lo), clamped: residual(lo) > 0.0 });
    }
    for _ in 0..TAU_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    Ok(TauSolution { tau, residual: residual(tau), clamped: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetPoint {
    pub support: Vec<usize>,
    /// Values on `support`, all nonzero.
    pub values: Vec<f64>,
    pub point: Vec<f64>,
}

/// `C(d, k) (3/tau)^k` with `k = ceil(1/tau^2)`.
pub fn net_cardinality_bound(tau: f64, d: usize) -> f64 {
    let k = support_size(tau);
    binomial(d, k) * (3.0 / tau).powi(k as i32)
}

fn support_size(tau: f64) -> usize {
    (1.0 / (tau * tau)).ceil() as usize
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Grid values of spacing `h` on coordinate `j` of the set's bounding box,
/// excluding zero.
fn axis_grid(set: &FeasibleSet, j: usize, h: f64) -> Vec<f64> {
    let (lo, hi) = match set {
        FeasibleSet::L2Ball { radius } | FeasibleSet::L1Ball { radius } => (-radius, *radius),
        FeasibleSet::Box { lo, hi } => (lo[j], hi[j]),
        FeasibleSet::Unconstrained => unreachable!("checked by the caller"),
    };
    let down = (-lo / h + 1e-12).floor() as i64;
    let up = (hi / h + 1e-12).floor() as i64;
    (-down..=up).filter(|&i| i != 0).map(|i| i as f64 * h).collect()
}

/// Net of the `ceil(1/tau^2)`-sparse points of `set` (support size capped at
/// `d`). Coordinates sit on a grid of spacing `tau/sqrt(k)`; rounding a sparse
/// point toward zero stays feasible and moves it by less than `tau`.
pub fn build_sparse_net(set: &FeasibleSet, tau: f64, d: usize, cap: usize) -> Result<Vec<NetPoint>> {
    build_sparse_net_with_support(set, tau, support_size(tau).min(d), d, cap)
}

pub fn build_sparse_net_with_support(
    set: &FeasibleSet,
    tau: f64,
    k: usize,
    d: usize,
    cap: usize,
) -> Result<Vec<NetPoint>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    if set.is_unconstrained() || !set.is_sparsifiable() {
        return Err(invalid("set", "needs a bounded sparsifiable set"));
    }
    if let FeasibleSet::Box { lo, .. } = set {
        if lo.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: lo.len() });
        }
    }
    if k == 0 || k > d {
        return Err(invalid("support", format!("size {k} must be in 1..={d}")));
    }
    let zero = NetPoint { support: vec![], values: vec![], point: vec![0.0; d] };
    if tau >= set.diameter() {
        return Ok(vec![zero]);
    }
    let h = tau / (k as f64).sqrt();
    let grids: Vec<Vec<f64>> = (0..d).map(|j| axis_grid(set, j, h)).collect();

    // Count before building so an oversized request fails fast with the size.
    let required = count_net(set, &grids, k, d);
    if required > cap as f64 {
        return Err(Error::NetTooLarge { required, cap });
    }
    let mut net = vec![zero];
    for size in 1..=k {
        for support in Combinations::new(d, size) {
            let mut idx = vec![0usize; size];
            'grid: loop {
                let values: Vec<f64> = support.iter().zip(&idx).map(|(&j, &i)| grids[j][i]).collect();
                let mut point = vec![0.0; d];
                for (&j, &v) in support.iter().zip(&values) {
                    point[j] = v;
                }
                if set.contains(&point, 1e-12) {
                    net.push(NetPoint { support: support.clone(), values, point });
                }
                for p in (0..size).rev() {
                    idx[p] += 1;
                    if idx[p] < grids[support[p]].len() {
                        continue 'grid;
                    }
                    idx[p] = 0;
                }
                break;
            }
        }
    }
    Ok(net)
}

/// Number of feasible grid points. Balls are symmetric, so a support's count
/// depends only on its size.
fn count_net(set: &FeasibleSet, grids: &[Vec<f64>], k: usize, d: usize) -> f64 {
    match set {
        FeasibleSet::Box { .. } => {
            // Every grid point of a box is feasible.
            let mut total = 1.0;
            // Elementary symmetric sums of the per-axis counts.
            let mut e = vec![0.0; k + 1];
            e[0] = 1.0;
            for g in grids {
                for size in (1..=k).rev() {
                    e[size] += e[size - 1] * g.len() as f64;
                }
            }
            total += e[1..].iter().sum::<f64>();
            total
        }
        _ => {
            let axis = &grids[0];
            let mut total = 1.0;
            for size in 1..=k {
                total += binomial(d, size) * count_ball_support(set, axis, size);
            }
            total
        }
    }
}

fn count_ball_support(set: &FeasibleSet, axis: &[f64], size: usize) -> f64 {
    let mut count = 0.0;
    let mut idx = vec![0usize; size];
    let mut point = vec![0.0; size];
    loop {
        for (p, &i) in idx.iter().enumerate() {
            point[p] = axis[i];
        }
        if set.contains(&point, 1e-12) {
            count += 1.0;
        }
        let mut p = size;
        loop {
            if p == 0 {
                return count;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < axis.len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

/// Lexicographic `size`-subsets of `0..d`.
struct Combinations {
    d: usize,
    cur: Option<Vec<usize>>,
}

impl Combinations {
    fn new(d: usize, size: usize) -> Self {
        Self { d, cur: (size <= d).then(|| (0..size).collect()) }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.cur.clone()?;
        let c = self.cur.as_mut().expect("checked above");
        let k = c.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.cur = None;
                break;
            }
            i -= 1;
            if c[i] < self.d - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

pub(crate) fn combinations(d: usize, size: usize) -> impl Iterator<Item = Vec<usize>> {
    Combinations::new(d, size)
}

/// Weight exponent used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpWeight {
    /// `exp(-eps n F_S(x) / (2B))`.
    #[default]
    Standard,
    /// `exp(-(B/(eps n)) F_S(x))`, as literally written for the algorithm.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMechConfig {
    pub cap: usize,
    pub weight: ExpWeight,
    pub rule: TauRule,
    /// Skips the calibration equation.
    pub tau: Option<f64>,
}

impl Default for ExpMechConfig {
    fn default() -> Self {
        Self { cap: 100_000, weight: ExpWeight::Standard, rule: TauRule::Literal, tau: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMechOutput {
    pub x: Vec<f64>,
    pub index: usize,
    pub tau: TauSolution,
    pub net: Vec<NetPoint>,
    /// Sampling probabilities over `net`.
    pub probabilities: Vec<f64>,
}

/// Normalized sampling probabilities, computed via log-sum-exp.
pub fn exp_mech_probabilities(risks: &[f64], eps: f64, n: usize, b: f64, weight: ExpWeight) -> Vec<f64> {
    let scale = match weight {
        ExpWeight::Standard => eps * n as f64 / (2.0 * b),
        ExpWeight::AsWritten => b / (eps * n as f64),
    };
    let logw: Vec<f64> = risks.iter().map(|f| -scale * f).collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below 1; take the last positive weight.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

pub fn sparse_exp_mechanism(
    data: &Dataset,
    eps: f64,
    beta: f64,
    loss: &dyn LossModel,
    set: &FeasibleSet,
    stream: &RngStream,
    cfg: &ExpMechConfig,
) -> Result<ExpMechOutput> {
    let c = loss.constants();
    let b = c.range()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let tau = match cfg.tau {
        Some(t) => TauSolution { tau: t, residual: 0.0, clamped: false },
        None => solve_tau(c.lipschitz, c.sparsity, eps, n, b, data.dim(), beta, cfg.rule)?,
    };
    if tau.clamped {
        log::warn!("net resolution clamped to {} (residual {:.3e})", tau.tau, tau.residual);
    }
    let net = build_sparse_net(set, tau.tau, data.dim(), cfg.cap)?;
    let risks: Vec<f64> = net.iter().map(|p| empirical_risk(loss, data, &p.point)).collect();
    let probabilities = exp_mech_probabilities(&risks, eps, n, b, cfg.weight);
    let index = sample_categorical(&probabilities, &mut stream.rng());
    Ok(ExpMechOutput { x: net[index].point.clone(), index, tau, net, probabilities })
}

/// `(F_S(x~) - F_S(x*), L sqrt(s) tau)` where `x~` keeps the coordinates of
/// `x*` with magnitude at least `tau`.
pub fn sparsification_gap(loss: &dyn LossModel, data: &Dataset, x_star: &[f64], tau: f64) -> (f64, f64) {
    let c = loss.constants();
    let tilde = sparsify_threshold(x_star, tau);
    let gap = empirical_risk(loss, data, &tilde) - empirical_risk(loss, data, x_star);
    (gap, c.lipschitz * (c.sparsity as f64).sqrt() * tau)
}
