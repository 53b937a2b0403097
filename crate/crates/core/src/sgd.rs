//! Randomly stopped projected SGD driven by the bias-reduced gradient oracle,
//! with checkers for the pathwise inequalities every run must satisfy.

use std::fmt::Write as _;

use rand::Rng;

use crate::accounting::{step_cost, FilterDecision, FilterState};
use crate::bias_reduction::{bias_reduced_gradient, sample_batches_at_level};
use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::loss::{empirical_risk, full_gradient, LossConstants, LossModel};
use crate::mean_estimation::MeanMechanism;
use crate::noise::TGeom;
use crate::params::{FeasibleSet, PrivacyParams};
use crate::rng::RngStream;
use crate::vector::{dist2, dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Output the average of `x^0..x^T`.
    Convex,
    /// Output `x^t` for `t` uniform on `0..=T`.
    Nonconvex,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Convex => "convex",
            Mode::Nonconvex => "nonconvex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub mechanism: MeanMechanism,
    /// Keep every iterate and gradient. Needed for the pathwise checks.
    pub record_trace: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { mechanism: MeanMechanism::default(), record_trace: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// `x^0..=x^{T+1}` when recorded, otherwise empty.
    pub iterates: Vec<Vec<f64>>,
    /// `G(x^0)..=G(x^T)` when recorded, otherwise empty.
    pub gradients: Vec<Vec<f64>>,
    /// `N_0..=N_T`.
    pub draws: Vec<usize>,
    /// Final loop index; steps `0..=T` were taken.
    pub stopping_time: usize,
    pub eta: f64,
    pub mode: Mode,
    pub set: FeasibleSet,
    pub output: Vec<f64>,
    /// `t-hat` in nonconvex mode.
    pub output_index: Option<usize>,
    pub filter: FilterState,
    /// `||G(x^t)||_2` per step (always recorded).
    pub gradient_norms: Vec<f64>,
}

impl RunTrace {
    pub fn has_iterates(&self) -> bool {
        !self.iterates.is_empty()
    }

    /// Total `(eps, delta)` spent: the committed steps plus the trailing
    /// uncommitted ones.
    pub fn privacy_spent(&self) -> (f64, f64) {
        self.filter.total_spend(&self.draws[self.filter.steps()..])
    }

    /// `eps_t` per step at the run's target budget.
    pub fn step_eps(&self) -> Vec<f64> {
        let t = self.filter.target();
        self.draws.iter().map(|&k| step_cost(k, t.eps, t.delta, self.filter.n()).0).collect()
    }

    /// Trace CSV with columns `step,N_t,grad_norm,risk,cum_eps`. `cum_eps` is
    /// the advanced-composition total over steps `0..=t`.
    pub fn to_csv(&self, loss: &dyn LossModel, data: &Dataset) -> Result<String> {
        if !self.has_iterates() {
            return Err(invalid("trace", "iterates were not recorded"));
        }
        let target = self.filter.target();
        let n = self.filter.n();
        let mut out = String::from("step,N_t,grad_norm,risk,cum_eps\n");
        let mut sq = 0.0;
        for (t, &k) in self.draws.iter().enumerate() {
            let a = crate::bias_reduction::step_weight(k, n);
            sq += a * a;
            let cum = target.eps * self.filter.composition(sq);
            let risk = empirical_risk(loss, data, &self.iterates[t]);
            let _ = writeln!(out, "{t},{k},{:e},{risk:e},{cum:e}", self.gradient_norms[t]);
        }
        Ok(out)
    }
}

/// Runs the optimizer. The gradient oracle at step `t` uses `(eps/8, delta/4)`
/// and substream `(1, t)` of `stream`; batch levels and batches come from
/// substream 0 and the nonconvex output index from substream 2.
#[allow(clippy::too_many_arguments)]
pub fn run_bias_reduced_sgd(
    data: &Dataset,
    x0: &[f64],
    pp: PrivacyParams,
    eta: f64,
    loss: &dyn LossModel,
    set: &FeasibleSet,
    mode: Mode,
    stream: &RngStream,
    cfg: &SgdConfig,
) -> Result<RunTrace> {
    let n = data.len();
    if x0.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), actual: x0.len() });
    }
    if !set.contains(x0, 1e-9) {
        return Err(invalid("x0", "must lie in the feasible set"));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(invalid("eta", format!("must be finite and nonnegative, got {eta}")));
    }
    let tgeom = TGeom::for_dataset_size(n)?;
    let mut filter = FilterState::new(pp, n)?;
    let oracle_pp = pp.split(0.125, 0.25);

    let mut sched = stream.substream(0).rng();
    let mut pick = stream.substream(2).rng();
    let mut x = x0.to_vec();
    let mut draws: Vec<usize> = Vec::new();
    let mut iterates = Vec::new();
    let mut gradients = Vec::new();
    let mut gradient_norms = Vec::new();
    let mut average = vec![0.0; x.len()];
    let mut reservoir = (0usize, x.clone());

    loop {
        if draws.len() >= 2 {
            let k = draws[draws.len() - 2];
            match filter.admit(k) {
                FilterDecision::Continue => filter.commit(k),
                FilterDecision::Halt => break,
            }
        }
        let t = draws.len();
        let level = tgeom.sample(&mut sched);
        draws.push(level);

        // Output bookkeeping covers x^0..x^T, i.e. every iterate a step starts from.
        let w = 1.0 / (t + 1) as f64;
        for (a, xi) in average.iter_mut().zip(&x) {
            *a += w * (xi - *a);
        }
        if t > 0 && pick.random_range(0..=t) == 0 {
            reservoir = (t, x.clone());
        }

        let draw = sample_batches_at_level(n, level, &mut sched)?;
        let est =
            bias_reduced_gradient(&x, data, &draw, oracle_pp, loss, &cfg.mechanism, &stream.path(&[1, t as u64]))?;
        let stepped: Vec<f64> = x.iter().zip(&est.g).map(|(xi, gi)| xi - eta * gi).collect();
        let next = set.project(&stepped);
        gradient_norms.push(norm2(&est.g));
        if cfg.record_trace {
            iterates.push(std::mem::replace(&mut x, next));
            gradients.push(est.g);
        } else {
            x = next;
        }
    }
    if cfg.record_trace {
        iterates.push(x);
    }

    check_budget(&filter, &draws)?;
    let stopping_time = draws.len() - 1;
    let (output, output_index) = match mode {
        Mode::Convex => (average, None),
        Mode::Nonconvex => (reservoir.1, Some(reservoir.0)),
    };
    Ok(RunTrace {
        iterates,
        gradients,
        draws,
        stopping_time,
        eta,
        mode,
        set: set.clone(),
        output,
        output_index,
        filter,
        gradient_norms,
    })
}

/// The committed steps fit `(eps/2, delta/2)`, and each of the trailing
/// uncommitted steps costs at most a quarter of the budget.
fn check_budget(filter: &FilterState, draws: &[usize]) -> Result<()> {
    filter.verify()?;
    let committed = filter.log();
    if draws.len() != committed.len() + 2 || draws[..committed.len()] != *committed {
        return Err(Error::Consistency("filter log does not match the drawn levels".into()));
    }
    let t = filter.target();
    for &k in &draws[committed.len()..] {
        let (e, d) = step_cost(k, t.eps, t.delta, filter.n());
        if e > 0.25 * t.eps || d > 0.25 * t.delta {
            return Err(Error::Consistency(format!("trailing step cost ({e}, {d}) exceeds a quarter budget")));
        }
    }
    let (e, d) = filter.total_spend(&draws[committed.len()..]);
    if e > t.eps * (1.0 + 1e-12) || d > t.delta * (1.0 + 1e-12) {
        return Err(Error::Consistency(format!("run spends ({e}, {d}), over the budget")));
    }
    Ok(())
}

/// Checks `x^{t+1} = Proj(x^t - eta G(x^t))` for every recorded step.
pub fn verify_steps(trace: &RunTrace) -> Result<()> {
    if !trace.has_iterates() {
        return Err(invalid("trace", "iterates were not recorded"));
    }
    if trace.iterates.len() != trace.gradients.len() + 1 {
        return Err(Error::Consistency("trace lengths disagree".into()));
    }
    for (t, g) in trace.gradients.iter().enumerate() {
        let x = &trace.iterates[t];
        let stepped: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - trace.eta * gi).collect();
        let expect = trace.set.project(&stepped);
        let err = dist2(&expect, &trace.iterates[t + 1]);
        if err > 1e-12 * (1.0 + norm2(&expect)) {
            return Err(Error::Consistency(format!("step {t} does not reconstruct (off by {err:e})")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwiseCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
}

const PATHWISE_REL_TOL: f64 = 1e-7;

/// Regret inequality for projected SGD with arbitrary gradient estimates:
///
/// ```text
/// sum_t [F(x^t) - F(x*)] <= ||x^0 - x*||^2 / (2 eta)
///     + sum_t [ (eta/2) ||G_t||^2 + <grad F(x^t) - G_t, x^t - x*> ]
/// ```
///
/// Holds on every path for convex `F` and `x*` in the feasible set.
pub fn check_pathwise_regret(
    trace: &RunTrace,
    loss: &dyn LossModel,
    data: &Dataset,
    x_star: &[f64],
) -> Result<PathwiseCheck> {
    verify_steps(trace)?;
    if !(trace.eta > 0.0) {
        return Err(invalid("eta", "the regret bound needs a positive step size"));
    }
    let f_star = empirical_risk(loss, data, x_star);
    let d0 = dist2(&trace.iterates[0], x_star);
    let mut lhs = 0.0;
    let mut rhs = d0 * d0 / (2.0 * trace.eta);
    let mut scale = rhs.abs();
    for (t, g) in trace.gradients.iter().enumerate() {
        let x = &trace.iterates[t];
        let gap = empirical_risk(loss, data, x) - f_star;
        let grad = full_gradient(loss, data, x);
        let diff: Vec<f64> = grad.iter().zip(g).map(|(a, b)| a - b).collect();
        let offset: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
        let quad = 0.5 * trace.eta * dot(g, g);
        let cross = dot(&diff, &offset);
        lhs += gap;
        rhs += quad + cross;
        scale += gap.abs() + quad + cross.abs() + norm2(&grad) * norm2(&offset);
    }
    Ok(finish(lhs, rhs, scale))
}

fn finish(lhs: f64, rhs: f64, scale: f64) -> PathwiseCheck {
    PathwiseCheck { holds: lhs <= rhs + PATHWISE_REL_TOL * (1.0 + scale), lhs, rhs, slack: rhs - lhs }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck {
    /// With the realized gap `F(x^0) - F(x^{T+1})`; used for pass/fail.
    pub realized: PathwiseCheck,
    /// With the declared initial suboptimality, when available.
    pub declared: Option<PathwiseCheck>,
}

/// Descent inequality for unconstrained SGD on an `H`-smooth objective:
///
/// ```text
/// sum_t ||grad F(x^t)||^2 <= (F(x^0) - F(x^{T+1})) / eta
///     + (eta H / 2) sum_t ||G_t||^2 - sum_t <grad F(x^t), G_t - grad F(x^t)>
/// ```
pub fn check_pathwise_stationarity(
    trace: &RunTrace,
    loss: &dyn LossModel,
    data: &Dataset,
) -> Result<StationarityCheck> {
    if !trace.set.is_unconstrained() {
        return Err(invalid("set", "the stationarity bound is for unconstrained steps"));
    }
    let c = loss.constants();
    let h = c.smoothness()?;
    if !(trace.eta > 0.0) || trace.eta > 1.0 / (2.0 * h) {
        return Err(invalid("eta", format!("need 0 < eta <= 1/(2H) = {}", 1.0 / (2.0 * h))));
    }
    verify_steps(trace)?;
    let mut lhs = 0.0;
    let mut rest = 0.0;
    let mut scale = 0.0;
    for (t, g) in trace.gradients.iter().enumerate() {
        let grad = full_gradient(loss, data, &trace.iterates[t]);
        let diff: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let gn = dot(&grad, &grad);
        let quad = 0.5 * trace.eta * h * dot(g, g);
        let cross = dot(&grad, &diff);
        lhs += gn;
        rest += quad - cross;
        scale += gn + quad + cross.abs();
    }
    let f0 = empirical_risk(loss, data, &trace.iterates[0]);
    let f_end = empirical_risk(loss, data, trace.iterates.last().expect("nonempty trace"));
    let realized_gap = (f0 - f_end) / trace.eta;
    let realized = finish(lhs, realized_gap + rest, scale + realized_gap.abs());
    let declared = c.gap.map(|gamma| {
        let g = gamma / trace.eta;
        finish(lhs, g + rest, scale + g)
    });
    Ok(StationarityCheck { realized, declared })
}

/// The absolute constants the convergence statements leave unspecified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperConstants {
    /// `C'` in `tau = C' n / ln(2/delta)`.
    pub c_prime: f64,
    /// `C` in the success threshold `U`.
    pub c_u: f64,
    /// Multiplier on the bias level `b`.
    pub c_b: f64,
    /// Multiplier on the second-moment level `nu^2`.
    pub c_nu: f64,
}

impl Default for HyperConstants {
    fn default() -> Self {
        Self { c_prime: 1.0, c_u: 1.0, c_b: 1.0, c_nu: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub eta: f64,
    pub tau: f64,
    pub u: f64,
    pub b: f64,
    pub nu_sq: f64,
}

impl Hyperparams {
    /// The success level: `U / tau` (an excess risk in convex mode, a squared
    /// gradient norm in nonconvex mode).
    pub fn threshold(&self) -> f64 {
        self.u / self.tau
    }
}

/// `b = c_b L [s ln(d/s) ln(1/delta)]^{1/4} / sqrt(n eps)`.
pub fn bias_level(c: &LossConstants, n: usize, pp: PrivacyParams, c_b: f64) -> f64 {
    c_b * c.lipschitz * sparse_log_factor(c, pp).powf(0.25) / (n as f64 * pp.eps).sqrt()
}

/// `nu^2 = c_nu L^2 ln(n) sqrt(s ln(d/s) ln(1/delta)) / eps`.
pub fn second_moment_level(c: &LossConstants, n: usize, pp: PrivacyParams, c_nu: f64) -> f64 {
    c_nu * c.lipschitz * c.lipschitz * (n as f64).ln() * sparse_log_factor(c, pp).sqrt() / pp.eps
}

fn sparse_log_factor(c: &LossConstants, pp: PrivacyParams) -> f64 {
    let s = c.sparsity as f64;
    s * (c.dim as f64 / s).ln() * (1.0 / pp.delta).ln()
}

pub fn recommended_hyperparams(
    c: &LossConstants,
    n: usize,
    pp: PrivacyParams,
    mode: Mode,
    k: &HyperConstants,
) -> Result<Hyperparams> {
    if !(pp.delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let b = bias_level(c, n, pp, k.c_b);
    let nu_sq = second_moment_level(c, n, pp, k.c_nu);
    let nu = nu_sq.sqrt();
    let tau = k.c_prime * n as f64 / (2.0 / pp.delta).ln();
    let (eta, u) = match mode {
        Mode::Convex => {
            let d = c.diameter()?;
            (d / (nu * tau.sqrt()), k.c_u * d * (nu * tau.sqrt() + b * tau))
        }
        Mode::Nonconvex => {
            let gamma = c.gap()?;
            let h = c.smoothness()?;
            ((gamma / (h * tau * nu_sq)).sqrt(), k.c_u * ((gamma * h * tau).sqrt() * nu + c.lipschitz * tau * b))
        }
    };
    Ok(Hyperparams { eta, tau, u, b, nu_sq })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Norm of the gradient mapping `H (x - Proj(x - grad F(x) / H))`.
    pub residual: f64,
    pub iterations: usize,
}

/// Deterministic accelerated projected gradient (with adaptive restarts) on
/// `F_S + (lambda/2) ||x||^2`. Linear losses on bounded sets are minimized in
/// closed form.
pub fn solve_reference(
    loss: &dyn LossModel,
    data: &Dataset,
    set: &FeasibleSet,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    let d = data.dim();
    let h = loss.constants().smoothness()? + lambda;
    let objective = |x: &[f64]| empirical_risk(loss, data, x) + 0.5 * lambda * dot(x, x);
    let gradient = |x: &[f64]| {
        let mut g = full_gradient(loss, data, x);
        if lambda > 0.0 {
            g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += lambda * xi);
        }
        g
    };
    if h == 0.0 {
        let g = gradient(&vec![0.0; d]);
        let x = linear_minimizer(set, &g)?;
        return Ok(ReferenceSolution { value: objective(&x), x, residual: 0.0, iterations: 0 });
    }
    let step = 1.0 / h;
    let mapping = |x: &[f64], g: &[f64]| -> f64 {
        let p = set.project(&x.iter().zip(g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
        h * dist2(x, &p)
    };
    let mut x = set.project(&vec![0.0; d]);
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    for it in 0..max_iter {
        let gy = gradient(&y);
        let next = set.project(&y.iter().zip(&gy).map(|(a, b)| a - step * b).collect::<Vec<_>>());
        // Gradient-based restart: drop momentum once it points uphill.
        let uphill: f64 = y.iter().zip(&next).zip(&x).map(|((yi, ni), xi)| (yi - ni) * (ni - xi)).sum();
        let theta_next = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) };
        let beta = if uphill > 0.0 { 0.0 } else { (theta - 1.0) / theta_next };
        y = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = next;
        theta = theta_next;
        let residual = mapping(&x, &gradient(&x));
        if residual <= tol {
            return Ok(ReferenceSolution { value: objective(&x), x, residual, iterations: it + 1 });
        }
    }
    let residual = mapping(&x, &gradient(&x));
    Err(Error::NotConverged { solver: "reference gradient method", iterations: max_iter, residual })
}

/// `argmin <g, x>` over a bounded set.
pub fn linear_minimizer(set: &FeasibleSet, g: &[f64]) -> Result<Vec<f64>> {
    let d = g.len();
    match set {
        FeasibleSet::Unconstrained => {
            if g.iter().all(|v| *v == 0.0) {
                Ok(vec![0.0; d])
            } else {
                Err(invalid("set", "a linear objective is unbounded without constraints"))
            }
        }
        FeasibleSet::L2Ball { radius } => {
            let n = norm2(g);
            if n == 0.0 {
                Ok(vec![0.0; d])
            } else {
                Ok(g.iter().map(|v| -radius * v / n).collect())
            }
        }
        FeasibleSet::L1Ball { radius } => {
            let mut x = vec![0.0; d];
            let (j, v) =
                g.iter().enumerate().fold((0, 0.0_f64), |b, (j, v)| if v.abs() > b.1.abs() { (j, *v) } else { b });
            if v != 0.0 {
                x[j] = -radius * v.signum();
            }
            Ok(x)
        }
        FeasibleSet::Box { lo, hi } => Ok(g
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (l, h))| {
                if *v > 0.0 {
                    *l
                } else if *v < 0.0 {
                    *h
                } else {
                    l.max(0.0).min(*h)
                }
            })
            .collect()),
    }
}
