//! Privacy filter for randomly stopped SGD.
//!
//! Step `t` of the optimizer costs `eps_t = a_t eps` and `delta_t = a_t delta`
//! with `a_t = (3 * 2^(N_t+1) + 1) / (16 n)`. The run continues while, over
//! the committed steps,
//!
//! ```text
//! sqrt(2 ln(4/delta) sum a_s^2) + (eps/2) sum a_s^2 <= 1/2   and   sum a_s <= 1/4
//! ```
//!
//! which is advanced composition to `(eps/2, delta/2)` written in units of the
//! budget. Each single step costs at most `(eps/4, delta/4)`, which leaves room
//! for the steps taken after the last committed one.

use std::fmt::Write as _;

use rand::Rng;

use crate::bias_reduction::step_weight;
use crate::error::{invalid, Error, Result};
use crate::noise::TGeom;
use crate::params::PrivacyParams;

/// `(eps_t, delta_t)` for a step at level `N`.
pub fn step_cost(level: usize, eps: f64, delta: f64, n: usize) -> (f64, f64) {
    let w = step_weight(level, n);
    (w * eps, w * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Continue,
    Halt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    target: PrivacyParams,
    n: usize,
    sum_sq: f64,
    sum_lin: f64,
    log: Vec<usize>,
}

/// Relative tolerance when recomputing the sums from the log.
const REPLAY_TOL: f64 = 1e-12;

impl FilterState {
    pub fn new(target: PrivacyParams, n: usize) -> Result<Self> {
        if target.delta <= 0.0 {
            return Err(invalid("delta", "the filter needs delta > 0"));
        }
        if n < 2 {
            return Err(invalid("n", "need at least two points"));
        }
        Ok(Self { target, n, sum_sq: 0.0, sum_lin: 0.0, log: Vec::new() })
    }

    pub fn target(&self) -> PrivacyParams {
        self.target
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn sum_lin(&self) -> f64 {
        self.sum_lin
    }

    pub fn steps(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &[usize] {
        &self.log
    }

    /// `sqrt(2 ln(4/delta) q) + (eps/2) q` for `q = sum a_s^2`.
    pub fn composition(&self, sum_sq: f64) -> f64 {
        (2.0 * (4.0 / self.target.delta).ln() * sum_sq).sqrt() + 0.5 * self.target.eps * sum_sq
    }

    /// Whether both clauses hold after hypothetically appending a step at `level`.
    pub fn admit(&self, level: usize) -> FilterDecision {
        let a = step_weight(level, self.n);
        let sq = self.sum_sq + a * a;
        let lin = self.sum_lin + a;
        if self.composition(sq) <= 0.5 && lin <= 0.25 {
            FilterDecision::Continue
        } else {
            FilterDecision::Halt
        }
    }

    /// Appends a step unconditionally.
    pub fn commit(&mut self, level: usize) {
        let a = step_weight(level, self.n);
        self.sum_sq += a * a;
        self.sum_lin += a;
        self.log.push(level);
    }

    /// Checks the filter invariants: the committed steps satisfy both clauses,
    /// the sums match the log, and any single step is at most a quarter of
    /// the budget.
    pub fn verify(&self) -> Result<()> {
        let (mut sq, mut lin) = (0.0, 0.0);
        for &k in &self.log {
            let a = step_weight(k, self.n);
            sq += a * a;
            lin += a;
        }
        if (sq - self.sum_sq).abs() > REPLAY_TOL * sq.max(1e-300)
            || (lin - self.sum_lin).abs() > REPLAY_TOL * lin.max(1e-300)
        {
            return Err(Error::Consistency("filter sums do not match the step log".into()));
        }
        if self.composition(self.sum_sq) > 0.5 {
            return Err(Error::Consistency(format!(
                "committed composition {} exceeds 1/2",
                self.composition(self.sum_sq)
            )));
        }
        if self.sum_lin > 0.25 {
            return Err(Error::Consistency(format!("committed delta fraction {} exceeds 1/4", self.sum_lin)));
        }
        let worst = step_weight(self.n.ilog2() as usize - 1, self.n);
        if worst > 0.25 {
            return Err(Error::Consistency(format!("single-step weight {worst} exceeds 1/4")));
        }
        Ok(())
    }

    /// Total `(eps, delta)` of the committed steps plus `trailing` uncommitted
    /// ones: advanced composition with slack `delta/4` for the committed part,
    /// basic composition for the rest.
    pub fn total_spend(&self, trailing: &[usize]) -> (f64, f64) {
        let t = self.target;
        let mut eps = t.eps * self.composition(self.sum_sq);
        let mut delta = 0.25 * t.delta + self.sum_lin * t.delta;
        for &k in trailing {
            let (e, d) = step_cost(k, t.eps, t.delta, self.n);
            eps += e;
            delta += d;
        }
        (eps, delta)
    }

    /// Budget log with columns `step,N,eps_t,delta_t,cum_sq,cum_lin`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,N,eps_t,delta_t,cum_sq,cum_lin\n");
        let (mut sq, mut lin) = (0.0, 0.0);
        for (t, &k) in self.log.iter().enumerate() {
            let a = step_weight(k, self.n);
            sq += a * a;
            lin += a;
            let (e, d) = step_cost(k, self.target.eps, self.target.delta, self.n);
            let _ = writeln!(out, "{t},{k},{e:e},{d:e},{sq:e},{lin:e}");
        }
        out
    }
}

/// Pure-function form of [`FilterState::admit`].
pub fn filter_admit(state: &FilterState, level: usize) -> FilterDecision {
    state.admit(level)
}

/// Outcome of the literal loop: draws `N_0, N_1, ...` and the final index `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StopSchedule {
    /// All levels drawn, `N_0..=N_T`.
    pub draws: Vec<usize>,
    pub state: FilterState,
}

impl StopSchedule {
    pub fn stopping_time(&self) -> usize {
        self.draws.len() - 1
    }
}

/// Runs only the stopping logic of the optimizer loop.
///
/// The check made before step `t + 1` covers `N_0..N_{t-1}`, i.e. it is the
/// admission of `N_{t-1}`. Steps 0 and 1 therefore always run, and when the
/// check after step `t` fails the run ends with `T = t`: steps `0..=T` ran,
/// `N_0..N_{T-2}` are committed and the last two steps are covered by the
/// per-step bound.
pub fn simulate_stopping<R: Rng + ?Sized>(n: usize, target: PrivacyParams, rng: &mut R) -> Result<StopSchedule> {
    let tgeom = TGeom::for_dataset_size(n)?;
    let mut state = FilterState::new(target, n)?;
    let mut draws: Vec<usize> = Vec::new();
    loop {
        if draws.len() >= 2 {
            match state.admit(draws[draws.len() - 2]) {
                FilterDecision::Continue => state.commit(draws[draws.len() - 2]),
                FilterDecision::Halt => break,
            }
        }
        draws.push(tgeom.sample(rng));
    }
    Ok(StopSchedule { draws, state })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingStats {
    pub trials: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    /// `n^2 / ((n+1) ln(4/delta)) - 1`.
    pub lower_bound: f64,
    /// `64 n / (9 ln(4/delta))`.
    pub upper_bound: f64,
    /// `C' n / ln(2/delta)`.
    pub threshold: f64,
    /// Empirical `P[T <= threshold]`.
    pub frac_below: f64,
    /// Whether `delta < 1/n^2`, the regime the expectation bounds are stated for.
    pub hypothesis_holds: bool,
}

pub fn expected_stop_bounds(n: usize, delta: f64) -> (f64, f64) {
    let nf = n as f64;
    let l = (4.0 / delta).ln();
    (nf * nf / ((nf + 1.0) * l) - 1.0, 64.0 * nf / (9.0 * l))
}

/// Monte Carlo summary of the stopping time.
pub fn stopping_time_stats<R: Rng + ?Sized>(
    n: usize,
    target: PrivacyParams,
    c_prime: f64,
    trials: usize,
    rng: &mut R,
) -> Result<StoppingStats> {
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    let hypothesis_holds = target.delta < 1.0 / (n as f64 * n as f64);
    if !hypothesis_holds {
        log::warn!("delta = {} is not below 1/n^2 for n = {n}", target.delta);
    }
    let mut ts: Vec<usize> = Vec::with_capacity(trials);
    for _ in 0..trials {
        ts.push(simulate_stopping(n, target, rng)?.stopping_time());
    }
    let threshold = c_prime * n as f64 / (2.0 / target.delta).ln();
    let frac_below = ts.iter().filter(|&&t| t as f64 <= threshold).count() as f64 / trials as f64;
    let mean = ts.iter().sum::<usize>() as f64 / trials as f64;
    ts.sort_unstable();
    let q = |p: f64| -> f64 {
        let pos = p * (trials - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        let w = pos - lo as f64;
        ts[lo] as f64 * (1.0 - w) + ts[hi] as f64 * w
    };
    let (lower_bound, upper_bound) = expected_stop_bounds(n, target.delta);
    Ok(StoppingStats {
        trials,
        mean,
        min: ts[0],
        max: ts[trials - 1],
        q10: q(0.1),
        q50: q(0.5),
        q90: q(0.9),
        lower_bound,
        upper_bound,
        threshold,
        frac_below,
        hypothesis_holds,
    })
}

/// Generic filter for arbitrary per-step costs `(eps_t, delta_t)`: continue
/// while `sqrt(2 ln(1/delta') sum eps_s^2) + (1/2) sum eps_s^2 <= eps` and
/// `sum delta_s <= delta''`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFilter {
    eps: f64,
    delta_prime: f64,
    delta_budget: f64,
    sum_eps_sq: f64,
    sum_delta: f64,
    steps: usize,
}

impl AdaptiveFilter {
    pub fn new(eps: f64, delta_prime: f64, delta_budget: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(invalid("eps", "must be positive"));
        }
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(invalid("delta'", "must lie in (0, 1)"));
        }
        if !(delta_budget >= 0.0) {
            return Err(invalid("delta''", "must be nonnegative"));
        }
        Ok(Self { eps, delta_prime, delta_budget, sum_eps_sq: 0.0, sum_delta: 0.0, steps: 0 })
    }

    pub fn spent_eps(&self, sum_eps_sq: f64) -> f64 {
        (2.0 * (1.0 / self.delta_prime).ln() * sum_eps_sq).sqrt() + 0.5 * sum_eps_sq
    }

    pub fn admit(&self, eps_t: f64, delta_t: f64) -> FilterDecision {
        let sq = self.sum_eps_sq + eps_t * eps_t;
        if self.spent_eps(sq) <= self.eps && self.sum_delta + delta_t <= self.delta_budget {
            FilterDecision::Continue
        } else {
            FilterDecision::Halt
        }
    }

    /// Admits and records the step if the filter allows it.
    pub fn try_spend(&mut self, eps_t: f64, delta_t: f64) -> FilterDecision {
        let decision = self.admit(eps_t, delta_t);
        if decision == FilterDecision::Continue {
            self.sum_eps_sq += eps_t * eps_t;
            self.sum_delta += delta_t;
            self.steps += 1;
        }
        decision
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn spent(&self) -> (f64, f64) {
        (self.spent_eps(self.sum_eps_sq), self.sum_delta)
    }
}
