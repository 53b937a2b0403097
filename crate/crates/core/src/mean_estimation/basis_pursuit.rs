//! Basis pursuit, `min ||z||_1 subject to A z = b`.
//!
//! Two solvers are provided. The default is a two-phase revised simplex on
//! the split form `z = p - q`, `p, q >= 0`, which returns an exact vertex
//! together with its dual certificate. The alternative is ADMM
//! (scaled dual `u`, penalty `rho`):
//!
//! ```text
//! x <- P(z - u)            P(v) = v - A^T (A A^T)^{-1} (A v - b)
//! z <- soft(x + u, 1/rho)
//! u <- u + x - z
//! ```
//!
//! `rho` is rebalanced when the primal and dual residuals drift apart. Every
//! few iterations the support of `z` is "polished": the equality system is
//! solved on that support and the result is accepted only if a dual
//! certificate `||A^T y||_inf <= 1` with `A_S^T y = sign(x_S)` proves it optimal.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const POLISH_EVERY: usize = 10;
const CERT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BpSolver {
    #[default]
    Simplex,
    Admm,
}

#[derive(Debug, Clone)]
pub struct BasisPursuitProblem {
    /// `m x d` measurement matrix.
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub tol: f64,
    /// Iteration cap (pivots for the simplex solver).
    pub max_iter: usize,
    pub solver: BpSolver,
}

impl BasisPursuitProblem {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        Self { a, b, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, solver: BpSolver::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisPursuitSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Whether the returned point carries an exact-support optimality certificate.
    pub certified: bool,
}

pub fn basis_pursuit(p: &BasisPursuitProblem) -> Result<Vec<f64>> {
    solve(p).map(|s| s.x)
}

pub fn solve(p: &BasisPursuitProblem) -> Result<BasisPursuitSolution> {
    let (m, d) = p.a.shape();
    if m == 0 || m > d {
        return Err(invalid("A", format!("need 1 <= m <= d, got {m} x {d}")));
    }
    if p.b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: p.b.len() });
    }
    if !(p.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if p.a.iter().chain(&p.b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("basis pursuit data"));
    }
    let b = DVector::from_column_slice(&p.b);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(BasisPursuitSolution {
            x: vec![0.0; d],
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            certified: true,
        });
    }
    if m == 1 {
        return Ok(single_row(p));
    }
    match p.solver {
        BpSolver::Simplex => simplex(p, &b),
        BpSolver::Admm => admm(p, &b),
    }
}

fn admm(p: &BasisPursuitProblem, b: &DVector<f64>) -> Result<BasisPursuitSolution> {
    let (_, d) = p.a.shape();
    let gram = &p.a * p.a.transpose();
    let chol = gram
        .cholesky()
        .filter(|c| {
            let diag = c.l_dirty().diagonal();
            diag.min() > 1e-7 * diag.max()
        })
        .ok_or_else(|| invalid("A", "rows are linearly dependent"))?;
    let at = p.a.transpose();
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let r = &p.a * v - b;
        v - &at * chol.solve(&r)
    };

    // Start from the least-norm solution.
    let mut x = &at * chol.solve(b);
    let mut z = x.clone();
    let mut u = DVector::<f64>::zeros(d);
    let mut rho = 1.0 / x.amax().max(f64::MIN_POSITIVE);
    let scale_eps = (d as f64).sqrt();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for it in 1..=p.max_iter {
        x = project(&(&z - &u));
        let z_old = z.clone();
        let shifted = &x + &u;
        let t = 1.0 / rho;
        z = shifted.map(|v| {
            let a = v.abs() - t;
            if a > 0.0 {
                a.copysign(v)
            } else {
                0.0
            }
        });
        u += &x - &z;

        primal = (&x - &z).norm();
        dual = rho * (&z - &z_old).norm();
        let eps_pri = p.tol * (scale_eps + x.norm().max(z.norm()));
        let eps_dual = p.tol * (scale_eps + rho * u.norm());

        if it % POLISH_EVERY == 0 || (primal <= eps_pri && dual <= eps_dual) {
            if let Some(xp) = polish(p, b, &z) {
                return Ok(BasisPursuitSolution {
                    x: xp,
                    iterations: it,
                    primal_residual: primal,
                    dual_residual: dual,
                    certified: true,
                });
            }
        }
        if primal <= eps_pri && dual <= eps_dual {
            return Ok(BasisPursuitSolution {
                x: x.iter().copied().collect(),
                iterations: it,
                primal_residual: primal,
                dual_residual: dual,
                certified: false,
            });
        }
        if it % POLISH_EVERY != 0 {
            continue;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            u /= 2.0;
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }
    Err(Error::BasisPursuit { iterations: p.max_iter, primal, dual })
}

/// Pivot and optimality tolerances of the simplex solver.
const PIVOT_TOL: f64 = 1e-9;
const REDUCED_COST_TOL: f64 = 1e-10;
/// Refactor the basis inverse every this many pivots.
const REFACTOR_EVERY: usize = 64;
/// Relative size of the phase-2 right-hand-side perturbation.
const PERTURBATION: f64 = 1e-9;
/// Switch to Bland's rule after this many pivots without progress.
const STALL_LIMIT: usize = 50;

/// Revised simplex state. Structural column `k < d` is `+a_k`, `d <= k < 2d`
/// is `-a_{k-d}`, and `2d + i` is the artificial unit column of row `i`. Rows
/// are sign-flipped so that the right-hand side is nonnegative.
struct Tableau<'a> {
    a: &'a DMatrix<f64>,
    /// Row signs applied to `A` and `b`.
    sign: Vec<f64>,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    x_b: DVector<f64>,
    pivots: usize,
}

impl<'a> Tableau<'a> {
    fn new(a: &'a DMatrix<f64>, b: &DVector<f64>) -> Self {
        let (m, d) = a.shape();
        let sign: Vec<f64> = b.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs = b.component_mul(&DVector::from_column_slice(&sign));
        Self {
            a,
            sign,
            x_b: rhs.clone(),
            rhs,
            basis: (0..m).map(|i| 2 * d + i).collect(),
            binv: DMatrix::identity(m, m),
            pivots: 0,
        }
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn column(&self, k: usize) -> DVector<f64> {
        let (m, d) = self.a.shape();
        if k >= 2 * d {
            let mut e = DVector::zeros(m);
            e[k - 2 * d] = 1.0;
            return e;
        }
        let (j, s) = if k < d { (j_of(k, d), 1.0) } else { (j_of(k, d), -1.0) };
        let mut c = self.a.column(j).into_owned();
        for (ci, sg) in c.iter_mut().zip(&self.sign) {
            *ci *= s * sg;
        }
        c
    }

    /// `B^{-1}` and `x_B` recomputed from the basis columns.
    fn refactor(&mut self) -> Result<()> {
        let m = self.basis.len();
        let mut bm = DMatrix::zeros(m, m);
        for (i, &k) in self.basis.iter().enumerate() {
            bm.set_column(i, &self.column(k));
        }
        self.binv = bm.try_inverse().ok_or_else(|| Error::Consistency("simplex basis became singular".into()))?;
        self.x_b = &self.binv * &self.rhs;
        Ok(())
    }

    /// `pi^T A_k` for every structural `+a_j`, from `pi = B^{-T} c_B`.
    fn prices(&self, pi: &DVector<f64>) -> DVector<f64> {
        let signed = pi.component_mul(&DVector::from_column_slice(&self.sign));
        self.a.tr_mul(&signed)
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &DVector<f64>) -> Result<()> {
        let theta = self.x_b[r] / u[r];
        self.x_b.axpy(-theta, u, 1.0);
        self.x_b[r] = theta;
        let pivot_row = self.binv.row(r) / u[r];
        for i in 0..u.len() {
            if i != r && u[i] != 0.0 {
                let upd = &pivot_row * u[i];
                let mut row = self.binv.row_mut(i);
                row -= upd;
            }
        }
        self.binv.set_row(r, &pivot_row);
        self.basis[r] = entering;
        self.pivots += 1;
        if self.pivots.is_multiple_of(REFACTOR_EVERY) {
            self.refactor()?;
        }
        Ok(())
    }

    fn objective(&self, cost: &impl Fn(usize) -> f64) -> f64 {
        self.basis.iter().zip(self.x_b.iter()).map(|(&k, x)| cost(k) * x).sum()
    }

    /// Runs simplex pivots for the given costs until optimal or until the
    /// objective is at most `good_enough`. Artificial columns never enter.
    fn optimize(&mut self, cost: impl Fn(usize) -> f64, good_enough: f64, max_pivots: usize) -> Result<()> {
        let d = self.dim();
        let m = self.basis.len();
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if self.objective(&cost) <= good_enough {
                return Ok(());
            }
            let c_b = DVector::from_iterator(m, self.basis.iter().map(|&k| cost(k)));
            let pi = self.binv.tr_mul(&c_b);
            let w = self.prices(&pi);
            let bland = stall >= STALL_LIMIT;
            let mut entering: Option<(usize, f64)> = None;
            for k in 0..2 * d {
                let wk = if k < d { w[k] } else { -w[k - d] };
                let rc = cost(k) - wk;
                if rc < -REDUCED_COST_TOL {
                    match entering {
                        None => entering = Some((k, rc)),
                        Some((_, best)) if !bland && rc < best => entering = Some((k, rc)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((e, _)) = entering else {
                return Ok(());
            };
            if self.pivots >= max_pivots {
                return Err(Error::BasisPursuit { iterations: self.pivots, primal: 0.0, dual: f64::NAN });
            }
            let u = &self.binv * self.column(e);
            let umax = u.amax();
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if u[i] > PIVOT_TOL * umax.max(1.0) {
                    let ratio = self.x_b[i].max(0.0) / u[i];
                    let better = match leave {
                        None => true,
                        Some((r, best)) => {
                            if bland {
                                ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                            } else {
                                ratio < best - 1e-12 || (ratio <= best + 1e-12 && u[i] > u[r])
                            }
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Consistency("basis pursuit LP reported unbounded".into()));
            };
            self.pivot(r, e, &u)?;
            let obj = self.objective(&cost);
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                last_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    /// Shifts every basic value up by a tiny, row-dependent amount and moves
    /// the right-hand side to match. Breaks the ties in the ratio test that
    /// make heavily degenerate problems stall.
    fn perturb(&mut self, scale: f64) {
        let m = self.basis.len();
        let mut rhs = DVector::zeros(m);
        for i in 0..m {
            let jitter = (i as f64 * 0.618_033_988_749_895).fract();
            self.x_b[i] = self.x_b[i].max(0.0) + scale * (1.0 + jitter);
            rhs.axpy(self.x_b[i], &self.column(self.basis[i]), 1.0);
        }
        self.rhs = rhs;
    }

    /// Degenerate pivots that swap basic artificials (all at zero) for
    /// structural columns. Rows where no structural column has a nonzero
    /// entry are redundant; their artificial stays basic at zero.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let d = self.dim();
        for r in 0..self.basis.len() {
            if self.basis[r] < 2 * d {
                continue;
            }
            let row = self.binv.row(r).transpose();
            let w = self.prices(&row);
            let (j, v) = w
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |best, (j, v)| if v.abs() > best.1.abs() { (j, *v) } else { best });
            if v.abs() > PIVOT_TOL {
                let k = if v > 0.0 { j } else { j + d };
                let u = &self.binv * self.column(k);
                self.x_b[r] = 0.0;
                self.pivot(r, k, &u)?;
            }
        }
        Ok(())
    }
}

fn j_of(k: usize, d: usize) -> usize {
    if k < d {
        k
    } else {
        k - d
    }
}

fn simplex(p: &BasisPursuitProblem, b: &DVector<f64>) -> Result<BasisPursuitSolution> {
    let (_, d) = p.a.shape();
    let mut t = Tableau::new(&p.a, b);
    let bn = b.norm();
    // Phase 1: minimize the sum of the artificials.
    // Degenerate instances (noiseless sparse b) can pivot for a long time
    // at zero infeasibility, so stop as soon as it is negligible.
    t.optimize(|k| if k >= 2 * d { 1.0 } else { 0.0 }, 1e-12 * (1.0 + bn), p.max_iter)?;
    t.refactor()?;
    let infeasibility: f64 = t.basis.iter().zip(t.x_b.iter()).filter(|(&k, _)| k >= 2 * d).map(|(_, x)| x.abs()).sum();
    if infeasibility > p.tol * (1.0 + bn) {
        return Err(invalid("b", format!("A z = b is infeasible (residual {infeasibility:.3e})")));
    }
    t.drive_out_artificials()?;
    // Phase 2: minimize ||z||_1; remaining artificials sit on redundant rows.
    // Runs on a perturbed right-hand side, then re-solves for the basic
    // values with the true one.
    t.refactor()?;
    let rhs = t.rhs.clone();
    t.perturb(PERTURBATION * (1.0 + rhs.amax()));
    t.optimize(|k| if k >= 2 * d { 0.0 } else { 1.0 }, f64::NEG_INFINITY, p.max_iter)?;
    t.rhs = rhs;
    t.refactor()?;

    let mut x = vec![0.0; d];
    for (&k, &v) in t.basis.iter().zip(t.x_b.iter()) {
        if k < d {
            x[k] += v.max(0.0);
        } else if k < 2 * d {
            x[k - d] -= v.max(0.0);
        }
    }
    let primal = (&p.a * DVector::from_column_slice(&x) - b).norm();
    // Dual certificate: y = B^{-T} c_B in the original row signs.
    let c_b = DVector::from_iterator(t.basis.len(), t.basis.iter().map(|&k| if k >= 2 * d { 0.0 } else { 1.0 }));
    let dual_inf = t.prices(&t.binv.tr_mul(&c_b)).amax();
    if !(primal <= p.tol * (1.0 + bn)) {
        return Err(Error::BasisPursuit { iterations: t.pivots, primal, dual: dual_inf - 1.0 });
    }
    Ok(BasisPursuitSolution {
        x,
        iterations: t.pivots,
        primal_residual: primal,
        dual_residual: (dual_inf - 1.0).max(0.0),
        certified: dual_inf <= 1.0 + CERT_SLACK.max(1e-7),
    })
}

/// `m = 1`: the optimum puts all mass on the column of largest magnitude.
fn single_row(p: &BasisPursuitProblem) -> BasisPursuitSolution {
    let (_, d) = p.a.shape();
    let (j, aj) =
        (0..d)
            .map(|j| (j, p.a[(0, j)]))
            .fold((0, 0.0_f64), |best, (j, v)| if v.abs() > best.1.abs() { (j, v) } else { best });
    let mut x = vec![0.0; d];
    x[j] = p.b[0] / aj;
    BasisPursuitSolution { x, iterations: 0, primal_residual: 0.0, dual_residual: 0.0, certified: true }
}

/// Exact solve on the support of `z`, returned only with an optimality certificate.
fn polish(p: &BasisPursuitProblem, b: &DVector<f64>, z: &DVector<f64>) -> Option<Vec<f64>> {
    let (m, d) = p.a.shape();
    let support: Vec<usize> = (0..d).filter(|&j| z[j] != 0.0).collect();
    let k = support.len();
    if k == 0 || k > m {
        return None;
    }
    let a_s = p.a.select_columns(&support);
    let normal = a_s.transpose() * &a_s;
    let chol = normal.cholesky()?;
    let x_s = chol.solve(&(a_s.transpose() * b));
    let resid = (&a_s * &x_s - b).norm();
    if !(resid <= p.tol * (1.0 + b.norm())) {
        return None;
    }
    if x_s.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let signs = x_s.map(f64::signum);
    // Least-norm y with A_S^T y = sign(x_S).
    let y = &a_s * chol.solve(&signs);
    let dual_inf = (p.a.transpose() * &y).amax();
    if !(dual_inf <= 1.0 + CERT_SLACK) {
        return None;
    }
    let mut x = vec![0.0; d];
    for (pos, &j) in support.iter().enumerate() {
        x[j] = x_s[pos];
    }
    Some(x)
}
