//! Experiment runners behind the CLI subcommands.
//!
//! Every runner reads its parameters from a [`Config`], expands the grid and
//! fans out over `(cell, trial)` pairs. Trial `t` of cell `c` draws all of its
//! randomness from stream `(seed, 0) / c / 1 / t`, and rows are collected in
//! `(cell, trial)` order, so output is identical for any thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use spdp_core::hard_instances::{greedy_sparse_packing, packing_hard_dataset, packing_size_bound, Packing};
use spdp_core::mean_estimation::{BpSolver, Branch, MeanMechanism, ProjectionConfig, RecoveryConfig};
use spdp_core::selection::{
    boost, lambda_recommend, output_perturbation, sparse_exp_mechanism, BoostConfig, ExpMechConfig, ExpWeight,
    LambdaRegime, TauRule,
};
use spdp_core::sgd::{
    check_pathwise_regret, check_pathwise_stationarity, recommended_hyperparams, run_bias_reduced_sgd, Mode, SgdConfig,
};
use spdp_core::vector::{dist2, norm_inf, sub};
use spdp_core::{PrivacyParams, RngStream};

use crate::calibrate::ConstantTable;
use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::grid::{Cell, Grid};
use crate::problems::{make_problem_with, sparse_unit_points, PointSpec, Problem, ProblemKind};
use crate::results::{write_rows, write_summary, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MeanEst,
    Sgd,
    Boost,
    OutputPert,
    ExpMech,
    HardInstance,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] =
        [Self::MeanEst, Self::Sgd, Self::Boost, Self::OutputPert, Self::ExpMech, Self::HardInstance];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MeanEst => "mean-est",
            Self::Sgd => "sgd",
            Self::Boost => "boost",
            Self::OutputPert => "output-pert",
            Self::ExpMech => "exp-mech",
            Self::HardInstance => "hard-instance",
        }
    }

    /// Grid values used when the config does not set them.
    pub fn default_cell(&self) -> Cell {
        let c = |n, d, s, delta| Cell { n, d, s, eps: 1.0, delta };
        match self {
            Self::MeanEst => c(1024, 1024, 8, 1e-6),
            Self::Sgd | Self::Boost => c(1024, 1024, 4, 1e-8),
            Self::OutputPert => c(1024, 1024, 4, 1e-6),
            Self::ExpMech => c(256, 6, 2, 0.0),
            Self::HardInstance => c(256, 32, 4, 1e-6),
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| HarnessError::Value {
            key: "experiment".into(),
            reason: format!("unknown experiment `{s}`"),
        })
    }
}

/// Pass count for one `*_ok` / `*_holds` metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub metric: String,
    pub passed: usize,
    pub total: usize,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(rows: Vec<ResultRow>) -> Self {
        let mut checks: Vec<Check> = Vec::new();
        for r in rows.iter().filter(|r| r.metric.ends_with("_ok") || r.metric.ends_with("_holds")) {
            let i = match checks.iter().position(|c| c.metric == r.metric) {
                Some(i) => i,
                None => {
                    checks.push(Check { metric: r.metric.to_string(), passed: 0, total: 0 });
                    checks.len() - 1
                }
            };
            checks[i].total += 1;
            checks[i].passed += usize::from(r.value == 1.0);
        }
        Self { rows, checks }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }

    /// Values of `metric` in row order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.metric == metric).map(|r| r.value).collect()
    }
}

type Metrics = Vec<(&'static str, f64)>;

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs `trial` on every `(cell, trial index)` pair. `prepare` builds per-cell
/// state once, from stream `c / 0`.
pub fn run_grid<S, P, F>(
    experiment: &'static str,
    cells: &[Cell],
    trials: usize,
    seed: u64,
    prepare: P,
    trial: F,
) -> Result<Vec<ResultRow>>
where
    S: Send + Sync,
    P: Fn(&Cell, &RngStream) -> Result<S> + Sync,
    F: Fn(&Cell, &S, &RngStream) -> Result<Metrics> + Sync,
{
    let root = RngStream::new(seed, 0);
    let states: Vec<S> =
        cells.par_iter().enumerate().map(|(ci, c)| prepare(c, &root.path(&[ci as u64, 0]))).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let per_job: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(ci, t)| {
            let metrics = trial(&cells[ci], &states[ci], &root.path(&[ci as u64, 1, t as u64]))?;
            Ok(metrics
                .into_iter()
                .map(|(metric, value)| ResultRow {
                    experiment,
                    cell: cells[ci],
                    cell_index: ci,
                    trial: t,
                    metric,
                    value,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

fn privacy(c: &Cell) -> Result<PrivacyParams> {
    Ok(if c.delta == 0.0 { PrivacyParams::pure(c.eps)? } else { PrivacyParams::new(c.eps, c.delta)? })
}

/// `mechanism = projection | cs`, with `c_m` for the latter.
pub fn mechanism_from(cfg: &Config, default: &str) -> Result<MeanMechanism> {
    let name = cfg.get("mechanism").unwrap_or(default);
    match name {
        "projection" => Ok(MeanMechanism::Projection(ProjectionConfig::default())),
        "cs" => Ok(MeanMechanism::CompressedSensing(RecoveryConfig {
            c_m: cfg.get_real("c_m", 1.0)?,
            solver: match cfg.get("bp_solver").unwrap_or("simplex") {
                "simplex" => BpSolver::Simplex,
                "admm" => BpSolver::Admm,
                other => {
                    return Err(HarnessError::Value {
                        key: "bp_solver".into(),
                        reason: format!("expected simplex or admm, got `{other}`"),
                    })
                }
            },
            ..RecoveryConfig::default()
        })),
        _ => Err(HarnessError::Value {
            key: "mechanism".into(),
            reason: format!("expected projection or cs, got `{name}`"),
        }),
    }
}

pub fn mode_from(cfg: &Config) -> Result<Mode> {
    match cfg.get("mode").unwrap_or("convex") {
        "convex" => Ok(Mode::Convex),
        "nonconvex" => Ok(Mode::Nonconvex),
        m => {
            Err(HarnessError::Value { key: "mode".into(), reason: format!("expected convex or nonconvex, got `{m}`") })
        }
    }
}

fn problem_kind(cfg: &Config, default: ProblemKind) -> Result<(ProblemKind, PointSpec)> {
    let kind = cfg.get_or("problem", default)?;
    let mut pts = PointSpec::default_for(kind);
    pts.popularity = cfg.get_or("points.popularity", pts.popularity)?;
    pts.signs = cfg.get_or("points.signs", pts.signs)?;
    Ok((kind, pts))
}

fn build(kind: ProblemKind, pts: PointSpec, c: &Cell, stream: &RngStream) -> Result<Problem> {
    make_problem_with(kind, pts, c.d, c.s, c.n, &mut stream.rng())
}

fn excess(p: &Problem, x: &[f64]) -> Result<f64> {
    p.excess_risk(x).ok_or_else(|| HarnessError::Value {
        key: "problem".into(),
        reason: format!("`{}` has no reference optimum", p.kind.as_str()),
    })
}

/// Dispatches on `kind`.
pub fn run(kind: ExperimentKind, cfg: &Config) -> Result<Report> {
    let seed = cfg.get_or("seed", 0u64)?;
    let trials = cfg.get_count("trials", 10)?;
    if trials == 0 {
        return Err(HarnessError::Value { key: "trials".into(), reason: "must be at least 1".into() });
    }
    let cells = Grid::from_config(cfg, kind.default_cell(), &[])?.cells()?;
    let name = kind.as_str();
    let rows = match kind {
        ExperimentKind::MeanEst => mean_est(name, cfg, &cells, trials, seed)?,
        ExperimentKind::Sgd => sgd(name, cfg, &cells, trials, seed)?,
        ExperimentKind::Boost => boosting(name, cfg, &cells, trials, seed)?,
        ExperimentKind::OutputPert => output_pert(name, cfg, &cells, trials, seed)?,
        ExperimentKind::ExpMech => exp_mech(name, cfg, &cells, trials, seed)?,
        ExperimentKind::HardInstance => hard_instance(name, cfg, &cells, trials, seed)?,
    };
    Ok(Report::new(rows))
}

/// Metrics: `l2_error`, `noise_linf`, and for the projection branches
/// `bound_gap` (`sqrt(2 L ||xi||_inf sqrt s) - ||zhat - zbar||_2`) and
/// `bound_holds`.
fn mean_est(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let mech = mechanism_from(cfg, "projection")?;
    let defaults = PointSpec::default_for(ProblemKind::Linear);
    let pop = cfg.get_or("points.popularity", defaults.popularity)?;
    let signs = cfg.get_or("points.signs", defaults.signs)?;
    run_grid(
        name,
        cells,
        trials,
        seed,
        |_, _| Ok(()),
        |c, _, st| {
            let data = sparse_unit_points(c.n, c.d, c.s, pop, signs, &mut st.substream(0).rng())?;
            let zbar = data.mean()?;
            let out = mech.apply(&zbar, privacy(c)?, c.n, 1.0, c.s, &mut st.substream(1).rng())?;
            let err = dist2(&out.estimate, &zbar);
            let mut m: Metrics = vec![("l2_error", err), ("noise_linf", out.noise_linf)];
            if matches!(out.branch, Branch::Laplace | Branch::GaussianProjection) {
                let bound = (2.0 * out.noise_linf * (c.s as f64).sqrt()).sqrt();
                m.push(("bound_gap", bound - err));
                m.push(("bound_holds", flag(err <= bound + 1e-7)));
            }
            Ok(m)
        },
    )
}

fn default_kind(mode: Mode) -> ProblemKind {
    match mode {
        Mode::Convex => ProblemKind::SparseLeastSquares,
        Mode::Nonconvex => ProblemKind::NonconvexSmooth,
    }
}

/// Metrics: `utility` (excess risk, or squared gradient norm in nonconvex
/// mode), `threshold` (`U / tau`), `success`, `stopping_time`, `eta`,
/// `eps_spent`, `delta_spent`, `budget_ok` and, when checkable, `pathwise_ok`.
fn sgd(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let mode = mode_from(cfg)?;
    let mech = mechanism_from(cfg, "cs")?;
    let (kind, pts) = problem_kind(cfg, default_kind(mode))?;
    let table = ConstantTable::from_config(cfg)?;
    let pathwise = cfg.get_or("check_pathwise", true)?;
    let trace_dir = cfg.get("trace.dir").map(PathBuf::from);
    if let Some(dir) = &trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let record = pathwise || trace_dir.is_some();
    run_grid(
        name,
        cells,
        trials,
        seed,
        |_, _| Ok(()),
        |c, _, st| {
            let p = build(kind, pts, c, &st.substream(0))?;
            let pp = PrivacyParams::new(c.eps, c.delta)?;
            let hp = recommended_hyperparams(p.loss.constants(), c.n, pp, mode, &table.hyper)?;
            let x0 = vec![0.0; c.d];
            let sgd_cfg = SgdConfig { mechanism: mech, record_trace: record };
            let tr = run_bias_reduced_sgd(
                &p.data,
                &x0,
                pp,
                hp.eta,
                p.loss.as_ref(),
                &p.set,
                mode,
                &st.substream(1),
                &sgd_cfg,
            )?;
            let utility = match mode {
                Mode::Convex => excess(&p, &tr.output)?,
                Mode::Nonconvex => p.grad_norm(&tr.output).powi(2),
            };
            let (e, d) = tr.privacy_spent();
            let f = &tr.filter;
            let budget_ok = e <= c.eps * (1.0 + 1e-12)
                && d <= c.delta * (1.0 + 1e-12)
                && f.composition(f.sum_sq()) <= 0.5
                && f.sum_lin() <= 0.25;
            let mut m: Metrics = vec![
                ("utility", utility),
                ("threshold", hp.threshold()),
                ("success", flag(utility <= hp.threshold())),
                ("stopping_time", tr.stopping_time as f64),
                ("eta", hp.eta),
                ("eps_spent", e),
                ("delta_spent", d),
                ("budget_ok", flag(budget_ok)),
            ];
            if pathwise {
                let holds = match mode {
                    Mode::Convex => Some(
                        check_pathwise_regret(&tr, p.loss.as_ref(), &p.data, p.x_star.as_deref().unwrap_or(&x0))?.holds,
                    ),
                    Mode::Nonconvex => {
                        check_pathwise_stationarity(&tr, p.loss.as_ref(), &p.data).ok().map(|s| s.realized.holds)
                    }
                };
                if let Some(h) = holds {
                    m.push(("pathwise_ok", flag(h)));
                }
            }
            if let Some(dir) = &trace_dir {
                let stem = format!("trace_n{}_d{}_s{}_seed{}_{:016x}", c.n, c.d, c.s, st.seed(), st.stream());
                std::fs::write(dir.join(format!("{stem}.csv")), tr.to_csv(p.loss.as_ref(), &p.data)?)?;
                std::fs::write(dir.join(format!("{stem}.budget.csv")), tr.filter.to_csv())?;
            }
            Ok(m)
        },
    )
}

/// Metrics: `utility` (excess risk, or gradient norm in nonconvex mode),
/// `threshold` (`U/tau` at the inner budget, square-rooted in nonconvex mode,
/// plus twice the score-noise level `lambda ln(2K/beta)`), `success`, `runs`,
/// `failed_runs`.
fn boosting(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let mode = mode_from(cfg)?;
    let mech = mechanism_from(cfg, "cs")?;
    let (kind, pts) = problem_kind(cfg, default_kind(mode))?;
    let table = ConstantTable::from_config(cfg)?;
    let beta = cfg.get_real("beta", 0.1)?;
    let gamma: Option<f64> = cfg.get_parsed("gamma")?;
    run_grid(
        name,
        cells,
        trials,
        seed,
        |_, _| Ok(()),
        |c, _, st| {
            let p = build(kind, pts, c, &st.substream(0))?;
            let pp = PrivacyParams::new(c.eps, c.delta)?;
            let loss = p.loss.as_ref();
            let bc = match gamma {
                Some(g) => BoostConfig::with_gamma(pp, g, mode, loss, c.n)?,
                None => BoostConfig::new(pp, beta, mode, loss, c.n)?,
            };
            let hp = recommended_hyperparams(loss.constants(), c.n, bc.inner, mode, &table.hyper)?;
            let x0 = vec![0.0; c.d];
            let sgd_cfg = SgdConfig { mechanism: mech, record_trace: false };
            let out = boost(&p.data, &x0, hp.eta, loss, &p.set, mode, &bc, &sgd_cfg, &st.substream(1))?;
            let alpha_prime = bc.lambda_score * (2.0 * bc.k as f64 / beta).ln();
            let (utility, base) = match mode {
                Mode::Convex => (excess(&p, &out.output)?, hp.threshold()),
                Mode::Nonconvex => (p.grad_norm(&out.output), hp.threshold().sqrt()),
            };
            let threshold = base + 2.0 * alpha_prime;
            Ok(vec![
                ("utility", utility),
                ("threshold", threshold),
                ("success", flag(utility <= threshold)),
                ("runs", out.runs.len() as f64),
                ("failed_runs", out.runs.iter().filter(|r| r.is_err()).count() as f64),
            ])
        },
    )
}

/// Metrics: `excess_risk` (unregularized), `lambda`, `sigma`, `linf_gap`
/// (`||xhat - x*_lambda||_inf`), `linf_bound_holds`, `solver_residual`.
fn output_pert(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let (kind, pts) = problem_kind(cfg, ProblemKind::Linear)?;
    let regime: LambdaRegime = cfg.get_or("lambda_regime", LambdaRegime::ErmApprox)?;
    let fixed: Option<f64> = cfg.get_parsed("lambda")?;
    let beta = cfg.get_real("beta", 0.1)?;
    run_grid(
        name,
        cells,
        trials,
        seed,
        |_, _| Ok(()),
        |c, _, st| {
            let p = build(kind, pts, c, &st.substream(0))?;
            let pp = privacy(c)?;
            let lambda = match fixed {
                Some(l) => l,
                None => lambda_recommend(p.loss.constants(), c.n, pp, beta, regime)?,
            };
            let r = output_perturbation(
                &p.data,
                pp,
                lambda,
                p.loss.as_ref(),
                &p.set,
                &st.substream(1),
                &Default::default(),
            )?;
            Ok(vec![
                ("excess_risk", excess(&p, &r.x_hat)?),
                ("lambda", lambda),
                ("sigma", r.sigma),
                ("linf_gap", norm_inf(&sub(&r.x_hat, &r.x_star))),
                ("linf_bound_holds", flag(r.linf_bound_holds)),
                ("solver_residual", r.solver_residual),
            ])
        },
    )
}

/// Metrics: `excess_risk`, `tau`, `tau_clamped`, `net_size`.
fn exp_mech(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let (kind, pts) = problem_kind(cfg, ProblemKind::Linear)?;
    let beta = cfg.get_real("beta", 0.1)?;
    let weight = match cfg.get("weight").unwrap_or("standard") {
        "standard" => ExpWeight::Standard,
        "as-written" => ExpWeight::AsWritten,
        w => return Err(HarnessError::Value { key: "weight".into(), reason: format!("unknown weight `{w}`") }),
    };
    let rule = match cfg.get("tau_rule").unwrap_or("literal") {
        "literal" => TauRule::Literal,
        "balanced" => TauRule::Balanced,
        r => return Err(HarnessError::Value { key: "tau_rule".into(), reason: format!("unknown rule `{r}`") }),
    };
    let mc = ExpMechConfig {
        cap: cfg.get_count("cap", ExpMechConfig::default().cap)?,
        weight,
        rule,
        tau: cfg.get_parsed("tau")?,
    };
    run_grid(
        name,
        cells,
        trials,
        seed,
        |_, _| Ok(()),
        |c, _, st| {
            let p = build(kind, pts, c, &st.substream(0))?;
            let out = sparse_exp_mechanism(&p.data, c.eps, beta, p.loss.as_ref(), &p.set, &st.substream(1), &mc)?;
            Ok(vec![
                ("excess_risk", excess(&p, &out.x)?),
                ("tau", out.tau.tau),
                ("tau_clamped", flag(out.tau.clamped)),
                ("net_size", out.net.len() as f64),
            ])
        },
    )
}

/// Runs the mean mechanism on `n` copies of a random packing point. Metrics:
/// `l2_error`, `packing_size`, `min_pairwise_l2`, `packing_ok` (separation at
/// least `1/sqrt 2`, and size at least `(d/s - 1/2)^{s/2}` unless the cap was
/// hit or the supports were sampled). With `data.dir` set, every generated
/// dataset is written there in the core text format.
fn hard_instance(name: &'static str, cfg: &Config, cells: &[Cell], trials: usize, seed: u64) -> Result<Vec<ResultRow>> {
    let mech = mechanism_from(cfg, "projection")?;
    let cap = cfg.get_count("packing.cap", 2000)?;
    let samples = cfg.get_count("packing.max_samples", 10_000)?;
    let data_dir = cfg.get("data.dir").map(PathBuf::from);
    if let Some(dir) = &data_dir {
        std::fs::create_dir_all(dir)?;
    }
    let prepare = |c: &Cell, st: &RngStream| -> Result<Packing> {
        Ok(greedy_sparse_packing(c.s, c.d, cap, samples, &mut st.rng())?)
    };
    run_grid(name, cells, trials, seed, prepare, |c, pk, st| {
        let (data, _) = packing_hard_dataset(pk, c.n, &mut st.substream(0).rng())?;
        if let Some(dir) = &data_dir {
            let stem = format!("hard_n{}_d{}_s{}_seed{}_{:016x}", c.n, c.d, c.s, st.seed(), st.stream());
            std::fs::write(dir.join(format!("{stem}.txt")), data.to_text())?;
        }
        let zbar = data.mean()?;
        let out = mech.apply(&zbar, privacy(c)?, c.n, 1.0, c.s, &mut st.substream(1).rng())?;
        let size = pk.points.len();
        let big_enough = !pk.exhaustive || size >= cap || size as f64 >= packing_size_bound(c.s, c.d);
        let separated = size < 2 || pk.min_pairwise_l2 >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12;
        Ok(vec![
            ("l2_error", dist2(&out.estimate, &zbar)),
            ("packing_size", size as f64),
            ("min_pairwise_l2", pk.min_pairwise_l2),
            ("packing_ok", flag(big_enough && separated)),
        ])
    })
}

/// `results.csv` -> `results.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// Writes the trial file to `out` and the summary next to it.
pub fn write_report(out: &Path, report: &Report) -> Result<PathBuf> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_rows(std::fs::File::create(out)?, &report.rows)?;
    let sp = summary_path(out);
    write_summary(std::fs::File::create(&sp)?, &report.rows)?;
    Ok(sp)
}
