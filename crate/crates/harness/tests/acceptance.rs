//! Acceptance run: one `[PASS]` / `[FAIL]` line per criterion.
//!
//! Run with `cargo test -p spdp-harness --test acceptance`. Pass criterion
//! numbers after `--` to run a subset. Exits nonzero if any selected
//! criterion fails.

use std::time::{Duration, Instant};

use rand::Rng;
use spdp_core::accounting::{simulate_stopping, step_cost, stopping_time_stats};
use spdp_core::bias_reduction::{bias_reduced_gradient, sample_batches, BatchDraw};
use spdp_core::geometry::project_l1_ball;
use spdp_core::hard_instances::{block_diagonal_dataset, block_diagonal_mean, greedy_sparse_packing};
use spdp_core::loss::{LinearLoss, SparseLeastSquares};
use spdp_core::mean_estimation::{
    gaussian_l1_recovery, BranchPolicy, MeanMechanism, NoiseMode, ProjectionConfig, RecoveryConfig,
};
use spdp_core::noise::{tgeom_pmf, TGeom};
use spdp_core::selection::{sparse_exp_mechanism, sparsification_gap, ExpMechConfig};
use spdp_core::vector::SparseVector;
use spdp_core::{Dataset, DatasetBounds, PrivacyParams, RngStream};
use spdp_harness::calibrate::FROZEN_C_PRIME;
use spdp_harness::problems::{make_problem, sparse_unit_points, Popularity, ProblemKind, Signs};
use spdp_harness::{fit_slope, run, Config, ExperimentKind, Report};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<(bool, String), String>;

/// Budget flags gathered from every SGD run made here.
#[derive(Default)]
struct BudgetTally {
    passed: usize,
    total: usize,
}

impl BudgetTally {
    fn absorb(&mut self, r: &Report) {
        for v in r.values("budget_ok") {
            self.total += 1;
            self.passed += usize::from(v == 1.0);
        }
    }
}

fn config(lines: &[&str]) -> Config {
    Config::parse(&lines.join("\n")).expect("acceptance config")
}

fn experiment(kind: ExperimentKind, lines: &[&str]) -> Result<Report, String> {
    run(kind, &config(lines)).map_err(|e| format!("{}: {e}", kind.as_str()))
}

fn count(r: &Report, metric: &str) -> (usize, usize) {
    let v = r.values(metric);
    (v.iter().filter(|x| **x == 1.0).count(), v.len())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn slope_of(r: &Report, metric: &str) -> Result<f64, String> {
    let pairs: Vec<(f64, f64)> =
        r.rows.iter().filter(|x| x.metric == metric).map(|x| (x.cell.n as f64, x.value)).collect();
    fit_slope(&pairs).map(|f| f.slope).map_err(|e| e.to_string())
}

// 1
fn projection_bound() -> Outcome {
    let r = experiment(
        ExperimentKind::MeanEst,
        &[
            "n = 1024",
            "d = 1024",
            "s = 8",
            "eps = 1",
            "grid.delta = 0,1e-6",
            "trials = 500",
            "seed = 1",
            "mechanism = projection",
        ],
    )?;
    let (ok, total) = count(&r, "bound_holds");
    let laplace = r.rows.iter().filter(|x| x.metric == "bound_holds" && x.cell.delta == 0.0).count();
    Ok((
        ok == 1000 && total == 1000 && laplace == 500,
        format!("{} violations over {total} runs ({laplace} Laplace, {} Gaussian)", total - ok, total - laplace),
    ))
}

/// Sort-and-threshold projection onto the l1 ball.
fn l1_kkt_oracle(v: &[f64], r: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut theta) = (0.0, 0.0);
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - r) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Closest point among all face candidates `x_S = v_S - theta sign(v_S)` on
/// the boundary `||x||_1 = r`, found by enumerating supports.
fn l1_brute_force(v: &[f64], r: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return v.to_vec();
    }
    let d = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let sup: Vec<usize> = (0..d).filter(|j| mask >> j & 1 == 1).collect();
        let theta = (sup.iter().map(|&j| v[j].abs()).sum::<f64>() - r) / sup.len() as f64;
        if theta < 0.0 || sup.iter().any(|&j| v[j].abs() - theta < 0.0) {
            continue;
        }
        let mut x = vec![0.0; d];
        for &j in &sup {
            x[j] = v[j].signum() * (v[j].abs() - theta);
        }
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, x));
        }
    }
    best.expect("some face is feasible").1
}

// 2
fn l1_projection() -> Outcome {
    let mut rng = RngStream::new(2, 0).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..=4);
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let r = rng.random_range(0.05..3.0);
        let got = project_l1_ball(&v, r).map_err(|e| e.to_string())?.point;
        for oracle in [l1_kkt_oracle(&v, r), l1_brute_force(&v, r)] {
            for (a, b) in got.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e} over 10000 inputs")))
}

// 3
fn tgeom() -> Outcome {
    let mut rng = RngStream::new(3, 0).rng();
    let trials = 1_000_000usize;
    let mut notes = Vec::new();
    let mut ok = true;
    for m in [0usize, 1, 6] {
        let t = TGeom::new(m).map_err(|e| e.to_string())?;
        let denom = (m as f64 + 1.0).exp2() - 1.0;
        let sum: f64 = t.pmf().iter().sum();
        ok &= (sum - 1.0).abs() <= 4.0 * f64::EPSILON;
        for k in 0..=m {
            let want = ((m - k) as f64).exp2() / denom;
            ok &= (t.p(k) - want).abs() <= f64::EPSILON * want;
            ok &= tgeom_pmf(m, k).map_err(|e| e.to_string())? == t.p(k);
        }
        let mut counts = vec![0usize; m + 1];
        for _ in 0..trials {
            counts[t.sample(&mut rng)] += 1;
        }
        let mut worst: f64 = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let p = t.p(k);
            let se = (trials as f64 * p * (1.0 - p)).sqrt();
            let dev = (c as f64 - trials as f64 * p).abs();
            if se == 0.0 {
                ok &= dev == 0.0;
            } else {
                worst = worst.max(dev / se);
            }
        }
        ok &= worst <= 4.0;
        notes.push(format!("M={m}: sum-1={:.1e}, max |z|={worst:.2}", sum - 1.0));
    }
    Ok((ok, notes.join("; ")))
}

/// All ordered `k`-tuples of distinct indices below `n`.
fn ordered_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for t in ordered_tuples(n, k - 1) {
        for i in (0..n).filter(|i| !t.contains(i)) {
            let mut u = t.clone();
            u.push(i);
            out.push(u);
        }
    }
    out
}

// 4
fn debiasing() -> Outcome {
    // Exact enumeration, n = 4 (levels 0 and 1), noiseless mechanism.
    let mut rng = RngStream::new(4, 0).rng();
    let d = 5;
    let pts: Vec<SparseVector> =
        (0..4).map(|i| SparseVector::new(d, vec![(i, 0.6), ((i + 2) % d, -0.8)]).unwrap()).collect();
    let data =
        Dataset::new(pts.clone(), DatasetBounds { dim: d, sparsity: 2, norm_bound: 1.0 }).map_err(|e| e.to_string())?;
    let target: Vec<f64> = (0..d).map(|_| rng.random_range(-0.4..0.4)).collect();
    let loss = SparseLeastSquares::new(target, 2, 1.0, 1.0);
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    // Full gradient by hand: (<x, z> - <target, z>) z averaged.
    let mut grad = vec![0.0; d];
    for z in &pts {
        let resid = z.dot(&x) - loss.label(z);
        for (j, v) in z.iter() {
            grad[j] += resid * v / 4.0;
        }
    }
    let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
    let stream = RngStream::new(4, 1);
    let mut expect = vec![0.0; d];
    for level in 0..=1usize {
        let p_level = [2.0 / 3.0, 1.0 / 3.0][level];
        let batches = ordered_tuples(4, 2 << level);
        for b in &batches {
            for i in 0..4 {
                let draw = BatchDraw::new(4, level, b.clone(), i).map_err(|e| e.to_string())?;
                let g = bias_reduced_gradient(&x, &data, &draw, pp, &loss, &MeanMechanism::Exact, &stream)
                    .map_err(|e| e.to_string())?
                    .g;
                let w = p_level / batches.len() as f64 / 4.0;
                for j in 0..d {
                    expect[j] += w * g[j];
                }
            }
        }
    }
    let exact_err = expect.iter().zip(&grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // Monte Carlo with the projection mechanism, n = 256 linear losses.
    let (n, d, s) = (256, 8, 2);
    let data = sparse_unit_points(n, d, s, Popularity::Uniform, Signs::Random, &mut RngStream::new(4, 2).rng())
        .map_err(|e| e.to_string())?;
    let loss = LinearLoss::new(d, s, 1.0, 1.0);
    let mech = MeanMechanism::Projection(ProjectionConfig::default());
    let zbar = data.mean().map_err(|e| e.to_string())?;
    let x = vec![0.0; d];
    let root = RngStream::new(4, 3);
    let reps = 100_000;
    let m = TGeom::for_dataset_size(n).map_err(|e| e.to_string())?.m();
    let (mut sg, mut sg2, mut sf, mut sf2) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for t in 0..reps {
        let st = root.path(&[0, t as u64]);
        let draw = sample_batches(n, m, &mut st.substream(9).rng()).map_err(|e| e.to_string())?;
        let g = bias_reduced_gradient(&x, &data, &draw, pp, &loss, &mech, &st).map_err(|e| e.to_string())?.g;
        let f = mech
            .apply(&zbar, pp.split(0.25, 0.25), n, 1.0, s, &mut root.path(&[1, t as u64]).rng())
            .map_err(|e| e.to_string())?
            .estimate;
        for j in 0..d {
            sg[j] += g[j];
            sg2[j] += g[j] * g[j];
            sf[j] += f[j];
            sf2[j] += f[j] * f[j];
        }
    }
    let r = reps as f64;
    let mut worst_z: f64 = 0.0;
    for j in 0..d {
        let (mg, mf) = (sg[j] / r, sf[j] / r);
        let vg = (sg2[j] / r - mg * mg).max(0.0);
        let vf = (sf2[j] / r - mf * mf).max(0.0);
        let se = ((vg + vf) / r).sqrt();
        worst_z = worst_z.max((mg - mf).abs() / se);
    }
    Ok((
        exact_err <= 1e-12 && worst_z <= 3.0,
        format!("enumeration error {exact_err:.1e}; Monte Carlo max |z| = {worst_z:.2} over {d} coordinates"),
    ))
}

// 5
fn stopping_time() -> Outcome {
    let pp = PrivacyParams::new(1.0, 1e-8).unwrap();
    let st = stopping_time_stats(1024, pp, FROZEN_C_PRIME, 500, &mut RngStream::new(5, 0).rng())
        .map_err(|e| e.to_string())?;
    let (lo, hi) = (0.9 * st.lower_bound, 1.1 * st.upper_bound);
    Ok((
        st.mean >= lo && st.mean <= hi && st.frac_below <= 0.30,
        format!(
            "E[T] = {:.1} in [{lo:.1}, {hi:.1}]; P[T <= {:.1}] = {:.3} with C' = {FROZEN_C_PRIME:.4}",
            st.mean, st.threshold, st.frac_below
        ),
    ))
}

// 6
fn budget_safety(tally: &BudgetTally) -> Outcome {
    let mut violations = 0usize;
    let mut runs = 0usize;
    let mut rng = RngStream::new(6, 0).rng();
    for (n, eps, delta) in [(1024, 1.0, 1e-8), (256, 0.5, 1e-6), (4096, 1.0, 1e-8), (64, 2.0, 1e-4)] {
        let pp = PrivacyParams::new(eps, delta).unwrap();
        for _ in 0..500 {
            let sched = simulate_stopping(n, pp, &mut rng).map_err(|e| e.to_string())?;
            runs += 1;
            let st = &sched.state;
            // Replay the log with the filter formula written out.
            let a = |k: usize| (3.0 * (k as f64 + 1.0).exp2() + 1.0) / (16.0 * n as f64);
            let q: f64 = st.log().iter().map(|&k| a(k) * a(k)).sum();
            let lin: f64 = st.log().iter().map(|&k| a(k)).sum();
            let comp = (2.0 * (4.0 / delta).ln() * q).sqrt() + 0.5 * eps * q;
            let mut bad = st.verify().is_err() || comp > 0.5 || lin > 0.25;
            // Per-step costs within a quarter of the budget.
            for &k in &sched.draws {
                let (e, dl) = step_cost(k, eps, delta, n);
                bad |= e > eps / 4.0 || dl > delta / 4.0;
            }
            // The two uncommitted trailing steps on top of the committed ones.
            let t = sched.draws.len();
            let (e, dl) = st.total_spend(&sched.draws[t - 2..]);
            bad |= e > eps * (1.0 + 1e-12) || dl > delta * (1.0 + 1e-12);
            violations += usize::from(bad);
        }
    }
    let sgd_bad = tally.total - tally.passed;
    Ok((
        violations == 0 && sgd_bad == 0,
        format!("{violations} violations over {runs} simulated schedules; {sgd_bad} over {} SGD runs", tally.total),
    ))
}

// 7
fn pathwise_sgd(tally: &mut BudgetTally) -> Outcome {
    let base = ["n = 1024", "d = 1024", "s = 4", "eps = 1", "delta = 1e-8", "trials = 500", "seed = 7"];
    let convex = experiment(ExperimentKind::Sgd, &[&base[..], &["mode = convex"]].concat())?;
    let nonconvex = experiment(ExperimentKind::Sgd, &[&base[..], &["mode = nonconvex"]].concat())?;
    tally.absorb(&convex);
    tally.absorb(&nonconvex);
    let (c_ok, c_n) = count(&convex, "pathwise_ok");
    let (n_ok, n_n) = count(&nonconvex, "pathwise_ok");
    Ok((
        c_ok == 500 && c_n == 500 && n_ok == 500 && n_n == 500,
        format!("regret {c_ok}/{c_n}, stationarity {n_ok}/{n_n}"),
    ))
}

const N_GRID: &str = "grid.n = 256,512,1024,2048,4096,8192";

// 8
fn mean_estimation_rate() -> Outcome {
    let r = experiment(
        ExperimentKind::MeanEst,
        &[
            "d = 32768",
            "s = 8",
            "eps = 1",
            "delta = 1e-6",
            N_GRID,
            "trials = 200",
            "seed = 8",
            "mechanism = projection",
        ],
    )?;
    let slope = slope_of(&r, "l2_error")?;
    Ok(((slope + 0.5).abs() <= 0.1, format!("slope {slope:.3} over {} runs", r.values("l2_error").len())))
}

// 9
fn compressed_sensing() -> Outcome {
    let (s, d) = (4usize, 256usize);
    let m = (8.0 * s as f64 * (d as f64 / s as f64).ln()).ceil() as usize;
    let cfg = RecoveryConfig {
        measurements: Some(m),
        branch: BranchPolicy::ForceCompressed,
        noise: NoiseMode::Zero,
        ..Default::default()
    };
    let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
    let mut exact = 0;
    let mut worst: f64 = 0.0;
    for t in 0..100u64 {
        let mut rng = RngStream::new(9, t).rng();
        let sup = rand::seq::index::sample(&mut rng, d, s).into_vec();
        let mut z = vec![0.0; d];
        for &j in &sup {
            z[j] = rng.random_range(0.2..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
        let out = gaussian_l1_recovery(&z, pp, 100, 1.0, s, &cfg, &mut rng).map_err(|e| e.to_string())?;
        let err = out.estimate.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(err);
        exact += usize::from(err < 1e-5);
    }
    Ok((exact >= 95, format!("{exact}/100 exact with m = {m}, worst error {worst:.1e}")))
}

const BENCH: [&str; 6] = ["n = 4096", "d = 4096", "s = 4", "eps = 1", "delta = 1e-8", "trials = 200"];

// 10
fn convex_success(tally: &mut BudgetTally) -> Outcome {
    let r = experiment(ExperimentKind::Sgd, &[&BENCH[..], &["seed = 10", "check_pathwise = false"]].concat())?;
    tally.absorb(&r);
    let p = mean(&r.values("success"));
    Ok((p >= 0.43, format!("success {p:.3} over {} runs", r.values("success").len())))
}

// 11
fn boosting() -> Outcome {
    let r = experiment(ExperimentKind::Boost, &[&BENCH[..], &["seed = 11", "beta = 0.1"]].concat())?;
    let p = mean(&r.values("success"));
    let runs = mean(&r.values("runs"));
    Ok((
        p >= 0.83,
        format!("success {p:.3} over {} meta-runs, {runs:.1} inner runs on average", r.values("success").len()),
    ))
}

// 12
fn output_perturbation() -> Outcome {
    let r = experiment(
        ExperimentKind::OutputPert,
        &[
            "problem = linear",
            "points.popularity = hot:4",
            "points.signs = positive",
            "d = 32768",
            "s = 4",
            "eps = 1",
            "delta = 1e-6",
            "lambda_regime = erm-approx",
            "beta = 0.1",
            N_GRID,
            "trials = 100",
            "seed = 12",
        ],
    )?;
    let (ok, total) = count(&r, "linf_bound_holds");
    let slope = slope_of(&r, "excess_risk")?;
    Ok((
        ok == total && total == 600 && (slope + 0.5).abs() <= 0.1,
        format!("l-inf bound {ok}/{total}; excess-risk slope {slope:.3}"),
    ))
}

// 13
fn exponential_mechanism() -> Outcome {
    let (n, d, s) = (16usize, 4usize, 2usize);
    let p = make_problem(ProblemKind::Linear, d, s, n, &mut RngStream::new(13, 0).rng()).map_err(|e| e.to_string())?;
    let eps = 1.0;
    let cfg = ExpMechConfig { tau: Some(0.75), ..Default::default() };
    let root = RngStream::new(13, 1);
    let first = sparse_exp_mechanism(&p.data, eps, 0.1, p.loss.as_ref(), &p.set, &root.substream(0), &cfg)
        .map_err(|e| e.to_string())?;
    let k = first.net.len();
    // Exact weights exp(-eps n F / (2B)) with F written out for the linear loss.
    let zbar = p.data.mean().map_err(|e| e.to_string())?;
    let b = 2.0;
    let logw: Vec<f64> = first
        .net
        .iter()
        .map(|q| -eps * n as f64 * q.point.iter().zip(&zbar).map(|(a, z)| a * z).sum::<f64>() / (2.0 * b))
        .collect();
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let total: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|v| v / total).collect();
    let prob_err = exact.iter().zip(&first.probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let draws = 20_000;
    let mut counts = vec![0usize; k];
    for t in 0..draws {
        let out = sparse_exp_mechanism(&p.data, eps, 0.1, p.loss.as_ref(), &p.set, &root.substream(t as u64 + 1), &cfg)
            .map_err(|e| e.to_string())?;
        counts[out.index] += 1;
    }
    // Pool cells with expected count below 5, in order of probability.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| exact[j].total_cmp(&exact[i]));
    let (mut cells, mut pool_e, mut pool_o) = (Vec::new(), 0.0, 0.0);
    for i in order {
        pool_e += exact[i] * draws as f64;
        pool_o += counts[i] as f64;
        if pool_e >= 5.0 {
            cells.push((pool_o, pool_e));
            pool_e = 0.0;
            pool_o = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += pool_o;
        last.1 += pool_e;
    }
    let chi2: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let pval = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2);

    // Sparsification on the linear loss, written out by hand.
    let mut sparsify_bad = 0;
    let mut checked = 0;
    for seed in 0..20u64 {
        let q = make_problem(ProblemKind::Linear, 64, 4, 128, &mut RngStream::new(13, 100 + seed).rng())
            .map_err(|e| e.to_string())?;
        let x_star = q.x_star.clone().expect("linear problems are solved");
        let zbar = q.data.mean().map_err(|e| e.to_string())?;
        for tau in [0.02, 0.05, 0.1, 0.2, 0.4] {
            let gap: f64 = x_star.iter().zip(&zbar).filter(|(x, _)| x.abs() < tau).map(|(x, z)| -x * z).sum();
            let bound = 1.0 * 2.0 * tau;
            let (lib_gap, lib_bound) = sparsification_gap(q.loss.as_ref(), &q.data, &x_star, tau);
            sparsify_bad +=
                usize::from(gap > bound || lib_gap > lib_bound || (lib_gap - gap).abs() > 1e-12 || lib_bound != bound);
            checked += 1;
        }
    }
    Ok((
        k <= 200 && prob_err <= 1e-12 && pval > 0.01 && sparsify_bad == 0,
        format!(
            "net {k} points, weight error {prob_err:.1e}, chi2 = {chi2:.1} on {dof} dof (p = {pval:.3}); sparsification {sparsify_bad}/{checked} violations"
        ),
    ))
}

// 14
fn hard_instances() -> Outcome {
    let mut bad = Vec::new();
    let mut rng = RngStream::new(14, 0).rng();
    for (s, d) in [(1, 4), (2, 4), (2, 9), (3, 9), (3, 12), (4, 12), (4, 16), (5, 15), (6, 18)] {
        let p = greedy_sparse_packing(s, d, usize::MAX, 0, &mut rng).map_err(|e| e.to_string())?;
        let dense: Vec<Vec<f64>> = p.points.iter().map(SparseVector::to_dense).collect();
        let mut min = f64::INFINITY;
        for (i, a) in dense.iter().enumerate() {
            for b in &dense[i + 1..] {
                min = min.min(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
            }
        }
        let bound = (d as f64 / s as f64 - 0.5).powf(s as f64 / 2.0);
        if !p.exhaustive || min < std::f64::consts::FRAC_1_SQRT_2 || (p.points.len() as f64) < bound {
            bad.push(format!("(s={s}, d={d}): size {} vs {bound:.1}, min {min:.3}", p.points.len()));
        }
    }
    // Dyadic entries keep every sum exact.
    let (n0, t, k, n, d) = (4usize, 3usize, 3usize, 32usize, 10usize);
    let mut block_means = Vec::new();
    let mut blocks = Vec::new();
    let sampler = |g: &mut spdp_core::StreamRng| {
        let rows: Vec<SparseVector> = (0..n0)
            .map(|_| {
                SparseVector::new(t, vec![(g.random_range(0..t), g.random_range(-8i32..=8) as f64 / 16.0)]).unwrap()
            })
            .collect();
        blocks.push(rows.clone());
        rows
    };
    let data = block_diagonal_dataset(sampler, n0, t, k, n, d, &mut rng).map_err(|e| e.to_string())?;
    let mut want = vec![0.0; d];
    for (bi, rows) in blocks.iter().enumerate() {
        let mut m = vec![0.0; t];
        for r in rows {
            for (j, v) in r.iter() {
                m[j] += v / n0 as f64;
                want[bi * t + j] += v / n as f64;
            }
        }
        block_means.push(m);
    }
    let got = data.mean().map_err(|e| e.to_string())?;
    let formula = block_diagonal_mean(&block_means, n0, n, d);
    let identity = got == want && formula == want;
    Ok((
        bad.is_empty() && identity,
        if bad.is_empty() { format!("9 packings ok; block mean identity {identity}") } else { bad.join("; ") },
    ))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut tally = BudgetTally::default();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        if !want(id) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p && took <= limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!(
            "[{}] {id:>2} {name}: {detail} ({:.1} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let min = |m: u64| Duration::from_secs(60 * m);
    report(1, "projection pathwise bound", Duration::from_secs(10), &mut projection_bound);
    report(2, "l1-ball projection oracle", Duration::from_secs(5), &mut l1_projection);
    report(3, "truncated geometric", Duration::from_secs(10), &mut tgeom);
    report(4, "debiasing identity", min(5), &mut debiasing);
    report(5, "stopping time", min(2), &mut stopping_time);
    report(7, "pathwise SGD inequalities", min(10), &mut || pathwise_sgd(&mut tally));
    report(8, "mean estimation rate", min(30), &mut mean_estimation_rate);
    report(9, "compressed sensing recovery", min(5), &mut compressed_sensing);
    report(10, "convex success", min(60), &mut || convex_success(&mut tally));
    report(11, "boosting", min(120), &mut boosting);
    report(12, "output perturbation", min(30), &mut output_perturbation);
    report(13, "sparse exponential mechanism", min(2), &mut exponential_mechanism);
    report(14, "hard instances", min(1), &mut hard_instances);
    // Last, so that it sees the SGD runs above.
    report(6, "budget safety", min(1), &mut || budget_safety(&tally));
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
