//! Projections, soft-thresholding and sparsification.

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::params::FeasibleSet;
use crate::vector::{dist2, norm2};

/// A projected point together with the distance it moved.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    /// Distance from the input in the norm the projection minimizes.
    pub objective: f64,
    /// Whether the input was outside the set.
    pub active: bool,
}

impl ProjectionResult {
    fn identity(v: &[f64]) -> Self {
        Self { point: v.to_vec(), objective: 0.0, active: false }
    }
}

/// `sign(v_j) * max(|v_j| - t, 0)` componentwise.
pub fn soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    debug_assert!(t >= 0.0);
    v.iter()
        .map(|&x| {
            let a = x.abs() - t;
            if a > 0.0 {
                a.copysign(x)
            } else {
                0.0
            }
        })
        .collect()
}

/// Keeps `x_j` iff `|x_j| >= tau`.
pub fn sparsify_threshold(x: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    x.iter().map(|&v| if v.abs() >= tau { v } else { 0.0 }).collect()
}

/// Threshold `theta` such that `soft_threshold(v, theta)` is the Euclidean
/// projection of `v` onto the l1 ball of the given radius. Requires
/// `||v||_1 > radius`.
fn l1_threshold(v: &[f64], radius: f64) -> f64 {
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj > t {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` by sorting.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<ProjectionResult> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(invalid("radius", format!("must be finite and positive, got {radius}")));
    }
    ensure_finite(v, "projection input")?;
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return Ok(ProjectionResult::identity(v));
    }
    let point = soft_threshold(v, l1_threshold(v, radius));
    let objective = dist2(&point, v);
    Ok(ProjectionResult { point, objective, active: true })
}

/// Euclidean projection onto `{x : ||x||_2 <= radius}`.
pub fn project_l2_ball(v: &[f64], radius: f64) -> ProjectionResult {
    debug_assert!(radius > 0.0);
    let norm = norm2(v);
    if norm <= radius {
        return ProjectionResult::identity(v);
    }
    let scale = radius / norm;
    ProjectionResult { point: v.iter().map(|x| x * scale).collect(), objective: norm - radius, active: true }
}

pub const LINF_MAX_ITER: usize = 60;
pub const LINF_REL_GAP: f64 = 1e-12;

/// A minimizer of `||x - v||_inf` over `x` in `set`.
///
/// For balls the minimizer at distance `t` with the smallest l2 norm is
/// `soft_threshold(v, t)`, so the search reduces to the smallest feasible `t`,
/// found by bisection. The returned point is that soft-thresholded vector.
pub fn project_linf(set: &FeasibleSet, v: &[f64]) -> Result<ProjectionResult> {
    project_linf_with(set, v, LINF_MAX_ITER)
}

pub fn project_linf_with(set: &FeasibleSet, v: &[f64], max_iter: usize) -> Result<ProjectionResult> {
    ensure_finite(v, "projection input")?;
    match set {
        FeasibleSet::Unconstrained => Ok(ProjectionResult::identity(v)),
        FeasibleSet::Box { lo, hi } => {
            if lo.len() != v.len() {
                return Err(Error::DimensionMismatch { expected: lo.len(), actual: v.len() });
            }
            let point: Vec<f64> = v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect();
            let objective = point.iter().zip(v).fold(0.0_f64, |m, (p, x)| m.max((p - x).abs()));
            let active = objective > 0.0;
            Ok(ProjectionResult { point, objective, active })
        }
        FeasibleSet::L2Ball { radius } => bisect_ball(v, *radius, max_iter, norm2),
        FeasibleSet::L1Ball { radius } => bisect_ball(v, *radius, max_iter, |x| x.iter().map(|a| a.abs()).sum()),
    }
}

fn bisect_ball(v: &[f64], radius: f64, max_iter: usize, norm: impl Fn(&[f64]) -> f64) -> Result<ProjectionResult> {
    if norm(v) <= radius {
        return Ok(ProjectionResult::identity(v));
    }
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    // soft_threshold(v, scale) = 0 is always feasible.
    let (mut lo, mut hi) = (0.0, scale);
    let mut iterations = 0;
    while (hi - lo) > LINF_REL_GAP * scale {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                solver: "linf projection bisection",
                iterations,
                residual: (hi - lo) / scale,
            });
        }
        let mid = 0.5 * (lo + hi);
        if norm(&soft_threshold(v, mid)) <= radius {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let point = soft_threshold(v, hi);
    let objective = point.iter().zip(v).fold(0.0_f64, |m, (p, x)| m.max((p - x).abs()));
    Ok(ProjectionResult { point, objective, active: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::dot;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn l1_examples() {
        let r = project_l1_ball(&[0.3, -0.2], 1.0).unwrap();
        assert_eq!(r.point, vec![0.3, -0.2]);
        assert!(!r.active);
        let r = project_l1_ball(&[1.0, 1.0], 1.0).unwrap();
        assert!(close(&r.point, &[0.5, 0.5], 1e-15));
        let r = project_l1_ball(&[3.0, 0.0], 1.0).unwrap();
        assert!(close(&r.point, &[1.0, 0.0], 1e-15));
        assert!(project_l1_ball(&[f64::NAN], 1.0).is_err());
        assert!(project_l1_ball(&[1.0], 0.0).is_err());
    }

    #[test]
    fn l2_examples() {
        let r = project_l2_ball(&[0.6, 0.8], 1.0);
        assert!(!r.active);
        let r = project_l2_ball(&[3.0, 4.0], 1.0);
        assert!(close(&r.point, &[0.6, 0.8], 1e-15));
        assert_eq!(r.objective, 4.0);
        assert_eq!(project_l2_ball(&[0.0, 0.0], 1.0).point, vec![0.0, 0.0]);
    }

    #[test]
    fn linf_examples() {
        let v = [2.0, -7.0];
        let r = project_linf(&FeasibleSet::Unconstrained, &v).unwrap();
        assert_eq!(r.point, v.to_vec());
        assert_eq!(r.objective, 0.0);

        let ball = FeasibleSet::l2_ball(1.0).unwrap();
        let r = project_linf(&ball, &[2.0, 0.0]).unwrap();
        assert!(close(&r.point, &[1.0, 0.0], 1e-11));
        assert!((r.objective - 1.0).abs() < 1e-11);

        let r = project_linf(&ball, &[2.0, 2.0]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(close(&r.point, &[h, h], 1e-11));
        assert!((r.objective - (2.0 - h)).abs() < 1e-11);

        let bx = FeasibleSet::boxed(vec![-1.0, -1.0], vec![1.0, 0.5]).unwrap();
        let r = project_linf(&bx, &[2.0, 0.0]).unwrap();
        assert_eq!(r.point, vec![1.0, 0.0]);
        assert_eq!(r.objective, 1.0);
    }

    #[test]
    fn linf_bisection_reports_non_convergence() {
        let ball = FeasibleSet::l2_ball(1.0).unwrap();
        let err = project_linf_with(&ball, &[2.0, 2.0], 3).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 3, .. }));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.0, -0.5], 1.0), vec![1.0, 0.0]);
        assert_eq!(soft_threshold(&[2.0, -0.5], 0.0), vec![2.0, -0.5]);
        assert_eq!(soft_threshold(&[-3.0], 3.0), vec![0.0]);
    }

    #[test]
    fn sparsify_examples() {
        assert_eq!(sparsify_threshold(&[0.9, 0.05, -0.3], 0.1), vec![0.9, 0.0, -0.3]);
        assert_eq!(sparsify_threshold(&[0.9, 0.05], 1.0), vec![0.0, 0.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..20).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = norm2(&v);
            let u: Vec<f64> = v.iter().map(|x| x / n).collect();
            let kept = sparsify_threshold(&u, 0.5).iter().filter(|x| **x != 0.0).count();
            assert!(kept <= 4);
        }
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, d)
    }

    proptest! {
        #[test]
        fn l1_projection_is_nonexpansive(u in vec_strategy(6), v in vec_strategy(6), r in 0.1f64..4.0) {
            let pu = project_l1_ball(&u, r).unwrap().point;
            let pv = project_l1_ball(&v, r).unwrap().point;
            prop_assert!(dist2(&pu, &pv) <= dist2(&u, &v) + 1e-12);
        }

        #[test]
        fn l2_projection_is_nonexpansive(u in vec_strategy(6), v in vec_strategy(6), r in 0.1f64..4.0) {
            let pu = project_l2_ball(&u, r).point;
            let pv = project_l2_ball(&v, r).point;
            prop_assert!(dist2(&pu, &pv) <= dist2(&u, &v) + 1e-12);
        }

        #[test]
        fn l1_projection_certificate(v in vec_strategy(8), w in vec_strategy(8), r in 0.1f64..4.0) {
            let p = project_l1_ball(&v, r).unwrap().point;
            prop_assert!(p.iter().map(|x| x.abs()).sum::<f64>() <= r + 1e-9);
            // Any point of the ball: rescale w into it.
            let wl1: f64 = w.iter().map(|x| x.abs()).sum();
            let u: Vec<f64> = if wl1 > r { w.iter().map(|x| x * r / wl1).collect() } else { w };
            let a: Vec<f64> = p.iter().zip(&v).map(|(x, y)| x - y).collect();
            let b: Vec<f64> = p.iter().zip(&u).map(|(x, y)| x - y).collect();
            prop_assert!(dot(&a, &b) <= 1e-9);
        }

        #[test]
        fn linf_projection_beats_sampled_feasible_points(v in vec_strategy(5), w in vec_strategy(5), r in 0.1f64..3.0) {
            for set in [FeasibleSet::l2_ball(r).unwrap(), FeasibleSet::l1_ball(r).unwrap()] {
                let res = project_linf(&set, &v).unwrap();
                prop_assert!(set.contains(&res.point, 1e-12));
                let u = set.project(&w);
                let d = u.iter().zip(&v).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                prop_assert!(res.objective <= d + 1e-9);
            }
        }
    }
}
