use std::collections::BTreeMap;

use proptest::prelude::*;
use spdp_core::accounting::{FilterDecision, FilterState};
use spdp_core::geometry::{project_l1_ball, project_l2_ball, project_linf, soft_threshold, sparsify_threshold};
use spdp_core::mean_estimation::basis_pursuit::{solve, BasisPursuitProblem, BpSolver};
use spdp_core::mean_estimation::projection_mechanism;
use spdp_core::noise::TGeom;
use spdp_core::vector::{dot, norm2, norm_inf, sub, SparseVector};
use spdp_core::{Dataset, DatasetBounds, FeasibleSet, PrivacyParams, RngStream};

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn vec_in(d: std::ops::Range<usize>, lim: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-lim..lim, d)
}

/// Sparse entries with distinct indices below `dim`.
fn sparse_entries(dim: usize, max_nnz: usize) -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::btree_map(0..dim, -1.0f64..1.0, 0..=max_nnz)
        .prop_map(|m: BTreeMap<usize, f64>| m.into_iter().collect())
}

proptest! {
    #[test]
    fn l1_projection_is_feasible_idempotent_and_closest(v in vec_in(1..12, 4.0), r in 0.1f64..3.0, probe in vec_in(12..13, 1.0)) {
        let p = project_l1_ball(&v, r).unwrap().point;
        prop_assert!(l1(&p) <= r * (1.0 + 1e-12));
        let again = project_l1_ball(&p, r).unwrap().point;
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // Any feasible point is at least as far from v.
        let mut q: Vec<f64> = probe[..v.len()].to_vec();
        let scale = r / l1(&q).max(r);
        q.iter_mut().for_each(|x| *x *= scale);
        prop_assert!(norm2(&sub(&p, &v)) <= norm2(&sub(&q, &v)) + 1e-12);
        // Variational inequality <v - p, q - p> <= 0.
        prop_assert!(dot(&sub(&v, &p), &sub(&q, &p)) <= 1e-9);
    }

    #[test]
    fn l2_projection_scales_onto_the_sphere(v in vec_in(1..10, 5.0), r in 0.1f64..3.0) {
        let p = project_l2_ball(&v, r);
        prop_assert!(norm2(&p.point) <= r * (1.0 + 1e-12));
        if norm2(&v) <= r {
            prop_assert_eq!(p.point, v);
        } else {
            prop_assert!((norm2(&p.point) - r).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn thresholding_only_shrinks(v in vec_in(1..10, 3.0), t in 0.0f64..2.0) {
        let st = soft_threshold(&v, t);
        let sp = sparsify_threshold(&v, t);
        for ((a, b), c) in v.iter().zip(&st).zip(&sp) {
            prop_assert!(b.abs() <= a.abs() && b * a >= 0.0);
            prop_assert!(*c == 0.0 || c == a);
            prop_assert!((a - b).abs() <= t + 1e-15);
        }
    }

    #[test]
    fn linf_projection_bounds_the_perturbation(x in vec_in(6..7, 0.4), xi in vec_in(6..7, 2.0)) {
        // x lies in the unit l2 ball; the projected perturbed point stays
        // within 2 ||xi||_inf of it.
        let set = FeasibleSet::l2_ball(1.0).unwrap();
        let v: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a + b).collect();
        let p = project_linf(&set, &v).unwrap().point;
        prop_assert!(set.contains(&p, 1e-9));
        prop_assert!(norm_inf(&sub(&p, &x)) <= 2.0 * norm_inf(&xi) + 1e-9);
    }

    #[test]
    fn sparse_vector_agrees_with_dense(entries in sparse_entries(16, 6), x in vec_in(16..17, 2.0)) {
        let v = SparseVector::new(16, entries.clone()).unwrap();
        let dense = v.to_dense();
        prop_assert!((v.dot(&x) - dot(&dense, &x)).abs() <= 1e-12);
        prop_assert!((v.norms().l2 - norm2(&dense)).abs() <= 1e-12);
        prop_assert_eq!(SparseVector::from_dense(&dense).unwrap().to_dense(), dense);
    }

    #[test]
    fn dataset_text_round_trips(points in prop::collection::vec(sparse_entries(10, 3), 1..8)) {
        let pts: Vec<SparseVector> = points
            .into_iter()
            .map(|e| {
                let v = SparseVector::new(10, e).unwrap();
                let n = v.norms().l2;
                if n > 1.0 { v.scaled(1.0 / n) } else { v }
            })
            .collect();
        let ds = Dataset::new(pts, DatasetBounds { dim: 10, sparsity: 3, norm_bound: 1.0 }).unwrap();
        prop_assert_eq!(Dataset::parse(&ds.to_text()).unwrap(), ds);
    }

    #[test]
    fn tgeom_is_a_distribution(m in 0usize..20, seed in any::<u64>()) {
        let t = TGeom::new(m).unwrap();
        let sum: f64 = t.pmf().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-14);
        prop_assert!(t.pmf().windows(2).all(|w| (w[0] - 2.0 * w[1]).abs() <= 1e-15));
        let mut rng = RngStream::new(seed, 0).rng();
        for _ in 0..50 {
            prop_assert!(t.sample(&mut rng) <= m);
        }
    }

    #[test]
    fn filter_commits_keep_the_invariants(levels in prop::collection::vec(0usize..9, 1..400), eps in 0.1f64..4.0) {
        let pp = PrivacyParams::new(eps, 1e-8).unwrap();
        let mut f = FilterState::new(pp, 1024).unwrap();
        for k in levels {
            match f.admit(k) {
                FilterDecision::Continue => f.commit(k),
                FilterDecision::Halt => break,
            }
        }
        prop_assert!(f.verify().is_ok());
        prop_assert!(f.composition(f.sum_sq()) <= 0.5 && f.sum_lin() <= 0.25);
    }

    #[test]
    fn projection_mechanism_bound_is_pathwise(
        points in prop::collection::vec(sparse_entries(64, 4), 1..20),
        seed in any::<u64>(),
        pure in any::<bool>(),
    ) {
        let n = points.len();
        let mut zbar = vec![0.0; 64];
        for e in points {
            let v = SparseVector::new(64, e).unwrap();
            let norm = v.norms().l2.max(1.0);
            v.add_to(&mut zbar, 1.0 / (norm * n as f64));
        }
        let pp = if pure { PrivacyParams::pure(1.0).unwrap() } else { PrivacyParams::new(1.0, 1e-6).unwrap() };
        let out = projection_mechanism(&zbar, pp, n, 1.0, 4, &mut RngStream::new(seed, 1).rng()).unwrap();
        let err = norm2(&sub(&out.estimate, &zbar));
        prop_assert!(err <= (2.0 * out.noise_linf * 2.0).sqrt() + 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_pursuit_is_feasible_and_no_worse_than_the_planted_point(
        seed in any::<u64>(),
        m in 4usize..24,
        entries in sparse_entries(48, 3),
        admm in any::<bool>(),
    ) {
        use rand::Rng;
        let mut rng = RngStream::new(seed, 2).rng();
        let a = nalgebra::DMatrix::from_fn(m, 48, |_, _| rng.random_range(-1.0..1.0));
        let z = SparseVector::new(48, entries).unwrap().to_dense();
        let b: Vec<f64> = (&a * nalgebra::DVector::from_column_slice(&z)).iter().copied().collect();
        let mut p = BasisPursuitProblem::new(a.clone(), b.clone());
        if admm {
            p.solver = BpSolver::Admm;
            p.max_iter = 100_000;
        }
        let Ok(sol) = solve(&p) else {
            // ADMM may legitimately hit its cap; the simplex solver may not.
            prop_assert!(admm);
            return Ok(());
        };
        let r = &a * nalgebra::DVector::from_column_slice(&sol.x) - nalgebra::DVector::from_column_slice(&b);
        prop_assert!(r.norm() <= 1e-7 * (1.0 + norm2(&b)));
        // ADMM stops on a residual tolerance, so its objective is only
        // near-optimal.
        let slack = if admm { 1e-4 } else { 1e-7 };
        prop_assert!(l1(&sol.x) <= l1(&z) + slack * (1.0 + l1(&z)), "{} vs {}", l1(&sol.x), l1(&z));
    }
}
