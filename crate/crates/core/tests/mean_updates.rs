mod common;

use common::*;
use matclust::mean_lasso::{lasso_certificate, solve_lasso, LassoMeanProblem};
use matclust::mean_prox::{grad_f, group_certificate, prox_row, solve_group, MeanUpdateProblem};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    s_m: Array2<f64>,
    nk: f64,
    omega: Array2<f64>,
    gamma: Array2<f64>,
}

fn instance(seed: u64, p: usize, q: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nk = rng.random_range(3.0..40.0);
    Instance {
        s_m: gaussian(p, q, &mut rng) * nk,
        nk,
        omega: random_spd(p, &mut rng),
        gamma: random_spd(q, &mut rng),
    }
}

fn group(inst: &Instance, lambda: f64) -> MeanUpdateProblem<f64> {
    MeanUpdateProblem::new(inst.s_m.clone(), inst.nk, &spd(inst.omega.clone()), &spd(inst.gamma.clone()), lambda).unwrap()
}

fn lasso(inst: &Instance, lambda: f64, p1: Array2<f64>) -> LassoMeanProblem<f64> {
    LassoMeanProblem::new(inst.s_m.clone(), inst.nk, &spd(inst.omega.clone()), &spd(inst.gamma.clone()), lambda, p1).unwrap()
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), p in 1usize..=4, q in 1usize..=4) {
        let inst = instance(seed, p, q);
        let prob = group(&inst, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let m = gaussian(p, q, &mut rng);
        let g = grad_f(m.view(), &prob);
        let oracle = mean_gradient(&m, &inst.s_m, inst.nk, &inst.omega, &inst.gamma);
        let h = 1e-5;
        for l in 0..p {
            for s in 0..q {
                let (mut up, mut dn) = (m.clone(), m.clone());
                up[[l, s]] += h;
                dn[[l, s]] -= h;
                let fd = (mean_smooth(&up, &inst.s_m, inst.nk, &inst.omega, &inst.gamma)
                    - mean_smooth(&dn, &inst.s_m, inst.nk, &inst.omega, &inst.gamma)) / (2.0 * h);
                prop_assert!((fd - oracle[[l, s]]).abs() < 1e-5 * (1.0 + fd.abs()));
                prop_assert!((g[[l, s]] - oracle[[l, s]]).abs() < 1e-9 * (1.0 + fd.abs()));
            }
        }
        prop_assert!((prob.smooth(m.view()) - mean_smooth(&m, &inst.s_m, inst.nk, &inst.omega, &inst.gamma)).abs() < 1e-9 * (1.0 + prob.smooth(m.view()).abs()));
    }

    #[test]
    fn group_solution_is_stationary(seed in any::<u64>(), p in 1usize..=6, q in 1usize..=5, frac in 0.0f64..1.2) {
        let inst = instance(seed, p, q);
        let w = inst.omega.dot(&inst.s_m).dot(&inst.gamma);
        let top = w.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        let lambda = frac * top;
        let prob = group(&inst, lambda);
        let sol = solve_group(&prob, Array2::zeros((p, q)).view()).unwrap();
        prop_assert!(sol.converged);
        let scale = 1.0f64.max(lambda).max(top);
        prop_assert!(group_kkt(&sol.mean, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda) < 1e-6 * scale);
        prop_assert!((group_certificate(&prob, sol.mean.view()) - group_kkt(&sol.mean, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda)).abs() < 1e-8 * scale);
        if frac >= 1.0 {
            prop_assert!(sol.mean.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn lasso_solution_is_stationary(seed in any::<u64>(), p in 1usize..=6, q in 1usize..=5, frac in 0.0f64..1.2) {
        let inst = instance(seed, p, q);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let p1 = Array2::from_shape_simple_fn((p, q), || rng.random_range(0.5..2.0));
        let w = inst.omega.dot(&inst.s_m).dot(&inst.gamma);
        let top = w.iter().zip(p1.iter()).map(|(a, b)| a.abs() / b).fold(0.0, f64::max);
        let lambda = frac * top;
        let prob = lasso(&inst, lambda, p1.clone());
        let sol = solve_lasso(&prob, Array2::zeros((p, q)).view()).unwrap();
        prop_assert!(sol.converged);
        let scale = 1.0f64.max(lambda).max(w.iter().fold(0.0, |a, v| a.max(v.abs())));
        prop_assert!(lasso_kkt(&sol.mean, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda, &p1) < 1e-6 * scale);
        prop_assert!((lasso_certificate(&prob, sol.mean.view()) - lasso_kkt(&sol.mean, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda, &p1)).abs() < 1e-8 * scale);
        if frac >= 1.0 {
            prop_assert!(sol.mean.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_penalty_gives_weighted_mean(seed in any::<u64>(), p in 1usize..=5, q in 1usize..=5) {
        let inst = instance(seed, p, q);
        let mle = &inst.s_m / inst.nk;
        let g = solve_group(&group(&inst, 0.0), Array2::zeros((p, q)).view()).unwrap();
        let l = solve_lasso(&lasso(&inst, 0.0, Array2::ones((p, q))), Array2::zeros((p, q)).view()).unwrap();
        prop_assert!((&g.mean - &mle).iter().all(|v| v.abs() < 1e-12));
        prop_assert!((&l.mean - &mle).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn group_solution_maximizes_objective(seed in any::<u64>(), p in 2usize..=4, q in 2usize..=4, frac in 0.05f64..0.8) {
        let inst = instance(seed, p, q);
        let w = inst.omega.dot(&inst.s_m).dot(&inst.gamma);
        let lambda = frac * w.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        let prob = group(&inst, lambda);
        let sol = solve_group(&prob, Array2::zeros((p, q)).view()).unwrap();
        let best = prob.objective(sol.mean.view());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        for _ in 0..20 {
            let probe = &sol.mean + &(gaussian(p, q, &mut rng) * 0.05);
            prop_assert!(prob.objective(probe.view()) <= best + 1e-9 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn prox_is_block_soft_threshold(v in proptest::collection::vec(-5.0f64..5.0, 1..6), t in 0.0f64..6.0) {
        let b = Array1::from(v.clone());
        let out = prox_row(b.view(), t);
        let norm = b.dot(&b).sqrt();
        if norm <= t {
            prop_assert!(out.iter().all(|&x| x == 0.0));
        } else {
            for (o, x) in out.iter().zip(v.iter()) {
                prop_assert!((o - x * (1.0 - t / norm)).abs() < 1e-12);
            }
        }
    }
}

/// Treating Ω and Γ as diagonal gives a closed-form soft threshold that is not
/// optimal once the precisions have off-diagonal mass.
#[test]
fn diagonal_shortcut_fails_the_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (p, q) = (5, 4);
    let mut worst_shortcut: f64 = 0.0;
    for trial in 0..10 {
        let inst = instance(1000 + trial, p, q);
        let p1 = Array2::ones((p, q));
        let w = inst.omega.dot(&inst.s_m).dot(&inst.gamma);
        let lambda = 0.3 * w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let shortcut = Array2::from_shape_fn((p, q), |(l, s)| {
            let denom = inst.nk * inst.omega[[l, l]] * inst.gamma[[s, s]];
            let z = w[[l, s]] / denom;
            let t = lambda / denom;
            z.signum() * (z.abs() - t).max(0.0)
        });
        worst_shortcut = worst_shortcut.max(lasso_kkt(&shortcut, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda, &p1));
        let start = gaussian(p, q, &mut rng);
        let sol = solve_lasso(&lasso(&inst, lambda, p1.clone()), start.view()).unwrap();
        assert!(lasso_kkt(&sol.mean, &inst.s_m, inst.nk, &inst.omega, &inst.gamma, lambda, &p1) < 1e-6 * lambda.max(1.0));
    }
    assert!(worst_shortcut > 1e-2, "shortcut violation only {worst_shortcut}");
}

#[test]
fn warm_and_cold_starts_agree() {
    let inst = instance(9, 4, 3);
    let w = inst.omega.dot(&inst.s_m).dot(&inst.gamma);
    let lambda = 0.4 * w.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
    let prob = group(&inst, lambda);
    let cold = solve_group(&prob, Array2::zeros((4, 3)).view()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let warm = solve_group(&prob, (gaussian(4, 3, &mut rng) * 3.0).view()).unwrap();
    assert!((&cold.mean - &warm.mean).iter().all(|v| v.abs() < 1e-6));
}
