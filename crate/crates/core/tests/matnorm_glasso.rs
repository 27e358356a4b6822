mod common;

use common::*;
use matclust::glasso::{glasso_solve, kkt_residual, GlassoProblem};
use matclust::{matnorm_logdensity, matnorm_sample, normalize_identifiability, MixtureParams, SpdMatrix};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn density_matches_vectorized_mvn(seed in any::<u64>(), p in 1usize..=4, q in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, m) = (gaussian(p, q, &mut rng), gaussian(p, q, &mut rng));
        let (om, ga) = (random_spd(p, &mut rng), random_spd(q, &mut rng));
        let ours = matnorm_logdensity(x.view(), m.view(), &spd(om.clone()), &spd(ga.clone())).unwrap();
        let oracle = vec_mvn_logdensity(&x, &m, &om, &ga);
        prop_assert!((ours - oracle).abs() < 1e-8, "{ours} vs {oracle}");
    }

    #[test]
    fn normalization_keeps_densities(seed in any::<u64>(), p in 1usize..=4, q in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2;
        let params = MixtureParams::new(
            vec![0.4, 0.6],
            (0..k).map(|_| gaussian(p, q, &mut rng)).collect(),
            (0..k).map(|_| spd(random_spd(p, &mut rng) * 3.0)).collect(),
            (0..k).map(|_| spd(random_spd(q, &mut rng) * 0.2)).collect(),
        ).unwrap();
        let norm = normalize_identifiability(&params);
        for c in 0..k {
            prop_assert!((det(norm.gammas[c].values()) - 1.0).abs() < 1e-8);
            let zeros = |a: &Array2<f64>| a.iter().map(|&v| v == 0.0).collect::<Vec<_>>();
            prop_assert_eq!(zeros(norm.omegas[c].values()), zeros(params.omegas[c].values()));
            for _ in 0..5 {
                let x = gaussian(p, q, &mut rng);
                let a = matnorm_logdensity(x.view(), params.means[c].view(), &params.omegas[c], &params.gammas[c]).unwrap();
                let b = matnorm_logdensity(x.view(), norm.means[c].view(), &norm.omegas[c], &norm.gammas[c]).unwrap();
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn glasso_satisfies_kkt(seed in any::<u64>(), d in 2usize..=8, rho in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(3 * d, d, &mut rng);
        let s = a.t().dot(&a) / (3 * d) as f64;
        let mut pen = Array2::from_elem((d, d), rho);
        for j in 0..d {
            pen[[j, j]] = 0.0;
        }
        let prob = GlassoProblem::new(s.clone(), pen.clone()).unwrap();
        let fit = glasso_solve(&prob, None).unwrap();
        prop_assert!(glasso_kkt(fit.theta.values(), &s, &pen) < 1e-4);
        prop_assert!((kkt_residual(&fit.theta, &prob) - glasso_kkt(fit.theta.values(), &s, &pen)).abs() < 1e-6);
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn unpenalized_glasso_is_the_inverse(seed in any::<u64>(), d in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spd(d, &mut rng);
        let prob = GlassoProblem::new(s.clone(), Array2::zeros((d, d))).unwrap();
        let fit = glasso_solve(&prob, None).unwrap();
        let inv = inverse(&s);
        prop_assert!((fit.theta.values() - &inv).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn glasso_keeps_diagonal_when_penalty_dominates(seed in any::<u64>(), d in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spd(d, &mut rng);
        let top = s.indexed_iter().filter(|((i, j), _)| i != j).fold(0.0f64, |a, (_, v)| a.max(v.abs()));
        let prob = GlassoProblem::with_offdiagonal_penalty(s.clone(), top * 1.01).unwrap();
        let fit = glasso_solve(&prob, None).unwrap();
        for ((i, j), &v) in fit.theta.values().indexed_iter() {
            if i == j {
                prop_assert!((v - 1.0 / s[[i, i]]).abs() < 1e-8);
            } else {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn two_by_two_edge_is_killed() {
    let s = array![[1.0, 0.5], [0.5, 1.0]];
    let pen = array![[0.0, 0.5], [0.5, 0.0]];
    let fit = glasso_solve(&GlassoProblem::new(s.clone(), pen.clone()).unwrap(), None).unwrap();
    assert_eq!(fit.theta.values()[[0, 1]], 0.0);
    let w = inverse(fit.theta.values());
    assert!((s[[0, 1]] - w[[0, 1]]).abs() <= 0.5 + 1e-12);
}

#[test]
fn sample_covariance_matches_kronecker() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sigma = array![[1.0, 0.4], [0.4, 2.0]];
    let psi = array![[1.5, -0.3, 0.0], [-0.3, 1.0, 0.2], [0.0, 0.2, 0.5]];
    let m = array![[1.0, -1.0, 0.5], [0.0, 2.0, -0.5]];
    let (s_spd, p_spd) = (spd(sigma.clone()), spd(psi.clone()));
    let n = 40_000;
    let mut acc = Array2::<f64>::zeros((6, 6));
    let mut mean = Array2::<f64>::zeros((2, 3));
    let draws: Vec<Array2<f64>> = (0..n).map(|_| matnorm_sample(m.view(), &s_spd, &p_spd, &mut rng).unwrap()).collect();
    for x in &draws {
        mean += x;
    }
    mean /= n as f64;
    for x in &draws {
        // column-stacking vec
        let v: Vec<f64> = (0..6).map(|i| x[[i % 2, i / 2]] - m[[i % 2, i / 2]]).collect();
        for a in 0..6 {
            for b in 0..6 {
                acc[[a, b]] += v[a] * v[b];
            }
        }
    }
    acc /= n as f64;
    let kron = from_na(&to_na(&psi).kronecker(&to_na(&sigma)));
    assert!((&mean - &m).iter().all(|v| v.abs() < 0.03));
    assert!((&acc - &kron).iter().all(|v| v.abs() < 0.06), "{acc}\n{kron}");
}

#[test]
fn non_spd_is_rejected() {
    assert!(SpdMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    assert!(SpdMatrix::new(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
    let s = SpdMatrix::new(array![[1.0, 0.1], [0.3, 1.0]]).unwrap();
    assert_eq!(s.values()[[0, 1]], s.values()[[1, 0]]);
    assert!((s.values()[[0, 1]] - 0.2f64).abs() < 1e-15);
}
