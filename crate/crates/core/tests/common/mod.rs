//! Independent oracles shared by the integration tests. Everything here uses
//! nalgebra or plain loops, never the crate's own linear algebra.
#![allow(dead_code)]

use matclust::SpdMatrix;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn inverse(a: &Array2<f64>) -> Array2<f64> {
    from_na(&to_na(a).try_inverse().expect("singular matrix"))
}

pub fn det(a: &Array2<f64>) -> f64 {
    to_na(a).determinant()
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Dense well-conditioned SPD matrix: `A Aᵀ / d + 0.5 I`.
pub fn random_spd(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let a = gaussian(d, d, rng);
    let mut s = a.dot(&a.t()) / d as f64;
    for i in 0..d {
        s[[i, i]] += 0.5;
    }
    s
}

pub fn spd(a: Array2<f64>) -> SpdMatrix<f64> {
    SpdMatrix::new(a).expect("not positive definite")
}

/// Log-density of `vec(X)` under `N(vec M, Ψ ⊗ Σ)` with `Σ = Ω⁻¹`, `Ψ = Γ⁻¹`,
/// column-stacking `vec`.
pub fn vec_mvn_logdensity(x: &Array2<f64>, m: &Array2<f64>, omega: &Array2<f64>, gamma: &Array2<f64>) -> f64 {
    let (p, q) = x.dim();
    let sigma = to_na(omega).try_inverse().unwrap();
    let psi = to_na(gamma).try_inverse().unwrap();
    let cov = psi.kronecker(&sigma);
    let d = nalgebra::DVector::from_fn(p * q, |idx, _| {
        let (r, c) = (idx % p, idx / p);
        x[[r, c]] - m[[r, c]]
    });
    let chol = cov.cholesky().expect("covariance not PD");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let sol = chol.solve(&d);
    let quad = d.dot(&sol);
    -0.5 * (p * q) as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * quad
}

/// KKT violation of `max log|Θ| − tr(SΘ) − Σ ρ|θ|` computed from scratch.
pub fn glasso_kkt(theta: &Array2<f64>, s: &Array2<f64>, rho: &Array2<f64>) -> f64 {
    let w = inverse(theta);
    let mut worst: f64 = 0.0;
    for ((i, j), &t) in theta.indexed_iter() {
        let g = w[[i, j]] - s[[i, j]];
        let v = if t != 0.0 {
            (g - rho[[i, j]] * t.signum()).abs()
        } else {
            (g.abs() - rho[[i, j]]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `n_k Ω M Γ − Ω S_M Γ`.
pub fn mean_gradient(m: &Array2<f64>, s_m: &Array2<f64>, nk: f64, omega: &Array2<f64>, gamma: &Array2<f64>) -> Array2<f64> {
    let (p, q) = m.dim();
    let mut out = Array2::zeros((p, q));
    for l in 0..p {
        for s in 0..q {
            let mut acc = 0.0;
            for r in 0..p {
                for c in 0..q {
                    acc += omega[[l, r]] * (nk * m[[r, c]] - s_m[[r, c]]) * gamma[[c, s]];
                }
            }
            out[[l, s]] = acc;
        }
    }
    out
}

/// `(n_k/2) tr{Ω M Γ Mᵀ} − tr{Ω S_M Γ Mᵀ}` by explicit sums.
pub fn mean_smooth(m: &Array2<f64>, s_m: &Array2<f64>, nk: f64, omega: &Array2<f64>, gamma: &Array2<f64>) -> f64 {
    let (p, q) = m.dim();
    let mut total = 0.0;
    for l in 0..p {
        for r in 0..p {
            for s in 0..q {
                for c in 0..q {
                    let w = omega[[l, r]] * gamma[[c, s]];
                    total += w * (0.5 * nk * m[[r, c]] - s_m[[r, c]]) * m[[l, s]];
                }
            }
        }
    }
    total
}

/// Worst violation of the row-group optimality conditions.
pub fn group_kkt(m: &Array2<f64>, s_m: &Array2<f64>, nk: f64, omega: &Array2<f64>, gamma: &Array2<f64>, lambda: f64) -> f64 {
    let g = mean_gradient(m, s_m, nk, omega, gamma);
    let mut worst: f64 = 0.0;
    for l in 0..m.nrows() {
        let norm = m.row(l).iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = if norm > 0.0 {
            m.row(l)
                .iter()
                .zip(g.row(l).iter())
                .map(|(mv, gv)| (gv + lambda * mv / norm).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            (g.row(l).iter().map(|v| v * v).sum::<f64>().sqrt() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Worst cell-wise violation of the entry-wise lasso stationarity conditions:
/// nonzero cells need `−∇_ls = λ p_ls sign(m_ls)`, zero cells `|∇_ls| ≤ λ p_ls`.
pub fn lasso_kkt(m: &Array2<f64>, s_m: &Array2<f64>, nk: f64, omega: &Array2<f64>, gamma: &Array2<f64>, lambda: f64, p1: &Array2<f64>) -> f64 {
    let g = mean_gradient(m, s_m, nk, omega, gamma);
    let mut worst: f64 = 0.0;
    for ((l, s), &v) in m.indexed_iter() {
        let t = lambda * p1[[l, s]];
        let viol = if v != 0.0 { (-g[[l, s]] - t * v.signum()).abs() } else { (g[[l, s]].abs() - t).max(0.0) };
        worst = worst.max(viol);
    }
    worst
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Proptest settings without regression files next to the sources.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..Default::default()
    }
}
