//! Matrix-normal density and sampling, parameterized by row and column
//! precision matrices.

mod spd;

pub use spd::{cholesky, logdet_pd, SpdMatrix};
pub(crate) use spd::symmetrize;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `log φ(X; M, Ω, Γ)` for the matrix normal with row precision `Ω` (p×p) and
/// column precision `Γ` (q×q):
///
/// `−(pq/2) log 2π + (q/2) log|Ω| + (p/2) log|Γ| − ½ tr{Ω (X−M) Γ (X−M)ᵀ}`.
pub fn matnorm_logdensity<F: Scalar>(
    x: ArrayView2<F>,
    mean: ArrayView2<F>,
    omega: &SpdMatrix<F>,
    gamma: &SpdMatrix<F>,
) -> Result<F> {
    let (p, q) = x.dim();
    if mean.dim() != (p, q) || omega.dim() != p || gamma.dim() != q {
        return Err(Error::Shape(format!(
            "X is {p}x{q}, M is {:?}, Omega is {d1}x{d1}, Gamma is {d2}x{d2}",
            mean.dim(),
            d1 = omega.dim(),
            d2 = gamma.dim()
        )));
    }
    Ok(log_normalizer(p, q, omega, gamma) - F::lit(0.5) * quadratic_form(x, mean, omega, gamma))
}

/// Constant part of the log-density: everything except the quadratic form.
pub(crate) fn log_normalizer<F: Scalar>(
    p: usize,
    q: usize,
    omega: &SpdMatrix<F>,
    gamma: &SpdMatrix<F>,
) -> F {
    let half = F::lit(0.5);
    let pf = F::from_count(p);
    let qf = F::from_count(q);
    -half * pf * qf * (F::lit(2.0) * F::PI()).ln()
        + half * qf * omega.logdet()
        + half * pf * gamma.logdet()
}

/// `tr{Ω D Γ Dᵀ} = ‖Lωᵀ D Lγ‖²_F` with `D = X − M`.
pub(crate) fn quadratic_form<F: Scalar>(
    x: ArrayView2<F>,
    mean: ArrayView2<F>,
    omega: &SpdMatrix<F>,
    gamma: &SpdMatrix<F>,
) -> F {
    let (p, q) = x.dim();
    let lo = omega.chol();
    let lg = gamma.chol();
    // B = Lωᵀ D, using the lower-triangular structure (row r of Lωᵀ starts at r).
    let mut b = Array2::<F>::zeros((p, q));
    for r in 0..p {
        for s in 0..q {
            let mut acc = F::zero();
            for j in r..p {
                acc += lo[[j, r]] * (x[[j, s]] - mean[[j, s]]);
            }
            b[[r, s]] = acc;
        }
    }
    let mut total = F::zero();
    for r in 0..p {
        for c in 0..q {
            let mut acc = F::zero();
            for s in c..q {
                acc += b[[r, s]] * lg[[s, c]];
            }
            total += acc * acc;
        }
    }
    total
}

/// `tr{Ω (X_i−M) Γ (X_i−M)ᵀ}` for every unit, via two stacked products
/// `D Lγ` and `Lωᵀ (D Lγ)`.
pub(crate) fn quadratic_forms<F: Scalar>(
    units: &[Array2<F>],
    mean: ArrayView2<F>,
    omega: &SpdMatrix<F>,
    gamma: &SpdMatrix<F>,
) -> Vec<F> {
    let (p, q) = mean.dim();
    let n = units.len();
    let mut stacked = Array2::<F>::zeros((n * p, q));
    for (i, x) in units.iter().enumerate() {
        let mut block = stacked.slice_mut(s![i * p..(i + 1) * p, ..]);
        block.assign(x);
        block -= &mean;
    }
    // (n p × q) · Lγ, then regroup to p × (n q) for the row factor.
    let right = stacked.dot(gamma.chol());
    let mut wide = Array2::<F>::zeros((p, n * q));
    for i in 0..n {
        wide.slice_mut(s![.., i * q..(i + 1) * q])
            .assign(&right.slice(s![i * p..(i + 1) * p, ..]));
    }
    let full = omega.chol().t().dot(&wide);
    (0..n)
        .map(|i| full.slice(s![.., i * q..(i + 1) * q]).iter().map(|&v| v * v).sum())
        .collect()
}

/// Draw `X = M + Lσ Z Lψᵀ` with `Z` i.i.d. standard normal, so that
/// `vec(X) ~ N(vec(M), Ψ ⊗ Σ)`.
pub fn matnorm_sample<F: Scalar, R: Rng + ?Sized>(
    mean: ArrayView2<F>,
    sigma: &SpdMatrix<F>,
    psi: &SpdMatrix<F>,
    rng: &mut R,
) -> Result<Array2<F>> {
    let (p, q) = mean.dim();
    if sigma.dim() != p || psi.dim() != q {
        return Err(Error::Shape(format!(
            "M is {p}x{q} but Sigma is {d1}x{d1} and Psi is {d2}x{d2}",
            d1 = sigma.dim(),
            d2 = psi.dim()
        )));
    }
    let z = Array2::from_shape_simple_fn((p, q), || F::lit(rng.sample::<f64, _>(StandardNormal)));
    let ls = sigma.chol();
    let lp = psi.chol();
    Ok(&mean + &ls.dot(&z).dot(&lp.t()))
}
