//! Entry-wise lasso update of a component mean matrix by cell-wise coordinate
//! ascent on
//!
//! `Q(M) = tr{Ω S_M Γ Mᵀ} − (n_k/2) tr{Ω M Γ Mᵀ} − λ₁ Σ_ls p_ls |m_ls|`,
//!
//! with full (non-diagonal) `Ω` and `Γ`.
//!
//! For cell `(l, s)` let
//! `R_ls = Σ_i z_i (Ω X_i Γ)_ls − n_k Σ_{(r,c)≠(l,s)} ω_lr m_rc γ_cs`.
//! The cell is zero iff `|R_ls| ≤ λ₁ p_ls`; otherwise
//! `m_ls = soft(R_ls, λ₁ p_ls) / (n_k ω_ll γ_ss)`. Only the single `(l, s)`
//! term is excluded from the residual sum, which is what the stationarity
//! condition requires.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::matnorm::SpdMatrix;
use crate::mean_prox::{DEFAULT_INNER_TOL, DEFAULT_MAX_INNER};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct LassoMeanProblem<F> {
    pub s_m: Array2<F>,
    pub n_k: F,
    pub omega: Array2<F>,
    pub gamma: Array2<F>,
    pub lambda1: F,
    pub p1: Array2<F>,
    pub inner_tol: F,
    pub max_sweeps: usize,
    /// `Ω S_M Γ = Σ_i z_i Ω X_i Γ`
    weighted: Array2<F>,
}

impl<F: Scalar> LassoMeanProblem<F> {
    pub fn new(
        s_m: Array2<F>,
        n_k: F,
        omega: &SpdMatrix<F>,
        gamma: &SpdMatrix<F>,
        lambda1: F,
        p1: Array2<F>,
    ) -> Result<Self> {
        let (p, q) = s_m.dim();
        if omega.dim() != p || gamma.dim() != q || p1.dim() != (p, q) {
            return Err(Error::Shape(format!(
                "S_M is {p}x{q}, Omega {0}x{0}, Gamma {1}x{1}, P1 {2:?}",
                omega.dim(),
                gamma.dim(),
                p1.dim()
            )));
        }
        if !(n_k > F::zero()) {
            return Err(Error::InvalidArgument(format!("soft count must be positive, got {n_k}")));
        }
        if !(lambda1 >= F::zero()) {
            return Err(Error::InvalidArgument(format!("lambda1 must be >= 0, got {lambda1}")));
        }
        if p1.iter().any(|&w| !(w >= F::zero())) {
            return Err(Error::InvalidArgument("P1 weights must be non-negative".into()));
        }
        let weighted = omega.values().dot(&s_m).dot(gamma.values());
        Ok(Self {
            s_m,
            n_k,
            omega: omega.values().clone(),
            gamma: gamma.values().clone(),
            lambda1,
            p1,
            inner_tol: F::lit(DEFAULT_INNER_TOL).max(F::epsilon() * F::lit(64.0)),
            max_sweeps: DEFAULT_MAX_INNER,
            weighted,
        })
    }

    pub fn with_inner_tol(mut self, tol: F) -> Self {
        self.inner_tol = tol;
        self
    }

    pub fn with_max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    pub fn weighted_mean(&self) -> Array2<F> {
        self.s_m.mapv(|v| v / self.n_k)
    }

    pub fn weighted_data(&self) -> &Array2<F> {
        &self.weighted
    }

    fn threshold(&self, l: usize, s: usize) -> F {
        self.lambda1 * self.p1[[l, s]]
    }

    /// `R_ls` evaluated at `m`, given `g = Ω M Γ`.
    fn residual_with(&self, l: usize, s: usize, m: ArrayView2<F>, g: &Array2<F>) -> F {
        let own = self.omega[[l, l]] * m[[l, s]] * self.gamma[[s, s]];
        self.weighted[[l, s]] - self.n_k * (g[[l, s]] - own)
    }

    /// `R_ls`, the statistic compared against `λ₁ p_ls` by the zero test.
    pub fn residual(&self, l: usize, s: usize, m: ArrayView2<F>) -> F {
        let g = self.omega.dot(&m).dot(&self.gamma);
        self.residual_with(l, s, m, &g)
    }

    pub fn objective(&self, m: ArrayView2<F>) -> F {
        let g = self.omega.dot(&m).dot(&self.gamma);
        let half = F::lit(0.5);
        let mut total = F::zero();
        for ((idx, &mv), (&gv, &wv)) in m.indexed_iter().zip(g.iter().zip(self.weighted.iter())) {
            total += wv * mv - half * self.n_k * mv * gv - self.lambda1 * self.p1[idx] * mv.abs();
        }
        total
    }
}

/// True iff cell `(l, s)` must be zero given the other cells of `m`.
pub fn shrink_to_zero_test<F: Scalar>(l: usize, s: usize, prob: &LassoMeanProblem<F>, m: ArrayView2<F>) -> bool {
    prob.residual(l, s, m).abs() <= prob.threshold(l, s)
}

/// Closed-form coordinate maximizer for cell `(l, s)`. Returns exactly zero
/// when the zero test fires.
pub fn coordinate_update<F: Scalar>(l: usize, s: usize, prob: &LassoMeanProblem<F>, m: ArrayView2<F>) -> F {
    let r = prob.residual(l, s, m);
    cell_value(prob, l, s, r)
}

fn cell_value<F: Scalar>(prob: &LassoMeanProblem<F>, l: usize, s: usize, r: F) -> F {
    let t = prob.threshold(l, s);
    let curvature = prob.n_k * prob.omega[[l, l]] * prob.gamma[[s, s]];
    assert!(curvature > F::zero(), "diagonal precisions must be positive");
    if r.abs() <= t {
        F::zero()
    } else {
        (r - t * r.signum()) / curvature
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution<F> {
    pub mean: Array2<F>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Coordinate ascent in row-major cell order until [`lasso_certificate`] falls
/// below `inner_tol` times `max(1, λ₁, max |(Ω S_M Γ)_ls|)`. Exceeding `max_sweeps` is an
/// error; [`solve_lasso`] returns the iterate instead.
pub fn update_mean_lasso<F: Scalar>(prob: &LassoMeanProblem<F>, init: ArrayView2<F>) -> Result<Array2<F>> {
    let sol = solve_lasso(prob, init)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            solver: "entry-wise lasso mean update",
            iterations: sol.sweeps,
            residual: f64::NAN,
        });
    }
    Ok(sol.mean)
}

pub fn solve_lasso<F: Scalar>(prob: &LassoMeanProblem<F>, init: ArrayView2<F>) -> Result<LassoSolution<F>> {
    let (p, q) = prob.s_m.dim();
    if init.dim() != (p, q) {
        return Err(Error::Shape(format!("init is {:?}, expected {p}x{q}", init.dim())));
    }
    let scale = F::one()
        .max(prob.lambda1)
        .max(prob.weighted.iter().fold(F::zero(), |a, &v| a.max(v.abs())));
    let target = prob.inner_tol * scale;
    if prob.lambda1 == F::zero() {
        return Ok(LassoSolution {
            mean: prob.weighted_mean(),
            sweeps: 0,
            converged: true,
        });
    }
    let mut m = init.to_owned();
    let mut g = prob.omega.dot(&m).dot(&prob.gamma);
    for sweep in 1..=prob.max_sweeps {
        let mut change_sq = F::zero();
        for l in 0..p {
            for s in 0..q {
                let r = prob.residual_with(l, s, m.view(), &g);
                let new = cell_value(prob, l, s, r);
                let delta = new - m[[l, s]];
                if delta == F::zero() {
                    continue;
                }
                m[[l, s]] = new;
                // G += Δ Ω[:, l] Γ[s, :]
                for r in 0..p {
                    let w = prob.omega[[r, l]] * delta;
                    if w != F::zero() {
                        for c in 0..q {
                            g[[r, c]] += w * prob.gamma[[s, c]];
                        }
                    }
                }
                change_sq += delta * delta;
            }
        }
        if sweep % 64 == 0 {
            g = prob.omega.dot(&m).dot(&prob.gamma);
        }
        if change_sq == F::zero() || lasso_certificate(prob, m.view()) <= target {
            return Ok(LassoSolution {
                mean: m,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(LassoSolution {
        mean: m,
        sweeps: prob.max_sweeps,
        converged: false,
    })
}

/// Largest cell-wise violation of the optimality conditions: nonzero cells
/// must satisfy `Σ_i z_i (ΩX_iΓ)_ls − n_k (ΩMΓ)_ls = λ₁ p_ls sign(m_ls)`, zero
/// cells `|R_ls| ≤ λ₁ p_ls`.
pub fn lasso_certificate<F: Scalar>(prob: &LassoMeanProblem<F>, m: ArrayView2<F>) -> F {
    let g = prob.omega.dot(&m).dot(&prob.gamma);
    let mut worst = F::zero();
    for ((l, s), &v) in m.indexed_iter() {
        let t = prob.threshold(l, s);
        let viol = if v != F::zero() {
            (prob.weighted[[l, s]] - prob.n_k * g[[l, s]] - t * v.signum()).abs()
        } else {
            (prob.residual_with(l, s, m, &g).abs() - t).max(F::zero())
        };
        worst = worst.max(viol);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_problem(lambda1: f64) -> LassoMeanProblem<f64> {
        let s_m = array![[2.0, -1.0], [0.4, 3.0]];
        LassoMeanProblem::new(
            s_m,
            4.0,
            &SpdMatrix::identity(2),
            &SpdMatrix::identity(2),
            lambda1,
            Array2::ones((2, 2)),
        )
        .unwrap()
    }

    #[test]
    fn no_shrinkage_at_zero_penalty() {
        let prob = identity_problem(0.0);
        let m = Array2::zeros((2, 2));
        assert!(!shrink_to_zero_test(0, 0, &prob, m.view()));
    }

    #[test]
    fn zero_data_always_shrinks() {
        let prob = LassoMeanProblem::new(
            Array2::zeros((2, 2)),
            4.0,
            &SpdMatrix::identity(2),
            &SpdMatrix::identity(2),
            0.0,
            Array2::ones((2, 2)),
        )
        .unwrap();
        let m = Array2::zeros((2, 2));
        for l in 0..2 {
            for s in 0..2 {
                assert!(shrink_to_zero_test(l, s, &prob, m.view()));
            }
        }
    }

    #[test]
    fn scalar_case_is_soft_threshold() {
        // p = q = 1: m = soft(Σ z ω x γ, λ₁ p₁) / (n ω γ)
        let (omega, gamma, n_k, w_sum, lambda1) = (2.0_f64, 0.5, 3.0, 2.7, 0.4);
        let s_m = array![[w_sum]];
        let prob = LassoMeanProblem::new(
            s_m,
            n_k,
            &SpdMatrix::new(array![[omega]]).unwrap(),
            &SpdMatrix::new(array![[gamma]]).unwrap(),
            lambda1,
            Array2::ones((1, 1)),
        )
        .unwrap();
        let stat = w_sum * omega * gamma;
        let expected = (stat - lambda1) / (n_k * omega * gamma);
        let got = coordinate_update(0, 0, &prob, Array2::zeros((1, 1)).view());
        assert!((got - expected).abs() < 1e-15);
        assert_eq!(
            shrink_to_zero_test(0, 0, &prob, Array2::zeros((1, 1)).view()),
            stat.abs() <= lambda1
        );
    }

    #[test]
    fn identity_unpenalized_cell_is_weighted_mean() {
        let prob = identity_problem(0.0);
        let m = Array2::zeros((2, 2));
        assert!((coordinate_update(1, 1, &prob, m.view()) - 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn huge_penalty_zeroes_everything() {
        let prob = identity_problem(1e6);
        let out = update_mean_lasso(&prob, prob.weighted_mean().view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coordinate_output_is_stationary() {
        let om = SpdMatrix::new(array![[1.5, 0.4], [0.4, 1.0]]).unwrap();
        let ga = SpdMatrix::new(array![[2.0, -0.3], [-0.3, 0.8]]).unwrap();
        let prob = LassoMeanProblem::new(array![[2.0_f64, -1.0], [0.4, 3.0]], 4.0, &om, &ga, 0.2, Array2::ones((2, 2)))
            .unwrap();
        let mut m = array![[0.3, -0.1], [0.2, 0.5]];
        let v = coordinate_update(0, 1, &prob, m.view());
        m[[0, 1]] = v;
        let g = prob.omega.dot(&m).dot(&prob.gamma);
        let lhs = prob.weighted_data()[[0, 1]] - prob.n_k * g[[0, 1]];
        let rhs = if v != 0.0 { 0.2 * v.signum() } else { lhs };
        assert!((lhs - rhs).abs() < 1e-8 || (v == 0.0 && lhs.abs() <= 0.2));
    }
}
