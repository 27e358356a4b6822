//! Group-lasso update of a component mean matrix by row-wise proximal gradient.
//!
//! Minimizes `f(M) + g(M)` with
//! `f(M) = (n_k/2) tr{Ω M Γ Mᵀ} − tr{Ω S_M Γ Mᵀ}` and `g(M) = λ₁ Σ_l ‖m_l·‖₂`,
//! cycling over rows `l = 1..p` with `b = m_l· − ν ∇_l f`, `m_l· ← prox_{νλ₁}(b)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::matnorm::SpdMatrix;
use crate::scalar::Scalar;

/// Constant proximal step for `StepRule::Fixed` runs.
pub const FIXED_STEP: f64 = 1e-4;
/// Certificate tolerance relative to the problem scale, floored at 64 ulp for `f32`.
pub const DEFAULT_INNER_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_INNER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule<F> {
    /// Constant `ν` for every row update.
    Fixed(F),
    /// Start from `initial` (or the row's own `1/(n_k ω_ll λmax(Γ))` when
    /// `None`) and halve whenever the
    /// row update fails the sufficient-decrease test.
    Backtracking { initial: Option<F> },
}

impl<F: Scalar> Default for StepRule<F> {
    fn default() -> Self {
        StepRule::Backtracking { initial: None }
    }
}

#[derive(Debug, Clone)]
pub struct MeanUpdateProblem<F> {
    pub s_m: Array2<F>,
    pub n_k: F,
    pub omega: Array2<F>,
    pub gamma: Array2<F>,
    pub lambda1: F,
    pub step: StepRule<F>,
    /// Sweeps stop once [`group_certificate`] is below `inner_tol` times
    /// `max(1, λ₁, max_l ‖(Ω S_M Γ)_l·‖)`.
    pub inner_tol: F,
    pub max_inner: usize,
    /// `Ω S_M Γ`
    weighted: Array2<F>,
    lipschitz: F,
    gamma_top: F,
}

impl<F: Scalar> MeanUpdateProblem<F> {
    pub fn new(s_m: Array2<F>, n_k: F, omega: &SpdMatrix<F>, gamma: &SpdMatrix<F>, lambda1: F) -> Result<Self> {
        let (p, q) = s_m.dim();
        if omega.dim() != p || gamma.dim() != q {
            return Err(Error::Shape(format!(
                "S_M is {p}x{q}, Omega is {0}x{0}, Gamma is {1}x{1}",
                omega.dim(),
                gamma.dim()
            )));
        }
        if !(n_k > F::zero()) {
            return Err(Error::InvalidArgument(format!("soft count must be positive, got {n_k}")));
        }
        if !(lambda1 >= F::zero()) {
            return Err(Error::InvalidArgument(format!("lambda1 must be >= 0, got {lambda1}")));
        }
        let weighted = omega.values().dot(&s_m).dot(gamma.values());
        let gamma_top = gamma.spectral_upper_bound();
        let lipschitz = n_k * omega.spectral_upper_bound() * gamma_top;
        Ok(Self {
            s_m,
            n_k,
            omega: omega.values().clone(),
            gamma: gamma.values().clone(),
            lambda1,
            step: StepRule::default(),
            inner_tol: F::lit(DEFAULT_INNER_TOL).max(F::epsilon() * F::lit(64.0)),
            max_inner: DEFAULT_MAX_INNER,
            weighted,
            lipschitz,
            gamma_top,
        })
    }

    pub fn with_step(mut self, step: StepRule<F>) -> Self {
        self.step = step;
        self
    }

    pub fn with_inner_tol(mut self, tol: F) -> Self {
        self.inner_tol = tol;
        self
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner;
        self
    }

    pub fn p(&self) -> usize {
        self.s_m.nrows()
    }

    pub fn q(&self) -> usize {
        self.s_m.ncols()
    }

    /// `n_k · λmax(Ω) · λmax(Γ)` (upper bound), the Lipschitz constant of `∇f`.
    pub fn lipschitz(&self) -> F {
        self.lipschitz
    }

    /// `Ω S_M Γ`, the data term of the gradient.
    pub fn weighted_data(&self) -> &Array2<F> {
        &self.weighted
    }

    /// Weighted sample mean `S_M / n_k`.
    pub fn weighted_mean(&self) -> Array2<F> {
        self.s_m.mapv(|v| v / self.n_k)
    }

    /// Smooth part `f(M)`.
    pub fn smooth(&self, m: ArrayView2<F>) -> F {
        let g = self.omega.dot(&m).dot(&self.gamma);
        let half = F::lit(0.5);
        m.iter()
            .zip(g.iter().zip(self.weighted.iter()))
            .map(|(&mv, (&gv, &wv))| half * self.n_k * mv * gv - wv * mv)
            .sum()
    }

    pub fn penalty(&self, m: ArrayView2<F>) -> F {
        self.lambda1 * m.rows().into_iter().map(|r| row_norm(r)).sum::<F>()
    }

    /// The maximized objective `tr{Ω S_M Γ Mᵀ} − (n_k/2) tr{Ω M Γ Mᵀ} − λ₁ Σ ‖m_l·‖`.
    pub fn objective(&self, m: ArrayView2<F>) -> F {
        -(self.smooth(m) + self.penalty(m))
    }
}

/// `∂f/∂M = n_k Ω M Γ − Ω S_M Γ`.
pub fn grad_f<F: Scalar>(m: ArrayView2<F>, prob: &MeanUpdateProblem<F>) -> Array2<F> {
    prob.omega.dot(&m).dot(&prob.gamma).mapv(|v| v * prob.n_k) - &prob.weighted
}

fn row_norm<F: Scalar>(r: ArrayView1<F>) -> F {
    r.iter().map(|&v| v * v).sum::<F>().sqrt()
}

/// Row-wise soft threshold: `b (1 − t/‖b‖₂)` if `‖b‖₂ > t`, else exactly zero.
pub fn prox_row<F: Scalar>(b: ArrayView1<F>, threshold: F) -> Array1<F> {
    let norm = row_norm(b);
    if norm > threshold {
        let factor = F::one() - threshold / norm;
        b.mapv(|v| v * factor)
    } else {
        Array1::zeros(b.len())
    }
}

#[derive(Debug, Clone)]
pub struct MeanSolution<F> {
    pub mean: Array2<F>,
    pub sweeps: usize,
    pub converged: bool,
    /// Smallest row step in effect at exit.
    pub step: F,
}

/// Proximal gradient from `init`; see [`solve_group`] for diagnostics.
pub fn update_mean_group<F: Scalar>(prob: &MeanUpdateProblem<F>, init: ArrayView2<F>) -> Result<Array2<F>> {
    solve_group(prob, init).map(|s| s.mean)
}

/// With `λ₁ = 0` the weighted mean is returned as is.
pub fn solve_group<F: Scalar>(prob: &MeanUpdateProblem<F>, init: ArrayView2<F>) -> Result<MeanSolution<F>> {
    let (p, q) = (prob.p(), prob.q());
    if init.dim() != (p, q) {
        return Err(Error::Shape(format!("init is {:?}, expected {p}x{q}", init.dim())));
    }
    let row_step = |l: usize| F::one() / (prob.n_k * prob.omega[[l, l]] * prob.gamma_top);
    let (mut steps, backtrack): (Vec<F>, bool) = match prob.step {
        StepRule::Fixed(v) => (vec![v; p], false),
        StepRule::Backtracking { initial } => ((0..p).map(|l| initial.unwrap_or_else(|| row_step(l))).collect(), true),
    };
    if let Some(&bad) = steps.iter().find(|v| !(**v > F::zero())) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {bad}")));
    }
    let scale = F::one().max(prob.lambda1).max(
        prob.weighted
            .rows()
            .into_iter()
            .map(|r| row_norm(r))
            .fold(F::zero(), F::max),
    );
    let target = prob.inner_tol * scale;
    if prob.lambda1 == F::zero() {
        return Ok(MeanSolution {
            mean: prob.weighted_mean(),
            sweeps: 0,
            converged: true,
            step: min_step(&steps),
        });
    }

    let mut m = init.to_owned();
    // ΩM, maintained incrementally as rows change.
    let mut om = prob.omega.dot(&m);
    let mut obj = prob.smooth(m.view()) + prob.penalty(m.view());
    let mut worse_streak = 0usize;
    let slack = F::lit(1e-9);
    let mut grad_row = Array1::<F>::zeros(q);
    let mut b = Array1::<F>::zeros(q);

    for sweep in 1..=prob.max_inner {
        let mut change_sq = F::zero();
        for l in 0..p {
            for s in 0..q {
                let mut acc = F::zero();
                for c in 0..q {
                    acc += om[[l, c]] * prob.gamma[[c, s]];
                }
                grad_row[s] = prob.n_k * acc - prob.weighted[[l, s]];
            }
            let omega_ll = prob.omega[[l, l]];
            let step = &mut steps[l];
            let delta = loop {
                for s in 0..q {
                    b[s] = m[[l, s]] - *step * grad_row[s];
                }
                let new_row = prox_row(b.view(), *step * prob.lambda1);
                let delta: Array1<F> = &new_row - &m.row(l);
                if !backtrack {
                    break delta;
                }
                // f changes by ⟨∇_l f, Δ⟩ + (n_k/2) ω_ll ΔΓΔᵀ along a row; require
                // the quadratic term to be dominated by ‖Δ‖²/(2ν).
                let dsq: F = delta.iter().map(|&v| v * v).sum();
                let curv = prob.n_k * omega_ll * delta.dot(&prob.gamma.dot(&delta));
                if curv <= dsq / *step * (F::one() + F::lit(1e-12)) || dsq == F::zero() {
                    break delta;
                }
                *step = *step * F::lit(0.5);
            };
            if delta.iter().all(|&v| v == F::zero()) {
                continue;
            }
            for s in 0..q {
                let v = m[[l, s]] + delta[s];
                m[[l, s]] = v;
            }
            // Write exact zeros for rows killed by the prox.
            if m.row(l).iter().all(|&v| v == F::zero()) {
                m.row_mut(l).fill(F::zero());
            }
            for r in 0..p {
                let w = prob.omega[[r, l]];
                if w != F::zero() {
                    for s in 0..q {
                        om[[r, s]] += w * delta[s];
                    }
                }
            }
            change_sq += delta.iter().map(|&v| v * v).sum::<F>();
        }

        let new_obj = prob.smooth(m.view()) + prob.penalty(m.view());
        if !new_obj.is_finite() {
            return Err(Error::Diverged { sweep });
        }
        if backtrack {
            debug_assert!(
                new_obj <= obj + slack * F::one().max(obj.abs()),
                "objective increased under backtracking: {obj} -> {new_obj}"
            );
        } else if new_obj > obj + slack * F::one().max(obj.abs()) {
            worse_streak += 1;
            if worse_streak >= 20 {
                return Err(Error::Diverged { sweep });
            }
        } else {
            worse_streak = 0;
        }
        obj = new_obj;
        // fresh ΩM every so often to stop drift
        if sweep % 64 == 0 {
            om = prob.omega.dot(&m);
        }
        if change_sq == F::zero() || group_certificate(prob, m.view()) <= target {
            return Ok(MeanSolution {
                mean: m,
                sweeps: sweep,
                converged: true,
                step: min_step(&steps),
            });
        }
    }
    Ok(MeanSolution {
        mean: m,
        sweeps: prob.max_inner,
        converged: false,
        step: min_step(&steps),
    })
}

fn min_step<F: Scalar>(steps: &[F]) -> F {
    steps.iter().copied().fold(F::infinity(), F::min)
}

/// Largest violation of the group-lasso optimality conditions: for nonzero rows
/// `‖∇_l f + λ₁ m_l/‖m_l‖‖`, for zero rows `max(0, ‖∇_l f‖ − λ₁)`.
pub fn group_certificate<F: Scalar>(prob: &MeanUpdateProblem<F>, m: ArrayView2<F>) -> F {
    let g = grad_f(m, prob);
    let mut worst = F::zero();
    for (row, grow) in m.rows().into_iter().zip(g.rows()) {
        let norm = row_norm(row);
        let v = if norm > F::zero() {
            let resid: F = row
                .iter()
                .zip(grow.iter())
                .map(|(&mv, &gv)| {
                    let r = gv + prob.lambda1 * mv / norm;
                    r * r
                })
                .sum();
            resid.sqrt()
        } else {
            (row_norm(grow) - prob.lambda1).max(F::zero())
        };
        worst = worst.max(v);
    }
    worst
}
