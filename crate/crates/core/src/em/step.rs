use ndarray::Array2;

use crate::data::ThreeWayData;
use crate::error::{Error, Result};
use crate::glasso::{glasso_iterate, GlassoProblem, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::matnorm::{log_normalizer, quadratic_forms, SpdMatrix};
use crate::mean_lasso::{solve_lasso, LassoMeanProblem};
use crate::mean_prox::{solve_group, MeanUpdateProblem, StepRule, DEFAULT_INNER_TOL, DEFAULT_MAX_INNER, FIXED_STEP};
use crate::penalty::{MeanPenalty, PenaltyConfig};
use crate::scalar::Scalar;

use super::{soft_count_floor, MixtureParams, Responsibilities};

#[derive(Debug, Clone)]
pub struct MStepOptions {
    /// Constant proximal step `1e-4` instead of backtracking from `1/L`.
    pub fixed_step: bool,
    pub flipflop_max: usize,
    /// Relative Frobenius change of `(Ω, Γ)` that ends the flip-flop.
    pub flipflop_tol: f64,
    pub glasso_tol: f64,
    pub glasso_max_sweeps: usize,
    pub mean_tol: f64,
    pub mean_max_inner: usize,
}

impl Default for MStepOptions {
    fn default() -> Self {
        Self {
            fixed_step: false,
            flipflop_max: 10,
            flipflop_tol: 1e-4,
            glasso_tol: DEFAULT_TOL,
            glasso_max_sweeps: DEFAULT_MAX_SWEEPS,
            mean_tol: DEFAULT_INNER_TOL,
            mean_max_inner: DEFAULT_MAX_INNER,
        }
    }
}

/// Responsibilities at `params` and the observed-data log-likelihood.
pub fn e_step<F: Scalar>(data: &ThreeWayData<F>, params: &MixtureParams<F>) -> Result<(Responsibilities<F>, F)> {
    let (n, k) = (data.n(), params.k());
    if data.p() != params.p() || data.q() != params.q() {
        return Err(Error::Shape(format!(
            "data is {}x{}, parameters are {}x{}",
            data.p(),
            data.q(),
            params.p(),
            params.q()
        )));
    }
    let consts: Vec<F> = (0..k)
        .map(|c| params.tau[c].ln() + log_normalizer(params.p(), params.q(), &params.omegas[c], &params.gammas[c]))
        .collect();
    let mut z = Array2::<F>::zeros((n, k));
    let half = F::lit(0.5);
    for c in 0..k {
        let qf = quadratic_forms(data.units(), params.means[c].view(), &params.omegas[c], &params.gammas[c]);
        for (i, v) in qf.into_iter().enumerate() {
            z[[i, c]] = consts[c] - half * v;
        }
    }
    let mut loglik = F::zero();
    for mut row in z.rows_mut() {
        let top = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - top).exp());
        let total: F = row.sum();
        row.mapv_inplace(|v| v / total);
        loglik += top + total.ln();
    }
    if !loglik.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok((Responsibilities { z }, loglik))
}

/// `Q(Θ | Θ') = Σ_i Σ_k ẑ_ik {log τ_k + log φ(X_i; M_k, Ω_k, Γ_k)} − p_λ(Θ)`.
pub fn q_function<F: Scalar>(
    data: &ThreeWayData<F>,
    resp: &Responsibilities<F>,
    params: &MixtureParams<F>,
    penalty: &PenaltyConfig<F>,
) -> F {
    let half = F::lit(0.5);
    let mut total = F::zero();
    for c in 0..params.k() {
        let lc = params.tau[c].ln() + log_normalizer(params.p(), params.q(), &params.omegas[c], &params.gammas[c]);
        let qf = quadratic_forms(data.units(), params.means[c].view(), &params.omegas[c], &params.gammas[c]);
        for (i, v) in qf.into_iter().enumerate() {
            total += resp.z[[i, c]] * (lc - half * v);
        }
    }
    total - super::penalty_value(params, penalty)
}

/// One M-step. `prev` supplies warm starts and the precisions used by the mean
/// update. Fails with [`Error::Degenerate`] when a soft count is below the floor.
pub fn m_step<F: Scalar>(
    data: &ThreeWayData<F>,
    resp: &Responsibilities<F>,
    penalty: &PenaltyConfig<F>,
    prev: &MixtureParams<F>,
    opts: &MStepOptions,
) -> Result<MixtureParams<F>> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    let k = resp.k();
    if resp.n() != n || prev.k() != k {
        return Err(Error::Shape(format!(
            "responsibilities are {}x{k}, data has {n} units, parameters {} components",
            resp.n(),
            prev.k()
        )));
    }
    let counts = resp.soft_counts();
    let floor = soft_count_floor(n);
    for (c, &nk) in counts.iter().enumerate() {
        if nk.as_f64() < floor {
            return Err(Error::Degenerate {
                component: c,
                soft_count: nk.as_f64(),
                floor,
            });
        }
    }
    let nf = F::from_count(n);
    let tau: Vec<F> = counts.iter().map(|&nk| nk / nf).collect();
    let mut means = Vec::with_capacity(k);
    let mut omegas = Vec::with_capacity(k);
    let mut gammas = Vec::with_capacity(k);
    for c in 0..k {
        let nk = counts[c];
        let weights = resp.z.column(c);
        let mut s_m = Array2::<F>::zeros((p, q));
        for (i, &w) in weights.iter().enumerate() {
            if w > F::zero() {
                s_m.scaled_add(w, data.unit(i));
            }
        }
        let mean = update_mean(s_m, nk, &prev.omegas[c], &prev.gammas[c], &prev.means[c], penalty, opts)?;
        let scatter = scatter_tensor(data, &weights.to_vec(), &mean);
        let (omega, gamma) = update_precisions(&scatter, nk, p, q, &prev.omegas[c], &prev.gammas[c], penalty, opts)?;
        means.push(mean);
        omegas.push(omega);
        gammas.push(gamma);
    }
    Ok(MixtureParams {
        tau,
        means,
        omegas,
        gammas,
    })
}

fn update_mean<F: Scalar>(
    s_m: Array2<F>,
    nk: F,
    omega: &SpdMatrix<F>,
    gamma: &SpdMatrix<F>,
    prev_mean: &Array2<F>,
    penalty: &PenaltyConfig<F>,
    opts: &MStepOptions,
) -> Result<Array2<F>> {
    if penalty.kind == MeanPenalty::None || penalty.lambda1 == F::zero() {
        return Ok(s_m.mapv(|v| v / nk));
    }
    let (p, q) = s_m.dim();
    match penalty.kind {
        MeanPenalty::GroupRow => {
            let step = if opts.fixed_step {
                StepRule::Fixed(F::lit(FIXED_STEP))
            } else {
                StepRule::Backtracking { initial: None }
            };
            let prob = MeanUpdateProblem::new(s_m, nk, omega, gamma, penalty.lambda1)?
                .with_step(step)
                .with_inner_tol(F::lit(opts.mean_tol))
                .with_max_inner(opts.mean_max_inner);
            let sol = solve_group(&prob, prev_mean.view())?;
            // Generalized EM: never accept a mean that lowers the objective.
            if prob.objective(sol.mean.view()) >= prob.objective(prev_mean.view()) {
                Ok(sol.mean)
            } else {
                Ok(prev_mean.clone())
            }
        }
        MeanPenalty::Entrywise => {
            let prob = LassoMeanProblem::new(s_m, nk, omega, gamma, penalty.lambda1, penalty.p1(p, q))?
                .with_inner_tol(F::lit(opts.mean_tol))
                .with_max_sweeps(opts.mean_max_inner);
            let sol = solve_lasso(&prob, prev_mean.view())?;
            if prob.objective(sol.mean.view()) >= prob.objective(prev_mean.view()) {
                Ok(sol.mean)
            } else {
                Ok(prev_mean.clone())
            }
        }
        MeanPenalty::None => unreachable!(),
    }
}

/// `T[(r,c),(r',c')] = Σ_i z_i D_i[r,c] D_i[r',c']` with `D_i = X_i − M`,
/// indices flattened row-major. Both scatter matrices are contractions of it.
pub(crate) fn scatter_tensor<F: Scalar>(data: &ThreeWayData<F>, weights: &[F], mean: &Array2<F>) -> Array2<F> {
    let (p, q) = mean.dim();
    let active: Vec<usize> = (0..data.n()).filter(|&i| weights[i] > F::zero()).collect();
    let mut a = Array2::<F>::zeros((active.len(), p * q));
    for (row, &i) in active.iter().enumerate() {
        let sw = weights[i].sqrt();
        let x = data.unit(i);
        for r in 0..p {
            for c in 0..q {
                a[[row, r * q + c]] = sw * (x[[r, c]] - mean[[r, c]]);
            }
        }
    }
    a.t().dot(&a)
}

/// `Σ_i z_i D_i Γ D_iᵀ` from the tensor.
pub(crate) fn contract_rows<F: Scalar>(t: &Array2<F>, gamma: &Array2<F>, p: usize, q: usize) -> Array2<F> {
    let mut out = Array2::<F>::zeros((p, p));
    for r in 0..p {
        for r2 in r..p {
            let mut acc = F::zero();
            for c in 0..q {
                for c2 in 0..q {
                    acc += gamma[[c, c2]] * t[[r * q + c, r2 * q + c2]];
                }
            }
            out[[r, r2]] = acc;
            out[[r2, r]] = acc;
        }
    }
    out
}

/// `Σ_i z_i D_iᵀ Ω D_i` from the tensor.
pub(crate) fn contract_cols<F: Scalar>(t: &Array2<F>, omega: &Array2<F>, p: usize, q: usize) -> Array2<F> {
    let mut out = Array2::<F>::zeros((q, q));
    for c in 0..q {
        for c2 in c..q {
            let mut acc = F::zero();
            for r in 0..p {
                for r2 in 0..p {
                    acc += omega[[r, r2]] * t[[r * q + c, r2 * q + c2]];
                }
            }
            out[[c, c2]] = acc;
            out[[c2, c]] = acc;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn update_precisions<F: Scalar>(
    t: &Array2<F>,
    nk: F,
    p: usize,
    q: usize,
    omega0: &SpdMatrix<F>,
    gamma0: &SpdMatrix<F>,
    penalty: &PenaltyConfig<F>,
    opts: &MStepOptions,
) -> Result<(SpdMatrix<F>, SpdMatrix<F>)> {
    let two = F::lit(2.0);
    let (pf, qf) = (F::from_count(p), F::from_count(q));
    let rho_omega = penalty.p2(p).mapv(|w| w * two * penalty.lambda2 / (nk * qf));
    let rho_gamma = penalty.p3(q).mapv(|w| w * two * penalty.lambda3 / (nk * pf));
    let mut omega = omega0.clone();
    let mut gamma = gamma0.clone();
    let tol = F::lit(opts.flipflop_tol);
    for _ in 0..opts.flipflop_max.max(1) {
        let s_omega = contract_rows(t, gamma.values(), p, q).mapv(|v| v / (nk * qf));
        let new_omega = precision_step(s_omega, &rho_omega, &omega, opts)?;
        let s_gamma = contract_cols(t, new_omega.values(), p, q).mapv(|v| v / (nk * pf));
        let new_gamma = unit_determinant(precision_step(s_gamma, &rho_gamma, &gamma, opts)?, qf);
        let change = rel_change(omega.values(), new_omega.values()).max(rel_change(gamma.values(), new_gamma.values()));
        (omega, gamma) = (new_omega, new_gamma);
        if change < tol {
            break;
        }
    }
    Ok((omega, gamma))
}

/// `Γ ↦ Γ / |Γ|^{1/q}`. Writing `Γ = sG` with `|G| = 1`, the Γ-step objective
/// separates into a term in `s` and `−s(½tr(S_Γ G) + λ₃‖P₃∘G‖₁)`, so the
/// rescaled glasso solution is also the exact maximizer under `|Γ| = 1`.
fn unit_determinant<F: Scalar>(gamma: SpdMatrix<F>, qf: F) -> SpdMatrix<F> {
    let c = (gamma.logdet() / qf).exp();
    if !c.is_finite() || c == F::one() {
        return gamma;
    }
    gamma.scaled(F::one() / c)
}

fn precision_step<F: Scalar>(s: Array2<F>, rho: &Array2<F>, warm: &SpdMatrix<F>, opts: &MStepOptions) -> Result<SpdMatrix<F>> {
    if rho.iter().all(|&v| v == F::zero()) {
        return SpdMatrix::new(s)?.inverse_spd();
    }
    let prob = GlassoProblem::new(s, rho.clone())?
        .with_tol(F::lit(opts.glasso_tol))
        .with_max_sweeps(opts.glasso_max_sweeps);
    Ok(glasso_iterate(&prob, Some(warm))?.theta)
}

fn rel_change<F: Scalar>(old: &Array2<F>, new: &Array2<F>) -> F {
    let diff: F = old.iter().zip(new.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let base: F = old.iter().map(|&a| a * a).sum();
    (diff / base.max(F::min_positive_value())).sqrt()
}
