//! Penalized EM for mixtures of matrix-normal distributions.

mod init;
mod step;

pub use init::{initialize, InitMethod};
pub use step::{e_step, m_step, q_function, MStepOptions};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ThreeWayData;
use crate::error::{Error, Result};
use crate::matnorm::SpdMatrix;
use crate::penalty::PenaltyConfig;
use crate::scalar::Scalar;
use crate::select::{bic, count_nonzero};

/// `τ_k`, `M_k`, `Ω_k`, `Γ_k` for `k = 1..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<F> {
    pub tau: Vec<F>,
    pub means: Vec<Array2<F>>,
    pub omegas: Vec<SpdMatrix<F>>,
    pub gammas: Vec<SpdMatrix<F>>,
}

impl<F: Scalar> MixtureParams<F> {
    pub fn new(
        tau: Vec<F>,
        means: Vec<Array2<F>>,
        omegas: Vec<SpdMatrix<F>>,
        gammas: Vec<SpdMatrix<F>>,
    ) -> Result<Self> {
        let k = tau.len();
        if k == 0 || means.len() != k || omegas.len() != k || gammas.len() != k {
            return Err(Error::Shape(format!(
                "component counts disagree: tau {k}, means {}, omegas {}, gammas {}",
                means.len(),
                omegas.len(),
                gammas.len()
            )));
        }
        let (p, q) = means[0].dim();
        for c in 0..k {
            if means[c].dim() != (p, q) || omegas[c].dim() != p || gammas[c].dim() != q {
                return Err(Error::Shape(format!("component {c} does not match {p}x{q}")));
            }
        }
        let total: F = tau.iter().copied().sum();
        if tau.iter().any(|&t| !(t > F::zero())) || (total - F::one()).abs() > F::lit(1e-9) {
            return Err(Error::InvalidArgument(format!(
                "mixing proportions must be positive and sum to one (sum {total})"
            )));
        }
        Ok(Self {
            tau,
            means,
            omegas,
            gammas,
        })
    }

    pub fn k(&self) -> usize {
        self.tau.len()
    }

    pub fn p(&self) -> usize {
        self.means[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.means[0].ncols()
    }

    /// Components reordered so that new component `j` is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            tau: perm.iter().map(|&j| self.tau[j]).collect(),
            means: perm.iter().map(|&j| self.means[j].clone()).collect(),
            omegas: perm.iter().map(|&j| self.omegas[j].clone()).collect(),
            gammas: perm.iter().map(|&j| self.gammas[j].clone()).collect(),
        }
    }
}

/// Rescales each component to `|Γ_k| = 1`: with `c = |Γ_k|^{1/q}`,
/// `Γ_k ← Γ_k / c` and `Ω_k ← c Ω_k`. Densities and zero patterns are unchanged.
pub fn normalize_identifiability<F: Scalar>(params: &MixtureParams<F>) -> MixtureParams<F> {
    let q = F::from_count(params.q());
    let mut out = params.clone();
    for (omega, gamma) in out.omegas.iter_mut().zip(out.gammas.iter_mut()) {
        let c = (gamma.logdet() / q).exp();
        *gamma = gamma.scaled(F::one() / c);
        *omega = omega.scaled(c);
    }
    out
}

/// Posterior membership probabilities, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities<F> {
    pub z: Array2<F>,
}

impl<F: Scalar> Responsibilities<F> {
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut z = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            z[[i, l]] = F::one();
        }
        Self { z }
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// `n̂_k = Σ_i ẑ_ik`
    pub fn soft_counts(&self) -> Vec<F> {
        self.z.columns().into_iter().map(|c| c.sum()).collect()
    }
}

/// MAP labels (0-based), ties to the smallest component index.
pub fn classify<F: Scalar>(resp: &Responsibilities<F>) -> Vec<usize> {
    resp.z
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// A component's soft count fell below the floor.
    Degenerate {
        component: usize,
        soft_count: f64,
        floor: f64,
        iteration: usize,
    },
    /// A numerical sub-solver failed.
    Failed { message: String, iteration: usize },
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop when the penalized log-likelihood gains less than this.
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitMethod,
    /// Extra k-means++ starts screened next to `init`. Each candidate runs
    /// `screen_iter` iterations and the best penalized log-likelihood is
    /// continued; degenerate candidates are dropped.
    pub restarts: usize,
    pub screen_iter: usize,
    pub mstep: MStepOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_iter: 500,
            seed: 0,
            init: InitMethod::Ward,
            restarts: 0,
            screen_iter: 10,
            mstep: MStepOptions::default(),
        }
    }
}

impl FitOptions {
    /// Uses the constant proximal step `ν = 1e-4`.
    pub fn with_fixed_step(mut self, fixed: bool) -> Self {
        self.mstep.fixed_step = fixed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<F> {
    pub params: MixtureParams<F>,
    pub resp: Responsibilities<F>,
    /// MAP labels, 0-based.
    pub labels: Vec<usize>,
    /// Unpenalized log-likelihood at `params`.
    pub loglik: F,
    /// Penalized log-likelihood after each EM iteration (before the final
    /// identifiability rescaling).
    pub pen_loglik_trace: Vec<F>,
    pub d0: usize,
    pub bic: F,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
}

impl<F: Scalar> FitResult<F> {
    pub fn is_degenerate(&self) -> bool {
        matches!(self.status, FitStatus::Degenerate { .. })
    }
}

/// `ℓ(Θ) − p_λ(Θ)`
pub fn penalized_loglik<F: Scalar>(loglik: F, params: &MixtureParams<F>, penalty: &PenaltyConfig<F>) -> F {
    loglik - penalty_value(params, penalty)
}

pub fn penalty_value<F: Scalar>(params: &MixtureParams<F>, penalty: &PenaltyConfig<F>) -> F {
    (0..params.k())
        .map(|k| {
            penalty.mean_penalty(&params.means[k])
                + penalty.omega_penalty(&params.omegas[k])
                + penalty.gamma_penalty(&params.gammas[k])
        })
        .sum()
}

/// Minimum soft count a component may have: `max(2, 0.01 n)`.
pub fn soft_count_floor(n: usize) -> f64 {
    (0.01 * n as f64).max(2.0)
}

/// Parameters implied by a hard partition before any M-step: cluster means,
/// cluster proportions and identity precisions.
pub fn params_from_partition<F: Scalar>(data: &ThreeWayData<F>, labels: &[usize], k: usize) -> Result<MixtureParams<F>> {
    let (p, q) = (data.p(), data.q());
    let mut counts = vec![0usize; k];
    let mut means = vec![Array2::<F>::zeros((p, q)); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} out of range for K = {k}")));
        }
        counts[l] += 1;
        means[l] += data.unit(i);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("initial partition leaves group {empty} empty")));
    }
    let n = F::from_count(data.n());
    for (m, &c) in means.iter_mut().zip(&counts) {
        let cf = F::from_count(c);
        m.mapv_inplace(|v| v / cf);
    }
    MixtureParams::new(
        counts.iter().map(|&c| F::from_count(c) / n).collect(),
        means,
        vec![SpdMatrix::identity(p); k],
        vec![SpdMatrix::identity(q); k],
    )
}

/// Runs penalized EM with `k` components.
pub fn fit<F: Scalar>(
    data: &ThreeWayData<F>,
    k: usize,
    penalty: &PenaltyConfig<F>,
    opts: &FitOptions,
) -> Result<FitResult<F>> {
    if k == 0 || data.n() < k {
        return Err(Error::InvalidArgument(format!("need 1 <= K <= n, got K = {k}, n = {}", data.n())));
    }
    penalty.validate(data.p(), data.q())?;
    let labels = initialize(data, k, opts.init, opts.seed)?;
    if opts.restarts == 0 {
        return fit_from_labels(data, k, &labels, penalty, opts);
    }
    let mut starts = vec![labels];
    for attempt in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(attempt as u64 + 1));
        let labels = initialize(data, k, InitMethod::KMeansPlusPlus, seed)?;
        if !starts.contains(&labels) {
            starts.push(labels);
        }
    }
    let short = FitOptions {
        max_iter: opts.screen_iter.max(1),
        ..opts.clone()
    };
    let mut best: Option<(F, usize)> = None;
    for (idx, labels) in starts.iter().enumerate() {
        let trial = fit_from_labels(data, k, labels, penalty, &short)?;
        if matches!(trial.status, FitStatus::Degenerate { .. } | FitStatus::Failed { .. }) {
            continue;
        }
        let Some(&lp) = trial.pen_loglik_trace.last() else { continue };
        if best.map_or(true, |(b, _)| lp > b) {
            best = Some((lp, idx));
        }
    }
    let chosen = best.map_or(0, |(_, idx)| idx);
    fit_from_labels(data, k, &starts[chosen], penalty, opts)
}

/// EM from a supplied hard partition (labels `0..k`, all groups non-empty).
pub fn fit_from_labels<F: Scalar>(
    data: &ThreeWayData<F>,
    k: usize,
    labels: &[usize],
    penalty: &PenaltyConfig<F>,
    opts: &FitOptions,
) -> Result<FitResult<F>> {
    if labels.len() != data.n() {
        return Err(Error::Shape(format!("{} labels for {} units", labels.len(), data.n())));
    }
    penalty.validate(data.p(), data.q())?;
    let mut params = params_from_partition(data, labels, k)?;
    let mut resp = Responsibilities::from_labels(labels, k);
    let mut loglik: Option<F> = None;
    let mut trace: Vec<F> = Vec::new();
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    let eps = F::lit(opts.eps);
    for iter in 1..=opts.max_iter {
        let next = match m_step(data, &resp, penalty, &params, &opts.mstep) {
            Ok(next) => next,
            Err(Error::Degenerate {
                component,
                soft_count,
                floor,
            }) => {
                status = FitStatus::Degenerate {
                    component,
                    soft_count,
                    floor,
                    iteration: iter,
                };
                break;
            }
            Err(e) => {
                status = FitStatus::Failed {
                    message: e.to_string(),
                    iteration: iter,
                };
                break;
            }
        };
        let (new_resp, ll) = e_step(data, &next)?;
        params = next;
        resp = new_resp;
        loglik = Some(ll);
        iterations = iter;
        let lp = penalized_loglik(ll, &params, penalty);
        let gain = trace.last().map(|&last| lp - last);
        trace.push(lp);
        if let Some(gain) = gain {
            if gain < eps {
                status = FitStatus::Converged;
                break;
            }
        }
    }

    let loglik = match loglik {
        Some(ll) => ll,
        None => {
            let (r, ll) = e_step(data, &params)?;
            resp = r;
            ll
        }
    };
    let params = normalize_identifiability(&params);
    let d0 = count_nonzero(&params);
    Ok(FitResult {
        labels: classify(&resp),
        bic: bic(loglik, d0, data.n()),
        params,
        resp,
        loglik,
        pen_loglik_trace: trace,
        d0,
        iterations,
        converged: status == FitStatus::Converged,
        status,
    })
}
