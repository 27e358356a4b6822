use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::SpdMatrix;
use crate::scalar::Scalar;

/// How the component means are penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanPenalty {
    /// `λ₁ Σ_k Σ_r ‖m_r·,k‖₂`, zeroing whole rows.
    #[default]
    GroupRow,
    /// `λ₁ Σ_k ‖P₁ * M_k‖₁`, zeroing single cells.
    Entrywise,
    /// Means are not penalized.
    None,
}

impl std::str::FromStr for MeanPenalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" | "group-row" => Ok(MeanPenalty::GroupRow),
            "lasso" | "entrywise" => Ok(MeanPenalty::Entrywise),
            "none" | "full" => Ok(MeanPenalty::None),
            other => Err(Error::InvalidArgument(format!("unknown penalty kind `{other}`"))),
        }
    }
}

/// Shrinkage `λ = (λ₁, λ₂, λ₃)` and penalty weight matrices.
///
/// Unset weights default to all-ones for `P₁` and all-ones with a zero
/// diagonal for `P₂` and `P₃`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig<F> {
    pub lambda1: F,
    pub lambda2: F,
    pub lambda3: F,
    pub kind: MeanPenalty,
    pub p1: Option<Array2<F>>,
    pub p2: Option<Array2<F>>,
    pub p3: Option<Array2<F>>,
}

impl<F: Scalar> PenaltyConfig<F> {
    pub fn new(kind: MeanPenalty, lambda1: F, lambda2: F, lambda3: F) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
            kind,
            p1: None,
            p2: None,
            p3: None,
        }
    }

    /// No shrinkage anywhere: the full (unpenalized) mixture.
    pub fn unpenalized() -> Self {
        Self::new(MeanPenalty::None, F::zero(), F::zero(), F::zero())
    }

    pub fn with_lambdas(&self, lambda1: F, lambda2: F, lambda3: F) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
            ..self.clone()
        }
    }

    pub fn is_unpenalized(&self) -> bool {
        let mean_free = self.kind == MeanPenalty::None || self.lambda1 == F::zero();
        mean_free && self.lambda2 == F::zero() && self.lambda3 == F::zero()
    }

    pub fn p1(&self, p: usize, q: usize) -> Array2<F> {
        self.p1.clone().unwrap_or_else(|| Array2::ones((p, q)))
    }

    pub fn p2(&self, p: usize) -> Array2<F> {
        self.p2.clone().unwrap_or_else(|| off_diagonal_ones(p))
    }

    pub fn p3(&self, q: usize) -> Array2<F> {
        self.p3.clone().unwrap_or_else(|| off_diagonal_ones(q))
    }

    pub fn validate(&self, p: usize, q: usize) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        check_weights("P1", self.p1.as_ref(), (p, q), false)?;
        check_weights("P2", self.p2.as_ref(), (p, p), true)?;
        check_weights("P3", self.p3.as_ref(), (q, q), true)?;
        Ok(())
    }

    /// Mean penalty for one component.
    pub fn mean_penalty(&self, m: &Array2<F>) -> F {
        match self.kind {
            MeanPenalty::None => F::zero(),
            MeanPenalty::GroupRow => {
                self.lambda1
                    * m.rows()
                        .into_iter()
                        .map(|r| r.iter().map(|&v| v * v).sum::<F>().sqrt())
                        .sum::<F>()
            }
            MeanPenalty::Entrywise => {
                let p1 = self.p1(m.nrows(), m.ncols());
                self.lambda1 * m.iter().zip(p1.iter()).map(|(&v, &w)| w * v.abs()).sum::<F>()
            }
        }
    }

    pub fn omega_penalty(&self, omega: &SpdMatrix<F>) -> F {
        self.lambda2 * weighted_l1(omega.values(), &self.p2(omega.dim()))
    }

    pub fn gamma_penalty(&self, gamma: &SpdMatrix<F>) -> F {
        self.lambda3 * weighted_l1(gamma.values(), &self.p3(gamma.dim()))
    }
}

fn weighted_l1<F: Scalar>(a: &Array2<F>, w: &Array2<F>) -> F {
    a.iter().zip(w.iter()).map(|(&v, &wt)| wt * v.abs()).sum()
}

pub(crate) fn off_diagonal_ones<F: Scalar>(d: usize) -> Array2<F> {
    Array2::from_shape_fn((d, d), |(i, j)| if i == j { F::zero() } else { F::one() })
}

fn check_weights<F: Scalar>(name: &str, w: Option<&Array2<F>>, dim: (usize, usize), symmetric: bool) -> Result<()> {
    let Some(w) = w else { return Ok(()) };
    if w.dim() != dim {
        return Err(Error::Shape(format!("{name} is {:?}, expected {dim:?}", w.dim())));
    }
    if w.iter().any(|&v| !(v >= F::zero()) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} weights must be finite and non-negative")));
    }
    if symmetric {
        for ((i, j), &v) in w.indexed_iter() {
            if v != w[[j, i]] {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}
