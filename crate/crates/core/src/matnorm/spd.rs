use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric positive-definite matrix with its lower Cholesky factor cached.
///
/// The input is symmetrized as `(A + Aᵀ)/2` on construction, so `values` is
/// exactly symmetric and `chol · cholᵀ = values` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<F> {
    values: Array2<F>,
    chol: Array2<F>,
}

impl<F: Scalar> SpdMatrix<F> {
    pub fn new(a: Array2<F>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::Shape(format!("expected a square matrix, got {r}x{c}")));
        }
        let values = symmetrize(a.view());
        let chol = cholesky(values.view())?;
        Ok(Self { values, chol })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            values: Array2::eye(d),
            chol: Array2::eye(d),
        }
    }

    pub fn from_diagonal(diag: &[F]) -> Result<Self> {
        let d = diag.len();
        let mut a = Array2::zeros((d, d));
        for (j, &v) in diag.iter().enumerate() {
            a[[j, j]] = v;
        }
        Self::new(a)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<F> {
        &self.values
    }

    pub fn into_values(self) -> Array2<F> {
        self.values
    }

    /// Lower-triangular `L` with `L Lᵀ = A`.
    pub fn chol(&self) -> &Array2<F> {
        &self.chol
    }

    pub fn logdet(&self) -> F {
        let two = F::lit(2.0);
        two * self.chol.diag().iter().map(|v| v.ln()).sum::<F>()
    }

    /// `A⁻¹` from the Cholesky factor, symmetrized.
    pub fn inverse(&self) -> Array2<F> {
        let d = self.dim();
        let linv = lower_triangular_inverse(self.chol.view());
        // A⁻¹ = L⁻ᵀ L⁻¹
        let mut out = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..=i {
                let mut acc = F::zero();
                for k in i..d {
                    acc += linv[[k, i]] * linv[[k, j]];
                }
                out[[i, j]] = acc;
                out[[j, i]] = acc;
            }
        }
        out
    }

    pub fn inverse_spd(&self) -> Result<Self> {
        Self::new(self.inverse())
    }

    /// `c · A` for `c > 0`, reusing the factorization.
    pub fn scaled(&self, c: F) -> Self {
        let sc = c.sqrt();
        Self {
            values: self.values.mapv(|v| v * c),
            chol: self.chol.mapv(|v| v * sc),
        }
    }

    /// An upper bound on the largest eigenvalue (min of the Gershgorin and
    /// Frobenius bounds).
    pub fn spectral_upper_bound(&self) -> F {
        let gersh = self
            .values
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<F>())
            .fold(F::zero(), F::max);
        let frob = self.values.iter().map(|&v| v * v).sum::<F>().sqrt();
        gersh.min(frob)
    }
}

/// Log-determinant of a positive-definite matrix, `2 Σ log Lᵢᵢ`.
pub fn logdet_pd<F: Scalar>(a: &SpdMatrix<F>) -> F {
    a.logdet()
}

pub(crate) fn symmetrize<F: Scalar>(a: ArrayView2<F>) -> Array2<F> {
    let half = F::lit(0.5);
    let d = a.nrows();
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            a[[i, i]]
        } else {
            (a[[i, j]] + a[[j, i]]) * half
        }
    })
}

/// Lower Cholesky factor; fails if a pivot is not strictly positive.
pub fn cholesky<F: Scalar>(a: ArrayView2<F>) -> Result<Array2<F>> {
    let d = a.nrows();
    let mut l = Array2::<F>::zeros((d, d));
    for j in 0..d {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > F::zero()) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / ljj;
        }
    }
    Ok(l)
}

fn lower_triangular_inverse<F: Scalar>(l: ArrayView2<F>) -> Array2<F> {
    let d = l.nrows();
    let mut inv = Array2::<F>::zeros((d, d));
    for j in 0..d {
        inv[[j, j]] = F::one() / l[[j, j]];
        for i in (j + 1)..d {
            let mut acc = F::zero();
            for k in j..i {
                acc += l[[i, k]] * inv[[k, j]];
            }
            inv[[i, j]] = -acc / l[[i, i]];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_has_zero_logdet() {
        for d in 1..6 {
            assert_eq!(SpdMatrix::<f64>::identity(d).logdet(), 0.0);
        }
    }

    #[test]
    fn diagonal_logdet() {
        let a = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert!((logdet_pd(&a) - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            SpdMatrix::new(a),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn symmetrizes_input() {
        let a = array![[2.0, 0.5 + 1e-12], [0.5, 2.0]];
        let s = SpdMatrix::new(a).unwrap();
        assert_eq!(s.values()[[0, 1]], s.values()[[1, 0]]);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = array![[4.0_f64, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let s = SpdMatrix::new(a.clone()).unwrap();
        let prod = a.dot(&s.inverse());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scaled_keeps_factor_consistent() {
        let a = array![[4.0_f64, 1.0], [1.0, 3.0]];
        let s = SpdMatrix::new(a).unwrap().scaled(2.5);
        let l = s.chol();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(s.values().iter()) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
