//! Modified BIC, exact parameter counting and grid search over `(K, λ₁, λ₂, λ₃)`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::ThreeWayData;
use crate::em::{fit, initialize, params_from_partition, FitOptions, FitResult, MixtureParams};
use crate::error::{Error, Result};
use crate::matnorm::SpdMatrix;
use crate::penalty::{MeanPenalty, PenaltyConfig};
use crate::scalar::Scalar;

/// `d₀`: mixing weights `K − 1`, nonzero mean cells, and nonzero entries on or
/// above the diagonal of every precision matrix. Zero means exactly zero.
pub fn count_nonzero<F: Scalar>(params: &MixtureParams<F>) -> usize {
    let upper = |a: &SpdMatrix<F>| {
        let v = a.values();
        let d = a.dim();
        (0..d).map(|i| (i..d).filter(|&j| v[[i, j]] != F::zero()).count()).sum::<usize>()
    };
    let mut d0 = params.k() - 1;
    for k in 0..params.k() {
        d0 += params.means[k].iter().filter(|&&v| v != F::zero()).count();
        d0 += upper(&params.omegas[k]) + upper(&params.gammas[k]);
    }
    d0
}

/// `2 log L − d₀ log n`
pub fn bic<F: Scalar>(loglik: F, d0: usize, n: usize) -> F {
    F::lit(2.0) * loglik - F::from_count(d0) * F::from_count(n).ln()
}

/// Parameter count of the unpenalized model.
pub fn dense_count(k: usize, p: usize, q: usize) -> usize {
    (k - 1) + k * (p * q + p * (p + 1) / 2 + q * (q + 1) / 2)
}

#[derive(Debug, Clone)]
pub struct GridSpec<F> {
    pub k: Vec<usize>,
    pub lambda1: Vec<F>,
    pub lambda2: Vec<F>,
    pub lambda3: Vec<F>,
}

impl<F: Scalar> GridSpec<F> {
    pub fn singleton(k: usize, lambda1: F, lambda2: F, lambda3: F) -> Self {
        Self {
            k: vec![k],
            lambda1: vec![lambda1],
            lambda2: vec![lambda2],
            lambda3: vec![lambda3],
        }
    }

    /// All cells in lexicographic `(K, λ₁, λ₂, λ₃)` order.
    pub fn cells(&self) -> Vec<GridCell<F>> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &l1 in &self.lambda1 {
                for &l2 in &self.lambda2 {
                    for &l3 in &self.lambda3 {
                        out.push(GridCell {
                            k,
                            lambda1: l1,
                            lambda2: l2,
                            lambda3: l3,
                        });
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.lambda1.is_empty() || self.lambda2.is_empty() || self.lambda3.is_empty() {
            return Err(Error::InvalidArgument("every grid must be non-empty".into()));
        }
        if self.k.contains(&0) {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let all = self.lambda1.iter().chain(&self.lambda2).chain(&self.lambda3);
        for &v in all {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("grid values must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell<F> {
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda1: F,
    pub lambda2: F,
    pub lambda3: F,
}

impl<F: Scalar> GridCell<F> {
    /// Seed derived from the cell coordinates alone, so results do not depend on
    /// enumeration order.
    pub fn seed(&self, master: u64) -> u64 {
        let mut h = splitmix(master ^ (self.k as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        for v in [self.lambda1, self.lambda2, self.lambda3] {
            h = splitmix(h ^ v.as_f64().to_bits());
        }
        h
    }

    fn key(&self) -> (usize, [u64; 3]) {
        let bits = |v: F| {
            let x = v.as_f64();
            // order-preserving for non-negative floats
            x.to_bits()
        };
        (self.k, [bits(self.lambda1), bits(self.lambda2), bits(self.lambda3)])
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow<F> {
    #[serde(flatten)]
    pub cell: GridCell<F>,
    pub loglik: Option<F>,
    pub d0: Option<usize>,
    pub bic: Option<F>,
    pub converged: bool,
    pub iterations: usize,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult<F> {
    pub table: Vec<GridRow<F>>,
    /// Index into `table` of the BIC maximizer among converged cells.
    pub best: usize,
    pub best_fit: FitResult<F>,
}

impl<F: Scalar> GridSearchResult<F> {
    pub fn best_cell(&self) -> GridCell<F> {
        self.table[self.best].cell
    }

    /// Columns `K,lambda1,lambda2,lambda3,loglik,d0,bic,converged,iterations,seconds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["K", "lambda1", "lambda2", "lambda3", "loglik", "d0", "bic", "converged", "iterations", "seconds"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.table {
            w.write_record([
                r.cell.k.to_string(),
                r.cell.lambda1.to_string(),
                r.cell.lambda2.to_string(),
                r.cell.lambda3.to_string(),
                opt(r.loglik.map(|v| v.to_string())),
                opt(r.d0.map(|v| v.to_string())),
                opt(r.bic.map(|v| v.to_string())),
                r.converged.to_string(),
                r.iterations.to_string(),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone)]
pub struct GridOptions<F> {
    pub fit: FitOptions,
    /// Kind and weight matrices; the λ values are taken from the grid.
    pub penalty: PenaltyConfig<F>,
    pub master_seed: u64,
    /// Run cells on the rayon pool.
    pub parallel: bool,
}

impl<F: Scalar> GridOptions<F> {
    pub fn new(kind: MeanPenalty) -> Self {
        Self {
            fit: FitOptions::default(),
            penalty: PenaltyConfig::new(kind, F::zero(), F::zero(), F::zero()),
            master_seed: 0,
            parallel: false,
        }
    }
}

/// Fits every grid cell and keeps the BIC maximizer among converged fits.
/// Ties go to the earliest cell in lexicographic `(K, λ₁, λ₂, λ₃)` order.
pub fn grid_search<F: Scalar>(data: &ThreeWayData<F>, grid: &GridSpec<F>, opts: &GridOptions<F>) -> Result<GridSearchResult<F>> {
    grid.validate()?;
    let cells = grid.cells();
    let run = |cell: &GridCell<F>| {
        let penalty = opts.penalty.with_lambdas(cell.lambda1, cell.lambda2, cell.lambda3);
        let mut fo = opts.fit.clone();
        fo.seed = cell.seed(opts.master_seed);
        let start = Instant::now();
        let res = fit(data, cell.k, &penalty, &fo);
        (res, start.elapsed().as_secs_f64())
    };
    let outcomes: Vec<_> = if opts.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    };

    let mut table = Vec::with_capacity(cells.len());
    let mut fits = Vec::with_capacity(cells.len());
    for (cell, (res, seconds)) in cells.iter().zip(outcomes) {
        let row = match &res {
            Ok(f) => GridRow {
                cell: *cell,
                loglik: Some(f.loglik),
                d0: Some(f.d0),
                bic: Some(f.bic),
                converged: f.converged,
                iterations: f.iterations,
                seconds,
                error: match &f.status {
                    crate::em::FitStatus::Converged => None,
                    other => Some(format!("{other:?}")),
                },
            },
            Err(e) => GridRow {
                cell: *cell,
                loglik: None,
                d0: None,
                bic: None,
                converged: false,
                iterations: 0,
                seconds,
                error: Some(e.to_string()),
            },
        };
        table.push(row);
        fits.push(res.ok());
    }

    let mut best: Option<usize> = None;
    for (i, row) in table.iter().enumerate() {
        if !row.converged {
            continue;
        }
        let b = row.bic.unwrap();
        let better = match best {
            None => true,
            Some(j) => {
                let bj = table[j].bic.unwrap();
                b > bj || (b == bj && row.cell.key() < table[j].cell.key())
            }
        };
        if better {
            best = Some(i);
        }
    }
    let Some(best) = best else {
        let detail = table
            .iter()
            .map(|r| {
                format!(
                    "K={} l=({}, {}, {}): {}",
                    r.cell.k,
                    r.cell.lambda1,
                    r.cell.lambda2,
                    r.cell.lambda3,
                    r.error.as_deref().unwrap_or("not converged")
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllCellsFailed(detail));
    };
    let best_fit = fits[best].take().expect("converged cell has a fit");
    Ok(GridSearchResult { table, best, best_fit })
}

/// Upper ends for equispaced λ grids, computed at the initial partition with
/// identity precisions: the smallest `λ₁` that zeroes every mean row (cell for
/// the entry-wise penalty) and the smallest `λ₂`, `λ₃` for which the first
/// graphical-lasso solve returns a diagonal matrix.
pub fn lambda_max<F: Scalar>(data: &ThreeWayData<F>, k: usize, kind: MeanPenalty, seed: u64) -> Result<[F; 3]> {
    let labels = initialize(data, k, crate::em::InitMethod::Ward, seed)?;
    let init = params_from_partition(data, &labels, k)?;
    let (p, q) = (data.p(), data.q());
    let (mut l1, mut l2, mut l3) = (F::zero(), F::zero(), F::zero());
    for c in 0..k {
        let members: Vec<usize> = (0..data.n()).filter(|&i| labels[i] == c).collect();
        let mut s_m = ndarray::Array2::<F>::zeros((p, q));
        for &i in &members {
            s_m += data.unit(i);
        }
        l1 = l1.max(match kind {
            MeanPenalty::Entrywise => s_m.iter().fold(F::zero(), |a, &v| a.max(v.abs())),
            _ => s_m
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&v| v * v).sum::<F>().sqrt())
                .fold(F::zero(), F::max),
        });
        let mut s_omega = ndarray::Array2::<F>::zeros((p, p));
        let mut s_gamma = ndarray::Array2::<F>::zeros((q, q));
        for &i in &members {
            let d = data.unit(i) - &init.means[c];
            s_omega += &d.dot(&d.t());
            s_gamma += &d.t().dot(&d);
        }
        let off = |s: &ndarray::Array2<F>| {
            s.indexed_iter()
                .filter(|((i, j), _)| i != j)
                .fold(F::zero(), |a, (_, &v)| a.max(v.abs()))
        };
        // ρ = 2λ/(n_k q) against S/(n_k q): λ = max|S_off|/2.
        l2 = l2.max(off(&s_omega) / F::lit(2.0));
        l3 = l3.max(off(&s_gamma) / F::lit(2.0));
    }
    if kind == MeanPenalty::None {
        l1 = F::zero();
    }
    Ok([l1, l2, l3])
}

/// `count` equispaced values from 0 to `max` inclusive.
pub fn equispaced<F: Scalar>(max: F, count: usize) -> Vec<F> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count)
            .map(|i| max * F::from_count(i) / F::from_count(count - 1))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn bic_examples() {
        assert_eq!(bic(0.0_f64, 0, 10), 0.0);
        assert_eq!(bic(-100.0_f64, 10, 1), -200.0);
        assert!((bic(-100.0_f64, 10, 20) - (-200.0 - 10.0 * 20f64.ln())).abs() < 1e-12);
        assert!(bic(-50.0_f64, 3, 20) > bic(-50.0_f64, 4, 20));
    }

    #[test]
    fn dense_count_matches_table() {
        assert_eq!(dense_count(3, 10, 5), 362);
    }

    #[test]
    fn identity_count() {
        let params = MixtureParams::new(
            vec![1.0_f64],
            vec![Array2::zeros((2, 2))],
            vec![SpdMatrix::identity(2)],
            vec![SpdMatrix::identity(2)],
        )
        .unwrap();
        assert_eq!(count_nonzero(&params), 4);
    }

    #[test]
    fn cell_seed_ignores_position() {
        let a = GridCell {
            k: 3,
            lambda1: 1.0_f64,
            lambda2: 2.0,
            lambda3: 0.0,
        };
        assert_eq!(a.seed(9), a.seed(9));
        assert_ne!(a.seed(9), GridCell { k: 2, ..a }.seed(9));
    }

    #[test]
    fn equispaced_grid() {
        assert_eq!(equispaced(2.0_f64, 3), vec![0.0, 1.0, 2.0]);
    }
}
