use ndarray::Array2;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

/// Contingency table with `table[[i, j]]` = units with label `i` in `a` and
/// `j` in `b`; labels are compacted to `0..` first.
pub fn contingency(a: &[usize], b: &[usize]) -> Result<Array2<usize>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("label vectors have lengths {} and {}", a.len(), b.len())));
    }
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut t = Array2::zeros((ka, kb));
    for (&i, &j) in a.iter().zip(&b) {
        t[[i, j]] += 1;
    }
    Ok(t)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.len();
    let index: f64 = t.iter().map(|&c| choose2(c)).sum();
    let rows: f64 = t.rows().into_iter().map(|r| choose2(r.sum())).sum();
    let cols: f64 = t.columns().into_iter().map(|c| choose2(c.sum())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both partitions trivial in the same way.
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Variables whose row is exactly zero in every component.
pub fn zero_variables<F: Scalar>(means: &[Array2<F>]) -> Vec<bool> {
    let p = means.first().map_or(0, |m| m.nrows());
    (0..p)
        .map(|r| means.iter().all(|m| m.row(r).iter().all(|&v| v == F::zero())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroRowCounts {
    /// Zero variables estimated as zero.
    pub tp: usize,
    /// Informative variables wrongly zeroed.
    pub fp: usize,
    /// Zero variables left nonzero.
    pub fn_: usize,
}

impl ZeroRowCounts {
    /// `tp / (tp + (fp + fn)/2)`; defined as 1 when there is nothing to find
    /// and nothing was wrongly zeroed.
    pub fn f1(&self) -> f64 {
        let denom = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        if denom == 0.0 {
            1.0
        } else {
            self.tp as f64 / denom
        }
    }
}

pub fn zero_row_counts<F: Scalar>(truth: &[Array2<F>], est: &[Array2<F>]) -> Result<ZeroRowCounts> {
    let zt = zero_variables(truth);
    let ze = zero_variables(est);
    if zt.len() != ze.len() {
        return Err(Error::Shape(format!("{} true rows against {} estimated", zt.len(), ze.len())));
    }
    let mut c = ZeroRowCounts { tp: 0, fp: 0, fn_: 0 };
    for (&t, &e) in zt.iter().zip(&ze) {
        match (t, e) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// F1 score of variable-level zero-row recovery.
pub fn f1_zero_rows<F: Scalar>(truth: &[Array2<F>], est: &[Array2<F>]) -> Result<f64> {
    zero_row_counts(truth, est).map(|c| c.f1())
}

/// Assignment maximizing the matched total of a square `confusion[[true, est]]`:
/// `perm[t]` is the estimated component matched to true component `t`.
pub fn match_labels(confusion: &Array2<usize>) -> Result<Vec<usize>> {
    let (r, c) = confusion.dim();
    if r != c {
        return Err(Error::Shape(format!("confusion matrix is {r}x{c}, expected square")));
    }
    if r == 0 {
        return Ok(Vec::new());
    }
    let weights = Matrix::from_rows(confusion.rows().into_iter().map(|row| row.iter().map(|&v| v as i64).collect::<Vec<_>>()))
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(kuhn_munkres(&weights).1)
}

/// Confusion matrix `[[true, est]]` over components `0..k`.
pub fn confusion(truth: &[usize], est: &[usize], k: usize) -> Result<Array2<usize>> {
    if truth.len() != est.len() {
        return Err(Error::Shape(format!("label vectors have lengths {} and {}", truth.len(), est.len())));
    }
    let mut t = Array2::zeros((k, k));
    for (&a, &b) in truth.iter().zip(est) {
        if a >= k || b >= k {
            return Err(Error::InvalidArgument(format!("label out of range for {k} components")));
        }
        t[[a, b]] += 1;
    }
    Ok(t)
}

pub fn frobenius<F: Scalar>(a: &Array2<F>, b: &Array2<F>) -> F {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum::<F>().sqrt()
}
