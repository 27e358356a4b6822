//! File schemas written by the commands, with readers for round trips.

use std::path::Path;

use matclust::{FitResult, FitStatus, MixtureParams, PenaltyConfig, SpdMatrix};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::CliError;

type Nested = Vec<Vec<f64>>;

fn nested(a: &Array2<f64>) -> Nested {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn array(rows: &Nested, what: &str) -> Result<Array2<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Data(format!("{what} is ragged")));
    }
    Array2::from_shape_vec((r, c), rows.concat()).map_err(|e| CliError::Data(format!("{what}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub tau: Vec<f64>,
    pub means: Vec<Nested>,
    pub omegas: Vec<Nested>,
    pub gammas: Vec<Nested>,
}

impl ParamsFile {
    pub fn from_params(p: &MixtureParams<f64>) -> Self {
        Self {
            k: p.k(),
            p: p.p(),
            q: p.q(),
            tau: p.tau.clone(),
            means: p.means.iter().map(nested).collect(),
            omegas: p.omegas.iter().map(|o| nested(o.values())).collect(),
            gammas: p.gammas.iter().map(|g| nested(g.values())).collect(),
        }
    }

    pub fn to_params(&self) -> Result<MixtureParams<f64>, CliError> {
        let spd = |m: &Nested, what: &str| -> Result<SpdMatrix<f64>, CliError> {
            SpdMatrix::new(array(m, what)?).map_err(|e| CliError::Data(format!("{what}: {e}")))
        };
        let means = self.means.iter().map(|m| array(m, "mean")).collect::<Result<_, _>>()?;
        let omegas = self.omegas.iter().map(|m| spd(m, "Omega")).collect::<Result<_, _>>()?;
        let gammas = self.gammas.iter().map(|m| spd(m, "Gamma")).collect::<Result<_, _>>()?;
        let params = MixtureParams::new(self.tau.clone(), means, omegas, gammas).map_err(|e| CliError::Data(e.to_string()))?;
        if (params.k(), params.p(), params.q()) != (self.k, self.p, self.q) {
            return Err(CliError::Data("declared dimensions do not match the matrices".into()));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyFile {
    pub kind: matclust::MeanPenalty,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl PenaltyFile {
    pub fn from_config(p: &PenaltyConfig<f64>) -> Self {
        Self {
            kind: p.kind,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            lambda3: p.lambda3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub penalty: PenaltyFile,
    pub seed: u64,
    pub status: FitStatus,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub d0: usize,
    pub bic: f64,
    pub pen_loglik_trace: Vec<f64>,
    /// 1-based
    pub labels: Vec<usize>,
    pub params: ParamsFile,
}

impl FitFile {
    pub fn new(fit: &FitResult<f64>, penalty: &PenaltyConfig<f64>, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            k: fit.params.k(),
            penalty: PenaltyFile::from_config(penalty),
            seed,
            status: fit.status.clone(),
            converged: fit.converged,
            iterations: fit.iterations,
            loglik: fit.loglik,
            d0: fit.d0,
            bic: fit.bic,
            pen_loglik_trace: fit.pen_loglik_trace.clone(),
            labels: fit.labels.iter().map(|&l| l + 1).collect(),
            params: ParamsFile::from_params(&fit.params),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `unit,label` with 1-based labels.
pub fn write_labels(path: &Path, units: &[String], labels: &[usize]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(["unit", "label"]).map_err(err)?;
    for (u, &l) in units.iter().zip(labels) {
        w.write_record([u.as_str(), &(l + 1).to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a labels file back as `(unit, 0-based label)` pairs.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>, CliError> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let label: usize = rec
            .get(1)
            .and_then(|v| v.trim().parse().ok())
            .filter(|&v: &usize| v >= 1)
            .ok_or_else(|| CliError::Data(format!("{}: bad label in {:?}", path.display(), rec)))?;
        out.push((rec.get(0).unwrap_or_default().to_string(), label - 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn params_round_trip() {
        let params = MixtureParams::new(
            vec![0.25, 0.75],
            vec![array![[1.0, 0.0, -2.0]], array![[0.0, 0.5, 0.0]]],
            vec![SpdMatrix::identity(1), SpdMatrix::new(array![[2.0]]).unwrap()],
            vec![
                SpdMatrix::identity(3),
                SpdMatrix::new(array![[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
            ],
        )
        .unwrap();
        let file = ParamsFile::from_params(&params);
        let text = serde_json::to_string(&file).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_params().unwrap(), params);
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(array(&vec![vec![1.0, 2.0], vec![3.0]], "m").is_err());
    }
}
