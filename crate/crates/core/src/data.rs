//! Three-way data: `n` units, each a `p × q` matrix (variables × occasions),
//! with long-CSV and JSON tensor ingestion and the log/centering transforms.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Header `unit,row,col,value`, 1-based row/col indices.
    LongCsv,
    /// `{"dims": [n, p, q], "values": [...]}`, unit-major then row-major.
    JsonTensor,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::LongCsv => "csv",
            DataFormat::JsonTensor => "json",
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long-csv" | "csv" => Ok(DataFormat::LongCsv),
            "json-tensor" | "json" => Ok(DataFormat::JsonTensor),
            other => Err(Error::InvalidArgument(format!("unknown data format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWayData<F> {
    n: usize,
    p: usize,
    q: usize,
    units: Vec<Array2<F>>,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
    pub unit_ids: Option<Vec<String>>,
}

impl<F: Scalar> ThreeWayData<F> {
    /// Validates shapes and finiteness.
    pub fn new(units: Vec<Array2<F>>) -> Result<Self> {
        let first = units
            .first()
            .ok_or_else(|| Error::InvalidArgument("three-way data needs at least one unit".into()))?;
        let (p, q) = first.dim();
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument(format!("unit matrices must be non-empty, got {p}x{q}")));
        }
        for (i, u) in units.iter().enumerate() {
            if u.dim() != (p, q) {
                return Err(Error::Ragged(format!(
                    "unit {} is {:?}, expected {p}x{q}",
                    i + 1,
                    u.dim()
                )));
            }
            if let Some(((r, c), _)) = u.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite(format!("unit {}, row {}, col {}", i + 1, r + 1, c + 1)));
            }
        }
        Ok(Self {
            n: units.len(),
            p,
            q,
            units,
            row_names: None,
            col_names: None,
            unit_ids: None,
        })
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::Shape(format!("{} unit ids for {} units", ids.len(), self.n)));
        }
        self.unit_ids = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn units(&self) -> &[Array2<F>] {
        &self.units
    }

    pub fn unit(&self, i: usize) -> &Array2<F> {
        &self.units[i]
    }

    /// Unit `i` flattened row-major to length `pq`.
    pub fn vectorized(&self, i: usize) -> Vec<F> {
        self.units[i].iter().copied().collect()
    }

    /// Ids used when writing files: the stored ids or `1..=n`.
    pub fn unit_labels(&self) -> Vec<String> {
        match &self.unit_ids {
            Some(ids) => ids.clone(),
            None => (1..=self.n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let units = idx.iter().map(|&i| self.units[i].clone()).collect();
        let mut out = Self::new(units)?;
        out.row_names = self.row_names.clone();
        out.col_names = self.col_names.clone();
        out.unit_ids = self
            .unit_ids
            .as_ref()
            .map(|ids| idx.iter().map(|&i| ids[i].clone()).collect());
        Ok(out)
    }

    fn map_units(&self, units: Vec<Array2<F>>) -> Result<Self> {
        let mut out = Self::new(units)?;
        out.row_names = self.row_names.clone();
        out.col_names = self.col_names.clone();
        out.unit_ids = self.unit_ids.clone();
        Ok(out)
    }
}

pub fn load_three_way<F: Scalar>(path: impl AsRef<Path>, format: DataFormat) -> Result<ThreeWayData<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::LongCsv => read_long_csv(reader),
        DataFormat::JsonTensor => read_json_tensor(reader),
    }
}

pub fn save_three_way<F: Scalar>(data: &ThreeWayData<F>, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        DataFormat::LongCsv => write_long_csv(data, &mut w),
        DataFormat::JsonTensor => write_json_tensor(data, &mut w),
    }
    .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_value<F: Scalar>(raw: &str, at: impl Fn() -> String) -> Result<F> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid number `{raw}` at {}", at())))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(at()));
    }
    Ok(F::lit(v))
}

pub fn read_long_csv<F: Scalar, R: std::io::Read>(reader: R) -> Result<ThreeWayData<F>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let expected = ["unit", "row", "col", "value"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse(format!(
            "long-csv header must be `unit,row,col,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut unit_ids: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, usize, F)> = Vec::new();
    let (mut p, mut q) = (0usize, 0usize);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let lineno = line + 2;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("line {lineno}: expected 4 fields, got {}", rec.len())));
        }
        let unit = rec[0].to_string();
        let parse_idx = |raw: &str, what: &str| -> Result<usize> {
            match raw.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Parse(format!("line {lineno}: {what} index `{raw}` is not a positive integer"))),
            }
        };
        let r = parse_idx(&rec[1], "row")?;
        let c = parse_idx(&rec[2], "col")?;
        let v = parse_value(&rec[3], || format!("line {lineno}"))?;
        let k = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_ids.push(unit.clone());
            unit_ids.len() - 1
        });
        p = p.max(r + 1);
        q = q.max(c + 1);
        cells.push((k, r, c, v));
    }
    let n = unit_ids.len();
    if n == 0 {
        return Err(Error::Parse("long-csv holds no records".into()));
    }
    let mut units = vec![Array2::<F>::zeros((p, q)); n];
    let mut seen = vec![false; n * p * q];
    for (k, r, c, v) in cells {
        let slot = (k * p + r) * q + c;
        if seen[slot] {
            return Err(Error::Parse(format!(
                "duplicate cell (unit {}, row {}, col {})",
                unit_ids[k],
                r + 1,
                c + 1
            )));
        }
        seen[slot] = true;
        units[k][[r, c]] = v;
    }
    if let Some(slot) = seen.iter().position(|s| !s) {
        let k = slot / (p * q);
        let r = (slot / q) % p;
        let c = slot % q;
        return Err(Error::Ragged(format!(
            "missing cell (unit {}, row {}, col {})",
            unit_ids[k],
            r + 1,
            c + 1
        )));
    }
    ThreeWayData::new(units)?.with_unit_ids(unit_ids)
}

fn write_long_csv<F: Scalar, W: Write>(data: &ThreeWayData<F>, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "unit,row,col,value")?;
    for (id, u) in data.unit_labels().iter().zip(data.units()) {
        for ((r, c), v) in u.indexed_iter() {
            writeln!(w, "{},{},{},{}", csv_field(id), r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTensor {
    dims: [usize; 3],
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    col_names: Option<Vec<String>>,
}

pub fn read_json_tensor<F: Scalar, R: std::io::Read>(reader: R) -> Result<ThreeWayData<F>> {
    let raw: JsonTensor = serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
    let [n, p, q] = raw.dims;
    if n == 0 || p == 0 || q == 0 {
        return Err(Error::Parse(format!("dims must be positive, got {:?}", raw.dims)));
    }
    if raw.values.len() != n * p * q {
        return Err(Error::Ragged(format!(
            "dims {:?} need {} values, found {}",
            raw.dims,
            n * p * q,
            raw.values.len()
        )));
    }
    let mut units = Vec::with_capacity(n);
    for (i, chunk) in raw.values.chunks(p * q).enumerate() {
        let mut u = Array2::<F>::zeros((p, q));
        for (j, &v) in chunk.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("unit {}, flat index {j}", i + 1)));
            }
            u[[j / q, j % q]] = F::lit(v);
        }
        units.push(u);
    }
    let mut data = ThreeWayData::new(units)?;
    if let Some(ids) = raw.unit_ids {
        data = data.with_unit_ids(ids)?;
    }
    if let Some(rn) = raw.row_names {
        if rn.len() != p {
            return Err(Error::Shape(format!("{} row names for p = {p}", rn.len())));
        }
        data.row_names = Some(rn);
    }
    if let Some(cn) = raw.col_names {
        if cn.len() != q {
            return Err(Error::Shape(format!("{} col names for q = {q}", cn.len())));
        }
        data.col_names = Some(cn);
    }
    Ok(data)
}

fn write_json_tensor<F: Scalar, W: Write>(data: &ThreeWayData<F>, w: &mut W) -> std::io::Result<()> {
    let raw = JsonTensor {
        dims: [data.n(), data.p(), data.q()],
        values: data.units().iter().flat_map(|u| u.iter().map(|v| v.as_f64())).collect(),
        unit_ids: data.unit_ids.clone(),
        row_names: data.row_names.clone(),
        col_names: data.col_names.clone(),
    };
    serde_json::to_writer(&mut *w, &raw)?;
    writeln!(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreprocessOptions {
    pub log_transform: bool,
    pub center_cellwise: bool,
    /// Added before taking logs. Defaults to 0.
    pub log_offset: f64,
}

/// Applies `v ↦ log(v + offset)` first, then subtracts the across-unit mean of
/// every `(row, col)` cell.
pub fn preprocess<F: Scalar>(data: &ThreeWayData<F>, opts: &PreprocessOptions) -> Result<ThreeWayData<F>> {
    if opts.log_offset < 0.0 || !opts.log_offset.is_finite() {
        return Err(Error::InvalidArgument(format!("log offset must be >= 0, got {}", opts.log_offset)));
    }
    let mut units: Vec<Array2<F>> = data.units().to_vec();
    if opts.log_transform {
        let offset = F::lit(opts.log_offset);
        for u in &mut units {
            for v in u.iter_mut() {
                let arg = *v + offset;
                if !(arg > F::zero()) {
                    return Err(Error::LogDomain {
                        value: v.as_f64(),
                        offset: opts.log_offset,
                    });
                }
                *v = arg.ln();
            }
        }
    }
    if opts.center_cellwise {
        let nf = F::from_count(data.n());
        let mut mean = Array2::<F>::zeros((data.p(), data.q()));
        for u in &units {
            mean += u;
        }
        mean.mapv_inplace(|v| v / nf);
        for u in &mut units {
            *u -= &mean;
        }
    }
    data.map_units(units)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn csv(s: &str) -> Result<ThreeWayData<f64>> {
        read_long_csv(s.as_bytes())
    }

    #[test]
    fn smallest_long_csv() {
        let d = csv("unit,row,col,value\na,1,1,0.5\nb,1,1,-1.0\n").unwrap();
        assert_eq!((d.n(), d.p(), d.q()), (2, 1, 1));
        assert_eq!(d.unit(0)[[0, 0]], 0.5);
        assert_eq!(d.unit(1)[[0, 0]], -1.0);
        assert_eq!(d.unit_ids.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
    }

    #[test]
    fn long_csv_order_is_free() {
        let d = csv("unit,row,col,value\nu,2,1,4\nu,1,2,2\nu,2,2,5\nu,1,1,1\n").unwrap();
        assert_eq!(d.unit(0), &array![[1.0, 2.0], [4.0, 5.0]]);
    }

    #[test]
    fn long_csv_missing_cell_is_ragged() {
        let r = csv("unit,row,col,value\n1,1,1,0\n1,1,2,0\n1,2,2,0\n");
        assert!(matches!(r, Err(Error::Ragged(msg)) if msg.contains("row 2, col 1")));
    }

    #[test]
    fn long_csv_rejects_duplicates_and_bad_values() {
        assert!(matches!(
            csv("unit,row,col,value\n1,1,1,0\n1,1,1,2\n"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(csv("unit,row,col,value\n1,1,1,NaN\n"), Err(Error::NonFinite(_))));
        assert!(matches!(csv("unit,row,col,value\n1,0,1,3\n"), Err(Error::Parse(_))));
        assert!(matches!(csv("u,r,c,v\n1,1,1,3\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn json_tensor_dims() {
        let d: ThreeWayData<f64> =
            read_json_tensor(r#"{"dims":[1,2,3],"values":[1,2,3,4,5,6]}"#.as_bytes()).unwrap();
        assert_eq!((d.n(), d.p(), d.q()), (1, 2, 3));
        assert_eq!(d.unit(0), &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn json_tensor_wrong_length() {
        let r: Result<ThreeWayData<f64>> = read_json_tensor(r#"{"dims":[2,2,3],"values":[1,2,3]}"#.as_bytes());
        assert!(matches!(r, Err(Error::Ragged(_))));
    }

    #[test]
    fn preprocess_identity_when_off() {
        let d = ThreeWayData::new(vec![array![[1.0, 2.0]], array![[3.0, -4.0]]]).unwrap();
        assert_eq!(preprocess(&d, &PreprocessOptions::default()).unwrap(), d);
    }

    #[test]
    fn centering_subtracts_cell_mean() {
        let d = ThreeWayData::new(vec![array![[2.0]], array![[4.0]]]).unwrap();
        let opts = PreprocessOptions {
            center_cellwise: true,
            ..Default::default()
        };
        let out = preprocess(&d, &opts).unwrap();
        assert_eq!(out.unit(0)[[0, 0]], -1.0);
        assert_eq!(out.unit(1)[[0, 0]], 1.0);
    }

    #[test]
    fn log_with_offset() {
        let e2m1 = 2f64.exp() - 1.0;
        let d = ThreeWayData::new(vec![array![[0.0]], array![[e2m1]]]).unwrap();
        let opts = PreprocessOptions {
            log_transform: true,
            log_offset: 1.0,
            ..Default::default()
        };
        let out = preprocess(&d, &opts).unwrap();
        assert_eq!(out.unit(0)[[0, 0]], (0.0f64 + 1.0).ln());
        assert!((out.unit(1)[[0, 0]] - (e2m1 + 1.0).ln()).abs() < 1e-15);
        assert!((out.unit(1)[[0, 0]] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_of_zero_without_offset_fails() {
        let d = ThreeWayData::new(vec![array![[0.0]], array![[1.0]]]).unwrap();
        let opts = PreprocessOptions {
            log_transform: true,
            ..Default::default()
        };
        assert!(matches!(preprocess(&d, &opts), Err(Error::LogDomain { .. })));
    }

    #[test]
    fn ragged_units_rejected() {
        let r = ThreeWayData::new(vec![array![[1.0, 2.0]], array![[1.0]]]);
        assert!(matches!(r, Err(Error::Ragged(_))));
    }
}
