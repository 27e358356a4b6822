use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::em::{normalize_identifiability, FitOptions, FitResult, MixtureParams};
use crate::error::{Error, Result};
use crate::penalty::MeanPenalty;
use crate::select::{equispaced, grid_search, lambda_max, GridOptions, GridSpec};

use super::metrics::{ari, confusion, f1_zero_rows, frobenius, match_labels};
use super::scenario::{simulate_dataset, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Unpenalized mixture.
    Full,
    /// Row-wise group lasso on the means.
    Group,
    /// Entry-wise lasso on the means.
    Lasso,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Group => "group",
            Method::Lasso => "lasso",
        }
    }

    fn penalty_kind(self) -> MeanPenalty {
        match self {
            Method::Full => MeanPenalty::None,
            Method::Group => MeanPenalty::GroupRow,
            Method::Lasso => MeanPenalty::Entrywise,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "group" => Ok(Method::Group),
            "lasso" => Ok(Method::Lasso),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// λ grids for one method. With `relative`, values are fractions of the
/// per-dataset `lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub k: Vec<usize>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub relative: bool,
}

impl GridPlan {
    pub fn fixed(k: usize, lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            k: vec![k],
            lambda1: vec![lambda1],
            lambda2: vec![lambda2],
            lambda3: vec![lambda3],
            relative: false,
        }
    }

    /// Equispaced fractions of `lambda_max` from 0 to `top`, `count` values each.
    pub fn relative(k: Vec<usize>, count: usize, top: f64) -> Self {
        let v = equispaced(top, count);
        Self {
            k,
            lambda1: v.clone(),
            lambda2: v.clone(),
            lambda3: v,
            relative: true,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.k.len() * self.lambda1.len() * self.lambda2.len() * self.lambda3.len()
    }

    fn resolve(&self, data: &crate::data::ThreeWayData<f64>, kind: MeanPenalty) -> Result<GridSpec<f64>> {
        if !self.relative {
            return Ok(GridSpec {
                k: self.k.clone(),
                lambda1: self.lambda1.clone(),
                lambda2: self.lambda2.clone(),
                lambda3: self.lambda3.clone(),
            });
        }
        let mut top = [0.0f64; 3];
        for &k in &self.k {
            let m = lambda_max(data, k, kind, 0)?;
            for i in 0..3 {
                top[i] = top[i].max(m[i]);
            }
        }
        let scale = |fr: &[f64], t: f64| fr.iter().map(|&f| f * t).collect();
        Ok(GridSpec {
            k: self.k.clone(),
            lambda1: scale(&self.lambda1, top[0]),
            lambda2: scale(&self.lambda2, top[1]),
            lambda3: scale(&self.lambda3, top[2]),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub methods: Vec<Method>,
    pub grids: BTreeMap<Method, GridPlan>,
    pub fit: FitOptions,
    pub master_seed: u64,
    /// Run replications on the rayon pool.
    pub parallel: bool,
}

impl ExperimentOptions {
    pub fn new(methods: Vec<Method>, k: usize) -> Self {
        let mut grids = BTreeMap::new();
        grids.insert(Method::Full, GridPlan::fixed(k, 0.0, 0.0, 0.0));
        grids.insert(Method::Group, default_grid(Method::Group, k));
        grids.insert(Method::Lasso, default_grid(Method::Lasso, k));
        Self {
            methods,
            grids,
            fit: FitOptions {
                restarts: 3,
                ..FitOptions::default()
            },
            master_seed: 0,
            parallel: false,
        }
    }
}

/// Absolute grids tuned to the simulated scenarios at the default mean scale.
/// The entry-wise penalty acts on single cells, so its λ₁ values are lower.
pub fn default_grid(method: Method, k: usize) -> GridPlan {
    match method {
        Method::Full => GridPlan::fixed(k, 0.0, 0.0, 0.0),
        Method::Group => GridPlan {
            k: vec![k],
            lambda1: vec![25.0, 30.0, 35.0, 40.0, 45.0, 50.0],
            lambda2: vec![5.0],
            lambda3: vec![2.0, 5.0],
            relative: false,
        },
        Method::Lasso => GridPlan {
            k: vec![k],
            lambda1: vec![10.0, 15.0, 20.0, 25.0],
            lambda2: vec![5.0],
            lambda3: vec![2.0, 5.0],
            relative: false,
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub method: Method,
    pub ari: f64,
    pub f1: f64,
    pub d0: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: [f64; 3],
    /// Per true component after label matching; NaN when the selected `K`
    /// differs from the true one.
    pub frob_m: Vec<f64>,
    pub frob_omega: Vec<f64>,
    pub frob_gamma: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// `sd / √count`
    pub se: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self {
                count: 0,
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            count: n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
            median,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
}

impl ExperimentReport {
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn metric(&self, method: Method, f: impl Fn(&ReplicationRecord) -> f64) -> Vec<f64> {
        self.records_for(method).map(f).collect()
    }

    pub fn summary(&self, method: Method, f: impl Fn(&ReplicationRecord) -> f64) -> Summary {
        Summary::of(&self.metric(method, f))
    }

    /// Long format `rep,method,metric,component,value`; components are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "method", "metric", "component", "value"])?;
        for r in &self.records {
            let rep = r.rep.to_string();
            let m = r.method.as_str();
            let scalars = [
                ("ari", r.ari),
                ("f1", r.f1),
                ("d0", r.d0 as f64),
                ("K", r.k as f64),
                ("lambda1", r.lambda[0]),
                ("lambda2", r.lambda[1]),
                ("lambda3", r.lambda[2]),
                ("seconds", r.seconds),
            ];
            for (name, v) in scalars {
                w.write_record([rep.as_str(), m, name, "", &v.to_string()])?;
            }
            for (name, vals) in [("frob_M", &r.frob_m), ("frob_Omega", &r.frob_omega), ("frob_Gamma", &r.frob_gamma)] {
                for (c, v) in vals.iter().enumerate() {
                    w.write_record([rep.as_str(), m, name, &(c + 1).to_string(), &v.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Table-style summary: per method, mean / sd / se / median of each metric.
    pub fn summary_json(&self) -> Value {
        let mut methods = serde_json::Map::new();
        for &m in &self.methods {
            let k = self.scenario.k;
            let per_comp = |get: &dyn Fn(&ReplicationRecord) -> &Vec<f64>| -> Vec<Summary> {
                (0..k)
                    .map(|c| self.summary(m, |r| get(r).get(c).copied().unwrap_or(f64::NAN)))
                    .collect()
            };
            methods.insert(
                m.as_str().to_string(),
                json!({
                    "replications": self.records_for(m).count(),
                    "failures": self.failures.iter().filter(|f| f.method == m).count(),
                    "ari": self.summary(m, |r| r.ari),
                    "f1": self.summary(m, |r| r.f1),
                    "d0": self.summary(m, |r| r.d0 as f64),
                    "frob_M": per_comp(&|r| &r.frob_m),
                    "frob_Omega": per_comp(&|r| &r.frob_omega),
                    "frob_Gamma": per_comp(&|r| &r.frob_gamma),
                }),
            );
        }
        json!({
            "scenario": self.scenario,
            "reps": self.reps,
            "methods": methods,
            "failures": self.failures,
        })
    }
}

/// Seed of replication `rep`, independent of scheduling.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    let mut x = master ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Simulates `reps` datasets and fits every requested method to each.
pub fn run_experiment(spec: &ScenarioSpec, reps: usize, opts: &ExperimentOptions) -> Result<ExperimentReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    spec.validate()?;
    for m in &opts.methods {
        if !opts.grids.contains_key(m) {
            return Err(Error::InvalidArgument(format!("no grid configured for method {}", m.as_str())));
        }
    }
    let one = |rep: usize| -> Vec<std::result::Result<ReplicationRecord, ReplicationFailure>> {
        let seed = replication_seed(opts.master_seed, rep);
        let sim = match simulate_dataset::<f64>(&spec.with_seed(seed)) {
            Ok(s) => s,
            Err(e) => {
                return opts
                    .methods
                    .iter()
                    .map(|&method| {
                        Err(ReplicationFailure {
                            rep,
                            method,
                            message: format!("simulation failed: {e}"),
                        })
                    })
                    .collect()
            }
        };
        let truth = normalize_identifiability(&sim.params);
        opts.methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                fit_method(&sim.data, method, &opts.grids[&method], &opts.fit, seed)
                    .map(|(fit, lambda)| {
                        let mut rec = evaluate(rep, method, &fit, lambda, &truth, &sim.labels);
                        rec.seconds = start.elapsed().as_secs_f64();
                        rec
                    })
                    .map_err(|e| ReplicationFailure {
                        rep,
                        method,
                        message: e.to_string(),
                    })
            })
            .collect()
    };
    let outcomes: Vec<_> = if opts.parallel {
        (0..reps).into_par_iter().map(one).collect()
    } else {
        (0..reps).map(one).collect()
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for out in outcomes.into_iter().flatten() {
        match out {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(ExperimentReport {
        scenario: spec.clone(),
        reps,
        methods: opts.methods.clone(),
        records,
        failures,
    })
}

/// Grid search for one method on one dataset; returns the selected fit and λ.
pub fn fit_method(
    data: &crate::data::ThreeWayData<f64>,
    method: Method,
    plan: &GridPlan,
    fit: &FitOptions,
    seed: u64,
) -> Result<(FitResult<f64>, [f64; 3])> {
    let kind = method.penalty_kind();
    let grid = plan.resolve(data, kind)?;
    let mut go = GridOptions::new(kind);
    go.fit = fit.clone();
    go.master_seed = seed;
    let res = grid_search(data, &grid, &go)?;
    let cell = res.best_cell();
    Ok((res.best_fit, [cell.lambda1, cell.lambda2, cell.lambda3]))
}

fn evaluate(
    rep: usize,
    method: Method,
    fit: &FitResult<f64>,
    lambda: [f64; 3],
    truth: &MixtureParams<f64>,
    labels: &[usize],
) -> ReplicationRecord {
    let k_true = truth.k();
    let k_est = fit.params.k();
    let nan = vec![f64::NAN; k_true];
    let (mut frob_m, mut frob_omega, mut frob_gamma) = (nan.clone(), nan.clone(), nan);
    if k_est == k_true {
        if let Ok(perm) = confusion(labels, &fit.labels, k_true).and_then(|c| match_labels(&c)) {
            let est = fit.params.permuted(&perm);
            for c in 0..k_true {
                frob_m[c] = frobenius(&truth.means[c], &est.means[c]);
                frob_omega[c] = frobenius(truth.omegas[c].values(), est.omegas[c].values());
                frob_gamma[c] = frobenius(truth.gammas[c].values(), est.gammas[c].values());
            }
        }
    }
    ReplicationRecord {
        rep,
        method,
        ari: ari(labels, &fit.labels).unwrap_or(f64::NAN),
        f1: f1_zero_rows(&truth.means, &fit.params.means).unwrap_or(f64::NAN),
        d0: fit.d0,
        k: k_est,
        lambda,
        frob_m,
        frob_omega,
        frob_gamma,
        seconds: 0.0,
    }
}
