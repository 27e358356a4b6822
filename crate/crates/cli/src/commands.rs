use std::path::{Path, PathBuf};
use std::str::FromStr;

use matclust::em::InitMethod;
use matclust::select::{equispaced, lambda_max};
use matclust::sim::{default_grid, run_experiment, simulate_dataset, ExperimentOptions, Method, ScenarioName, ScenarioSpec};
use matclust::{
    fit, grid_search, load_three_way, preprocess, save_three_way, DataFormat, FitOptions, FitStatus, GridOptions, GridSpec,
    MeanPenalty, PenaltyConfig, PreprocessOptions, ThreeWayData,
};
use serde_json::{json, Value};

use crate::config::{required, BenchmarkArgs, FitArgs, SelectArgs, SimulateArgs, TransformArgs};
use crate::error::CliError;
use crate::output::{write_json, write_labels, FitFile, ParamsFile, PenaltyFile};

fn parse<T: FromStr<Err = matclust::Error>>(v: &str) -> Result<T, CliError> {
    v.parse().map_err(|e: matclust::Error| CliError::Usage(e.to_string()))
}

fn format_for(path: &Path, format: Option<&str>) -> Result<DataFormat, CliError> {
    match format {
        Some(f) => parse(f),
        None if path.extension().is_some_and(|e| e == "json") => Ok(DataFormat::JsonTensor),
        None => Ok(DataFormat::LongCsv),
    }
}

fn load(path: &Path, format: Option<&str>) -> Result<(ThreeWayData<f64>, DataFormat), CliError> {
    let format = format_for(path, format)?;
    Ok((load_three_way(path, format)?, format))
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = required(out, "out")?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn fit_options(seed: Option<u64>, eps: Option<f64>, max_iter: Option<usize>, init: Option<&str>, restarts: Option<usize>) -> Result<FitOptions, CliError> {
    let mut o = FitOptions::default();
    o.seed = seed.unwrap_or(o.seed);
    o.eps = eps.unwrap_or(o.eps);
    o.max_iter = max_iter.unwrap_or(o.max_iter);
    o.restarts = restarts.unwrap_or(o.restarts);
    if let Some(i) = init {
        o.init = parse::<InitMethod>(i)?;
    }
    if !(o.eps > 0.0) || o.max_iter == 0 {
        return Err(CliError::Usage("eps must be positive and max-iter at least 1".into()));
    }
    Ok(o)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let name: ScenarioName = parse(&required(args.scenario, "scenario")?)?;
    let mut spec = ScenarioSpec::new(name, args.seed.unwrap_or(0));
    if args.n.is_some() || args.p.is_some() || args.q.is_some() || args.k.is_some() {
        spec = spec.with_shape(
            args.n.unwrap_or(spec.n),
            args.p.unwrap_or(spec.p),
            args.q.unwrap_or(spec.q),
            args.k.unwrap_or(spec.k),
        );
    }
    if let Some(s) = args.mean_scale {
        spec.mean_scale = s;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let format: DataFormat = parse(args.format.as_deref().unwrap_or("long-csv"))?;
    let dir = out_dir(args.out)?;
    let sim = simulate_dataset::<f64>(&spec)?;
    save_three_way(&sim.data, dir.join(format!("data.{}", format.extension())), format)?;
    write_labels(&dir.join("labels.csv"), &sim.data.unit_labels(), &sim.labels)?;
    write_json(&dir.join("params.json"), &json!({ "scenario": spec, "params": ParamsFile::from_params(&sim.params) }))?;
    Ok(())
}

pub fn fit_cmd(args: FitArgs) -> Result<(), CliError> {
    let (data, _) = load(&required(args.data, "data")?, args.format.as_deref())?;
    let k = required(args.k, "k")?;
    let kind: MeanPenalty = parse(args.penalty.as_deref().unwrap_or("group"))?;
    let lambda1 = if kind == MeanPenalty::None { 0.0 } else { args.lambda1.unwrap_or(0.0) };
    let penalty = PenaltyConfig::new(kind, lambda1, args.lambda2.unwrap_or(0.0), args.lambda3.unwrap_or(0.0));
    let opts = fit_options(args.seed, args.eps, args.max_iter, args.init.as_deref(), args.restarts)?;
    let dir = out_dir(args.out)?;
    let diagnose = |status: Value, iterations: usize, trace: &[f64]| -> CliError {
        let path = dir.join("diagnostics.json");
        let body = json!({
            "K": k,
            "penalty": PenaltyFile::from_config(&penalty),
            "seed": opts.seed,
            "status": status,
            "iterations": iterations,
            "pen_loglik_trace": trace,
        });
        match write_json(&path, &body) {
            Ok(()) => CliError::Numerical(format!("fit failed: {status}; see {}", path.display())),
            Err(e) => e,
        }
    };
    let result = match fit(&data, k, &penalty, &opts) {
        Ok(r) => r,
        Err(e @ (matclust::Error::Degenerate { .. } | matclust::Error::DegenerateScatter { .. })) => {
            return Err(diagnose(json!({ "state": "degenerate", "message": e.to_string() }), 0, &[]));
        }
        Err(e) => return Err(e.into()),
    };
    if matches!(result.status, FitStatus::Degenerate { .. } | FitStatus::Failed { .. }) {
        let status = serde_json::to_value(&result.status).unwrap_or(Value::Null);
        return Err(diagnose(status, result.iterations, &result.pen_loglik_trace));
    }
    if !result.converged {
        eprintln!("warning: EM stopped at max-iter = {} before converging", opts.max_iter);
    }
    write_json(&dir.join("fit.json"), &FitFile::new(&result, &penalty, opts.seed))?;
    write_labels(&dir.join("labels.csv"), &data.unit_labels(), &result.labels)?;
    Ok(())
}

pub fn select(args: SelectArgs, parallel: bool) -> Result<(), CliError> {
    let (data, _) = load(&required(args.data, "data")?, args.format.as_deref())?;
    let ks = required(args.k, "k")?;
    let kind: MeanPenalty = parse(args.penalty.as_deref().unwrap_or("group"))?;
    let points = args.grid_points.unwrap_or(4);
    let top = args.grid_top.unwrap_or(1.0);
    if ks.is_empty() || points == 0 || !(top > 0.0) {
        return Err(CliError::Usage("K grid must be non-empty, grid-points >= 1 and grid-top > 0".into()));
    }
    let opts = fit_options(args.seed, args.eps, args.max_iter, args.init.as_deref(), args.restarts)?;

    let needs_max = args.lambda1.is_none() || args.lambda2.is_none() || args.lambda3.is_none();
    let mut lmax = [0.0f64; 3];
    if needs_max {
        for &k in &ks {
            let m = lambda_max(&data, k, kind, opts.seed)?;
            for i in 0..3 {
                lmax[i] = lmax[i].max(m[i]);
            }
        }
    }
    let auto = |i: usize| equispaced(top * lmax[i], points);
    let mut grid = GridSpec {
        k: ks,
        lambda1: args.lambda1.unwrap_or_else(|| auto(0)),
        lambda2: args.lambda2.unwrap_or_else(|| auto(1)),
        lambda3: args.lambda3.unwrap_or_else(|| auto(2)),
    };
    if kind == MeanPenalty::None {
        grid.lambda1 = vec![0.0];
    }
    for g in [&mut grid.lambda1, &mut grid.lambda2, &mut grid.lambda3] {
        g.dedup();
    }
    let mut go = GridOptions::new(kind);
    go.fit = opts;
    go.master_seed = go.fit.seed;
    go.parallel = parallel;
    let dir = out_dir(args.out)?;
    let res = grid_search(&data, &grid, &go)?;
    res.save_csv(dir.join("grid.csv"))?;
    let cell = res.best_cell();
    let penalty = PenaltyConfig::new(kind, cell.lambda1, cell.lambda2, cell.lambda3);
    write_json(&dir.join("best_fit.json"), &FitFile::new(&res.best_fit, &penalty, cell.seed(go.master_seed)))?;
    write_labels(&dir.join("labels.csv"), &data.unit_labels(), &res.best_fit.labels)?;
    eprintln!(
        "best: K = {}, lambda = ({}, {}, {}), BIC = {:.3}, d0 = {}",
        cell.k, cell.lambda1, cell.lambda2, cell.lambda3, res.best_fit.bic, res.best_fit.d0
    );
    Ok(())
}

pub fn benchmark(args: BenchmarkArgs, parallel: bool) -> Result<(), CliError> {
    let name: ScenarioName = parse(&required(args.scenario, "scenario")?)?;
    let reps = args.reps.unwrap_or(20);
    if reps == 0 {
        return Err(CliError::Usage("reps must be at least 1".into()));
    }
    let methods: Vec<Method> = match args.methods {
        Some(list) => list.iter().map(|m| parse(m.trim())).collect::<Result<_, _>>()?,
        None => vec![Method::Full, Method::Group, Method::Lasso],
    };
    if methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    let spec = ScenarioSpec::new(name, 0);
    let mut opts = ExperimentOptions::new(methods.clone(), spec.k);
    for &m in &methods {
        opts.grids.insert(m, default_grid(m, spec.k));
    }
    opts.master_seed = args.seed.unwrap_or(0);
    opts.parallel = parallel;
    if let Some(r) = args.restarts {
        opts.fit.restarts = r;
    }
    if let Some(it) = args.max_iter {
        opts.fit.max_iter = it;
    }
    let dir = out_dir(args.out)?;
    let report = run_experiment(&spec, reps, &opts)?;
    let csv_path = dir.join("report.csv");
    let f = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    report.write_csv(std::io::BufWriter::new(f))?;
    write_json(&dir.join("summary.json"), &report.summary_json())?;
    for fail in &report.failures {
        eprintln!("rep {} {}: {}", fail.rep, fail.method.as_str(), fail.message);
    }
    if report.records.is_empty() {
        return Err(CliError::Numerical(format!("all {} fits failed", report.failures.len())));
    }
    Ok(())
}

pub fn transform(args: TransformArgs) -> Result<(), CliError> {
    let (data, format) = load(&required(args.data, "data")?, args.format.as_deref())?;
    let output = required(args.output, "output")?;
    let opts = PreprocessOptions {
        log_transform: args.log.unwrap_or(false),
        center_cellwise: args.center.unwrap_or(false),
        log_offset: args.log_offset.unwrap_or(0.0),
    };
    let out = preprocess(&data, &opts)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_three_way(&out, &output, format)?;
    Ok(())
}
