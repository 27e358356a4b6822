//! Command settings. Each struct doubles as the clap argument set and as the
//! matching TOML section; config keys are the flag names with `_` for `-`, and
//! a flag always overrides the config value of the same name.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "MATCLUST_THREADS";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateArgs>,
    pub fit: Option<FitArgs>,
    pub select: Option<SelectArgs>,
    pub benchmark: Option<BenchmarkArgs>,
    pub transform: Option<TransformArgs>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}

/// `flag.or(config)` field by field.
macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn overlay(self, base: Option<Self>) -> Self {
                let Some(base) = base else { return self };
                Self { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// alternated-blocks or sparse-at-random
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// long-csv or json-tensor
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub mean_scale: Option<f64>,
}
overlay!(SimulateArgs { scenario, seed, out, format, n, p, q, k, mean_scale });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// long-csv or json-tensor; guessed from the extension when absent
    #[arg(long)]
    pub format: Option<String>,
    #[arg(short = 'k', long)]
    pub k: Option<usize>,
    /// group, lasso or none
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// ward or kmeans++
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(FitArgs { data, format, k, penalty, lambda1, lambda2, lambda3, seed, eps, max_iter, init, restarts, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Comma-separated K values
    #[arg(short = 'k', long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub penalty: Option<String>,
    /// Explicit λ₁ values; when absent an equispaced grid up to λ₁_max is used
    #[arg(long, value_delimiter = ',')]
    pub lambda1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda3: Option<Vec<f64>>,
    /// Points per automatic λ grid
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Automatic grids end at this fraction of λ_max
    #[arg(long)]
    pub grid_top: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(SelectArgs {
    data, format, k, penalty, lambda1, lambda2, lambda3, grid_points, grid_top, seed, eps, max_iter, init, restarts, out
});

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated subset of full, group, lasso
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(BenchmarkArgs { scenario, reps, methods, seed, restarts, max_iter, out });

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Output file, written in the input format
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Apply log(value + offset)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub log: Option<bool>,
    #[arg(long)]
    pub log_offset: Option<f64>,
    /// Subtract the across-unit mean of every cell
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center: Option<bool>,
}
overlay!(TransformArgs { data, format, output, log, log_offset, center });

/// Flag, then config, then `MATCLUST_THREADS`.
pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(t) = flag.or(config) {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        _ => Ok(None),
    }
}

pub fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required setting `{name}` (flag --{name} or config)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cfg = ConfigFile::parse("schema_version = 1\n[fit]\nk = 4\nlambda1 = 2.0\n").unwrap();
        let flags = FitArgs {
            k: Some(3),
            ..Default::default()
        };
        let merged = flags.overlay(cfg.fit);
        assert_eq!(merged.k, Some(3));
        assert_eq!(merged.lambda1, Some(2.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse("schema_version = 1\n[fit]\nkk = 4\n").is_err());
        assert!(ConfigFile::parse("schema_version = 1\nbogus = 1\n").is_err());
    }

    #[test]
    fn schema_version_checked() {
        assert!(ConfigFile::parse("schema_version = 2\n").is_err());
        assert!(ConfigFile::parse("[fit]\nk = 2\n").is_err());
    }
}
