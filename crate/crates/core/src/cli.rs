//! Command-line front end.
//!
//! Every subcommand reads its settings from flags and, optionally, from a
//! JSON file given with `--config`; flags win. The fully resolved settings
//! are echoed into `manifest.json` in the output directory, and that file is
//! itself accepted by `--config`. Exit codes: 0 success, 2 configuration,
//! 3 I/O, 4 numeric failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::inference::{fit_mle, FitError, FitOptions, FitReport, ParamMask};
use crate::kernels::{Covariance, Family, Kernel, KernelError, KernelSpec, MaternParams, Model};
use crate::mixture_oracle::{
    cauchy_segments, hybrid_cm_segments, hybrid_hm_segments, matern_segments, MixtureKernel,
    MixtureSegment,
};
use crate::predict::{loo_cv, simple_krige, write_predictions_csv, CVScores, PredictError};
use crate::randfield::{
    fmt_f64, load_sample_csv, read_locations_csv, sample_uniform_locations, save_sample_csv,
    simulate, FieldError, FieldSample, Locations, SimulationConfig,
};
use crate::scenarios::{
    quantile, run_scenario, ScenarioError, ScenarioOutcome, ScenarioSpec, LABELS,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn kernel_err(stage: &str, e: KernelError) -> CliError {
    match e {
        KernelError::Numeric(_) => CliError::Numeric(format!("{stage}: {e}")),
        _ => CliError::Config(format!("{stage}: {e}")),
    }
}

fn field_err(stage: &str, e: FieldError) -> CliError {
    match e {
        FieldError::Io(_) => CliError::Io(format!("{stage}: {e}")),
        FieldError::Csv(ref c) if c.is_io_error() => CliError::Io(format!("{stage}: {e}")),
        FieldError::Kernel(k) => kernel_err(stage, k),
        FieldError::Factorization(_) | FieldError::NonFinite { .. } => {
            CliError::Numeric(format!("{stage}: {e}"))
        }
        _ => CliError::Config(format!("{stage}: {e}")),
    }
}

fn fit_err(stage: &str, e: FitError) -> CliError {
    match e {
        FitError::Parameter(_) => CliError::Config(format!("{stage}: {e}")),
        FitError::Kernel(k) => kernel_err(stage, k),
        FitError::Field(f) => field_err(stage, f),
        FitError::Factorization(_) | FitError::NoFiniteStart => {
            CliError::Numeric(format!("{stage}: {e}"))
        }
    }
}

fn predict_err(stage: &str, e: PredictError) -> CliError {
    match e {
        PredictError::Kernel(k) => kernel_err(stage, k),
        PredictError::Field(f) => field_err(stage, f),
        PredictError::Io(_) => CliError::Io(format!("{stage}: {e}")),
        PredictError::DimensionMismatch { .. } | PredictError::TooFewPoints(_) => {
            CliError::Config(format!("{stage}: {e}"))
        }
        _ => CliError::Numeric(format!("{stage}: {e}")),
    }
}

fn io_err(stage: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{stage}: {}: {e}", path.display()))
}

/// `name=value,name=value`.
pub fn parse_params(s: &str) -> std::result::Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got `{item}`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("`{v}` is not a number"))?;
        if out.insert(k.trim().to_string(), v).is_some() {
            return Err(format!("`{k}` given twice"));
        }
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))
        })
        .collect()
}

type ParamMap = BTreeMap<String, f64>;

#[derive(Parser, Debug)]
#[command(
    name = "hybrid-cov",
    version,
    about = "Hybrid covariance models for Gaussian random fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Covariance curve on a regular grid of distances.
    Curves(CurvesArgs),
    /// Simulate replicates of a zero-mean Gaussian field.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit to a sample CSV.
    Fit(FitArgs),
    /// Simple kriging predictions at target locations.
    Krige(KrigeArgs),
    /// Leave-one-out scores of one or more models.
    Cv(CvArgs),
    /// Simulation study over the canonical scenarios.
    BenchScenarios(BenchArgs),
    /// Log-transform and center the value column of a sample CSV.
    Preprocess(PreprocessArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// matern, cauchy, gencauchy, hybrid_cm or hybrid_hm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Parameters as name=value,name=value.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamMap>,
    /// Dimension the model must be valid in (default 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Largest distance (default 3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    /// Number of grid intervals (default 300).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
    /// Divide every curve by its value at 0.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale: Option<bool>,
    /// Add component and limiting curves of hybrid models.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", hide = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// matern, cauchy, gencauchy, hybrid_cm or hybrid_hm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Parameters as name=value,name=value.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamMap>,
    /// RNG seed (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of locations (default 100).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Sampling box as lo1,hi1,lo2,hi2,… (default 0,3,0,3).
    #[arg(long = "box", value_parser = parse_list)]
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Vec<f64>>,
    /// Existing locations CSV (x1..xd) used instead of sampling.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locations: Option<PathBuf>,
    /// Number of independent replicates (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Write exp(mu + Z) instead of Z.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lognormal_mu: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Sample CSV (x1..xd,value).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// matern, cauchy, gencauchy, hybrid_cm or hybrid_hm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Starting values of the free parameters.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamMap>,
    /// Parameters held fixed.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<ParamMap>,
    /// RNG seed (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Optimizer starts (default 3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    /// Nelder-Mead iteration limit per start (default 2000).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigeArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Sample CSV (x1..xd,value).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Target locations CSV (x1..xd); a regular grid is used when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<PathBuf>,
    /// Grid points per axis over the sample's bounding box (default 20).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// matern, cauchy, gencauchy, hybrid_cm or hybrid_hm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Parameters as name=value,name=value.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamMap>,
    /// Fit report whose estimates and fixed values define the model.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<PathBuf>,
    /// Transform manifest from `preprocess`; adds back-transformed predictions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Sample CSV (x1..xd,value).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Repeat once per model.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Vec<String>>,
    /// Repeat once per model, in the same order.
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<ParamMap>>,
    /// With --fit: parameters held fixed, once per model (may be empty).
    #[arg(long, value_parser = parse_params)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<ParamMap>>,
    /// Fit each model by maximum likelihood first, starting from --params.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<bool>,
    /// RNG seed (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Scenario labels, comma separated (default a,b,c,d).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Points per replicate (default 100).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Replicates per scenario (default 30).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// RNG seed (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// δ values of the generalized-Cauchy competitors (default 1,2).
    #[arg(long, value_parser = parse_list)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Optimizer starts (default 3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessArgs {
    /// JSON settings file; explicit flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (default out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Sample CSV (x1..xd,value).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Steps to apply: log, center or both (default log,center).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<Vec<String>>,
    /// Undo the transform recorded in this manifest instead of applying one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse: Option<PathBuf>,
}

/// Overlays explicit flags on the `--config` file.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let mut base = match config {
        None => Value::Object(Default::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err("config", p, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config: {}: {e}", p.display())))?;
            // a manifest is accepted as is
            match v.get("config") {
                Some(inner) if v.get("command").is_some() => inner.clone(),
                _ => v,
            }
        }
    };
    let overlay = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))?;
    match (&mut base, overlay) {
        (Value::Object(b), Value::Object(o)) => b.extend(o),
        _ => return Err(CliError::Config("config: expected a JSON object".into())),
    }
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("config: {e}")))
}

fn required<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("--{name} is required")))
}

fn family(name: &str) -> Result<Family> {
    Family::parse(name).ok_or_else(|| {
        let known: Vec<&str> = Family::ALL.iter().map(|f| f.as_str()).collect();
        CliError::Config(format!(
            "unknown model `{name}` (expected one of {})",
            known.join(", ")
        ))
    })
}

fn build_spec(model: &str, params: &ParamMap, dim: usize) -> Result<KernelSpec> {
    let spec = KernelSpec {
        family: family(model)?,
        params: params.clone(),
        dim,
    };
    spec.model().map_err(|e| kernel_err("model", e))?;
    Ok(spec)
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_err("output", out, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err("output", path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<Value>,
}

fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    outputs: &[&str],
    warnings: Vec<String>,
    extra: Option<Value>,
) -> Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        warnings,
        extra,
    };
    write_json(&out.join("manifest.json"), &m)
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------- curves

struct Curve {
    name: String,
    values: Vec<f64>,
}

fn eval_curve<C: Covariance + ?Sized>(
    name: &str,
    k: &C,
    hs: &[f64],
    rescale: bool,
) -> Result<Curve> {
    let mut values = hs
        .iter()
        .map(|&h| k.covariance(h))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| kernel_err("curves", e))?;
    if rescale {
        let v0 = k.variance().map_err(|e| kernel_err("curves", e))?;
        values.iter_mut().for_each(|v| *v /= v0);
    }
    Ok(Curve {
        name: name.to_string(),
        values,
    })
}

fn spec_kernel(spec: &KernelSpec) -> Result<Kernel> {
    Kernel::new(spec).map_err(|e| kernel_err("curves", e))
}

fn reference_curves(spec: &KernelSpec, hs: &[f64], rescale: bool) -> Result<Vec<Curve>> {
    let dim = spec.dim;
    let model = spec.model().map_err(|e| kernel_err("curves", e))?;
    match model {
        Model::HybridCm(p) => {
            let c = spec_kernel(&KernelSpec::cauchy(1.0, p.lambda1, dim))?;
            let m = spec_kernel(&KernelSpec::matern(1.0, p.lambda2, dim))?;
            let cc = eval_curve("cauchy", &c, hs, rescale)?;
            let mm = eval_curve("matern", &m, hs, rescale)?;
            // the components have unit variance, so their mean is already a correlation
            let avg: Vec<f64> = cc
                .values
                .iter()
                .zip(&mm.values)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            Ok(vec![
                cc,
                mm,
                Curve {
                    name: "average".into(),
                    values: avg,
                },
            ])
        }
        Model::HybridHm(p) => {
            // ξ → ∞ leaves the untruncated hole-effect part, ξ → 0 the Matérn part
            let inner = MaternParams {
                alpha: p.lambda1.alpha / p.eta.sqrt(),
                nu: p.lambda1.nu,
            };
            let mut hole = Vec::with_capacity(hs.len());
            for &h in hs {
                let a = crate::kernels::matern(h, &inner).map_err(|e| kernel_err("curves", e))?;
                let b =
                    crate::kernels::matern(h, &p.lambda1).map_err(|e| kernel_err("curves", e))?;
                hole.push(p.omega1 * (p.tau * a - b));
            }
            if rescale {
                let v0 = p.omega1 * (p.tau - 1.0);
                hole.iter_mut().for_each(|v| *v /= v0);
            }
            let m = spec_kernel(&KernelSpec::matern(p.omega2, p.lambda2, dim))?;
            Ok(vec![
                Curve {
                    name: "hole_limit".into(),
                    values: hole,
                },
                eval_curve("matern_limit", &m, hs, rescale)?,
            ])
        }
        _ => Err(CliError::Config(format!(
            "curves: reference curves are defined for hybrid models only, not {}",
            spec.family
        ))),
    }
}

fn oracle_segments(model: &Model) -> Result<(f64, Vec<MixtureSegment>)> {
    let r = match model {
        Model::Matern { omega, params } => (*omega, matern_segments(params)),
        Model::Cauchy { omega, params } => (*omega, cauchy_segments(params)),
        Model::HybridCm(p) => (1.0, hybrid_cm_segments(p)),
        Model::HybridHm(p) => (1.0, hybrid_hm_segments(p)),
        Model::GenCauchy { .. } => {
            return Err(CliError::Config(
                "curves: no mixture representation for gencauchy".into(),
            ))
        }
    };
    Ok((r.0, r.1.map_err(|e| kernel_err("oracle", e))?))
}

struct Scaled {
    omega: f64,
    inner: MixtureKernel,
}

impl Covariance for Scaled {
    fn covariance(&self, h: f64) -> std::result::Result<f64, KernelError> {
        Ok(self.omega * self.inner.covariance(h)?)
    }
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let model = required(&a.model, "model")?;
    let params = required(&a.params, "params")?;
    let dim = *a.dim.get_or_insert(2);
    let h_max = *a.h_max.get_or_insert(3.0);
    let n_grid = *a.n_grid.get_or_insert(300);
    let rescale = *a.rescale.get_or_insert(false);
    let reference = *a.reference.get_or_insert(false);
    let oracle = *a.oracle.get_or_insert(false);
    if !(h_max > 0.0) || !h_max.is_finite() || n_grid == 0 {
        return Err(CliError::Config(
            "curves: need h_max > 0 and n_grid ≥ 1".into(),
        ));
    }
    let spec = build_spec(&model, &params, dim)?;
    let hs: Vec<f64> = (0..=n_grid)
        .map(|i| h_max * i as f64 / n_grid as f64)
        .collect();
    let kernel = spec_kernel(&spec)?;
    let mut curves = vec![eval_curve("phi", &kernel, &hs, rescale)?];
    if reference {
        curves.extend(reference_curves(&spec, &hs, rescale)?);
    }
    let mut stdout = String::new();
    let mut extra = None;
    if oracle {
        let (omega, segments) = oracle_segments(kernel.model())?;
        let mk = Scaled {
            omega,
            inner: MixtureKernel::new(segments).map_err(|e| kernel_err("oracle", e))?,
        };
        let o = eval_curve("oracle", &mk, &hs, rescale)?;
        let max_diff = curves[0]
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        writeln!(stdout, "max |phi - oracle| = {}", fmt_f64(max_diff)).ok();
        extra = Some(json!({ "oracle_max_abs_diff": max_diff }));
        curves.insert(1, o);
    }
    let mut header = vec!["h".to_string()];
    header.extend(curves.iter().map(|c| c.name.clone()));
    let rows: Vec<Vec<String>> = hs
        .iter()
        .enumerate()
        .map(|(i, h)| {
            std::iter::once(fmt_f64(*h))
                .chain(curves.iter().map(|c| fmt_f64(c.values[i])))
                .collect()
        })
        .collect();
    create_out(&out)?;
    write_text(&out.join("curves.csv"), &csv_text(&header, &rows))?;
    write_manifest(&out, "curves", &a, &["curves.csv"], vec![], extra)?;
    Ok(stdout)
}

// -------------------------------------------------------------- simulate

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let model = required(&a.model, "model")?;
    let params = required(&a.params, "params")?;
    let seed = *a.seed.get_or_insert(0);
    let replicates = *a.replicates.get_or_insert(1);
    if replicates == 0 {
        return Err(CliError::Config(
            "simulate: --replicates must be at least 1".into(),
        ));
    }
    let loc = match &a.locations {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| io_err("simulate", p, e))?;
            read_locations_csv(f).map_err(|e| field_err("simulate", e))?
        }
        None => {
            let n = *a.n.get_or_insert(100);
            let bbox = a
                .bbox
                .get_or_insert_with(|| vec![0.0, 3.0, 0.0, 3.0])
                .clone();
            if bbox.is_empty() || bbox.len() % 2 != 0 {
                return Err(CliError::Config("simulate: --box needs lo,hi pairs".into()));
            }
            let lo: Vec<f64> = bbox.iter().step_by(2).copied().collect();
            let hi: Vec<f64> = bbox.iter().skip(1).step_by(2).copied().collect();
            sample_uniform_locations(n, &lo, &hi, seed).map_err(|e| field_err("simulate", e))?
        }
    };
    let spec = build_spec(&model, &params, loc.dim())?;
    let sim = simulate(&spec, &loc, &SimulationConfig::new(seed, replicates))
        .map_err(|e| field_err("simulate", e))?;
    create_out(&out)?;
    let width = replicates.saturating_sub(1).to_string().len().max(3);
    let mut outputs = Vec::new();
    for (r, s) in sim.samples.iter().enumerate() {
        let s = match a.lognormal_mu {
            Some(mu) => FieldSample {
                locations: s.locations.clone(),
                values: s.values.iter().map(|z| (mu + z).exp()).collect(),
            },
            None => s.clone(),
        };
        let name = format!("sample_{r:0width$}.csv");
        save_sample_csv(&s, &out.join(&name)).map_err(|e| field_err("simulate", e))?;
        outputs.push(name);
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let extra = json!({ "relative_jitter": sim.relative_jitter });
    write_manifest(&out, "simulate", &a, &names, vec![], Some(extra))?;
    Ok(String::new())
}

// ------------------------------------------------------------------- fit

fn load_sample(stage: &str, path: &Path) -> Result<FieldSample> {
    load_sample_csv(path).map_err(|e| match e {
        FieldError::Io(io) => io_err(stage, path, io),
        other => field_err(stage, other),
    })
}

fn fit_one(
    stage: &str,
    model: &str,
    init: &ParamMap,
    fixed: &ParamMap,
    sample: &FieldSample,
    options: &FitOptions,
) -> Result<(KernelSpec, ParamMask, crate::inference::FitResult)> {
    let mut all = init.clone();
    all.extend(fixed.iter().map(|(k, v)| (k.clone(), *v)));
    let template = build_spec(model, &all, sample.locations.dim())?.normalized();
    let free: Vec<&str> = template
        .param_names()
        .iter()
        .copied()
        .filter(|k| !fixed.contains_key(*k))
        .collect();
    let fixed_pairs: Vec<(&str, f64)> = fixed.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mask = ParamMask::new(&free, &fixed_pairs);
    let mut start = template.params.clone();
    start.retain(|k, _| !fixed.contains_key(k));
    let fit = fit_mle(&template, &mask, sample, &start, options).map_err(|e| fit_err(stage, e))?;
    Ok((template, mask, fit))
}

pub fn cmd_fit(args: &FitArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let input = required(&a.input, "input")?;
    let model = required(&a.model, "model")?;
    let params = required(&a.params, "params")?;
    let fixed = a.fixed.get_or_insert_with(BTreeMap::new).clone();
    let options = FitOptions {
        seed: *a.seed.get_or_insert(0),
        n_starts: *a.starts.get_or_insert(3),
        max_iterations: *a.max_iter.get_or_insert(2000),
        ..FitOptions::default()
    };
    let sample = load_sample("fit", &input)?;
    let (template, mask, fit) = fit_one("fit", &model, &params, &fixed, &sample, &options)?;
    let report = FitReport::new(&template, &mask, &fit);
    create_out(&out)?;
    write_json(&out.join("fit.json"), &report)?;
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!(
            "optimizer stopped after {} iterations without converging",
            fit.n_iterations
        ));
    }
    if fit.std_errors.is_none() {
        warnings.push("Hessian not positive definite; standard errors omitted".into());
    }
    for w in &warnings {
        eprintln!("fit: warning: {w}");
    }
    write_manifest(&out, "fit", &a, &["fit.json"], warnings, None)?;
    Ok(format!(
        "loglik {} aic {}\n",
        fmt_f64(fit.loglik),
        fmt_f64(fit.aic)
    ))
}

// ----------------------------------------------------------------- krige

/// Back-transformation recorded by `preprocess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub log: bool,
    pub center: bool,
    pub mean: f64,
}

impl Transform {
    pub fn apply(&self, v: f64) -> f64 {
        let v = if self.log { v.ln() } else { v };
        v - self.mean
    }

    pub fn invert(&self, v: f64) -> f64 {
        let v = v + self.mean;
        if self.log {
            v.exp()
        } else {
            v
        }
    }

    /// Mean and variance on the original scale of N(m, s²) on the
    /// transformed scale.
    pub fn moments(&self, m: f64, s2: f64) -> (f64, f64) {
        let mu = m + self.mean;
        if self.log {
            let mean = (mu + 0.5 * s2).exp();
            (mean, s2.exp_m1() * mean * mean)
        } else {
            (mu, s2)
        }
    }
}

fn read_transform(path: &Path) -> Result<Transform> {
    let text = fs::read_to_string(path).map_err(|e| io_err("transform", path, e))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("transform: {}: {e}", path.display())))?;
    let t = v
        .pointer("/extra/transform")
        .or_else(|| v.get("transform"))
        .cloned()
        .unwrap_or(v);
    serde_json::from_value(t)
        .map_err(|e| CliError::Config(format!("transform: {}: {e}", path.display())))
}

fn grid_targets(sample: &FieldSample, per_axis: usize) -> Result<Locations> {
    let d = sample.locations.dim();
    if per_axis < 2 {
        return Err(CliError::Config(
            "krige: --grid needs at least 2 points per axis".into(),
        ));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in sample.locations.points() {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|t| *t <= 1_000_000)
        .ok_or_else(|| CliError::Config("krige: grid too large".into()))?;
    let mut coords = Vec::with_capacity(total * d);
    for idx in 0..total {
        let mut rem = idx;
        let mut point = vec![0.0; d];
        // last coordinate varies fastest
        for k in (0..d).rev() {
            let i = rem % per_axis;
            rem /= per_axis;
            point[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64;
        }
        coords.extend(point);
    }
    Locations::new(d, coords).map_err(|e| field_err("krige", e))
}

fn spec_from_fit(path: &Path, dim: usize) -> Result<KernelSpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err("krige", path, e))?;
    let r: FitReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("krige: {}: {e}", path.display())))?;
    let mut params = r.mask.fixed.clone();
    params.extend(r.estimates);
    build_spec(&r.family, &params, dim)
}

pub fn cmd_krige(args: &KrigeArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let input = required(&a.input, "input")?;
    let sample = load_sample("krige", &input)?;
    let dim = sample.locations.dim();
    let spec = match (&a.fit, &a.model) {
        (Some(f), None) => spec_from_fit(f, dim)?,
        (None, Some(m)) => build_spec(m, &required(&a.params, "params")?, dim)?,
        _ => {
            return Err(CliError::Config(
                "krige: give exactly one of --fit or --model".into(),
            ))
        }
    };
    let targets = match &a.targets {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| io_err("krige", p, e))?;
            read_locations_csv(f).map_err(|e| field_err("krige", e))?
        }
        None => grid_targets(&sample, *a.grid.get_or_insert(20))?,
    };
    let pred = simple_krige(&spec, &sample, &targets).map_err(|e| predict_err("krige", e))?;
    create_out(&out)?;
    let mut buf = Vec::new();
    write_predictions_csv(&pred, &mut buf).map_err(|e| predict_err("krige", e))?;
    write_text(&out.join("predictions.csv"), &String::from_utf8_lossy(&buf))?;
    let mut outputs = vec!["predictions.csv"];
    if let Some(tp) = &a.transform {
        let t = read_transform(tp)?;
        let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        header.extend(["mean".to_string(), "variance".to_string()]);
        let rows: Vec<Vec<String>> = pred
            .targets
            .points()
            .zip(pred.means.iter().zip(&pred.variances))
            .map(|(p, (m, v))| {
                let (bm, bv) = t.moments(*m, *v);
                p.iter()
                    .map(|c| fmt_f64(*c))
                    .chain([fmt_f64(bm), fmt_f64(bv)])
                    .collect()
            })
            .collect();
        write_text(
            &out.join("predictions_original_scale.csv"),
            &csv_text(&header, &rows),
        )?;
        outputs.push("predictions_original_scale.csv");
    }
    let var0 = Kernel::new(&spec)
        .and_then(|k| k.variance())
        .map_err(|e| kernel_err("krige", e))?;
    let warnings: Vec<String> = pred
        .out_of_range(var0)
        .into_iter()
        .map(|i| {
            format!(
                "target {i}: variance {} clamped",
                fmt_f64(pred.raw_variances[i])
            )
        })
        .collect();
    for w in &warnings {
        eprintln!("krige: warning: {w}");
    }
    let extra = json!({ "model": spec });
    write_manifest(&out, "krige", &a, &outputs, warnings, Some(extra))?;
    Ok(String::new())
}

// -------------------------------------------------------------------- cv

#[derive(Serialize)]
struct ModelScores {
    label: String,
    model: KernelSpec,
    scores: CVScores,
}

pub fn cmd_cv(args: &CvArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let input = required(&a.input, "input")?;
    let models = required(&a.model, "model")?;
    let params = required(&a.params, "params")?;
    let do_fit = *a.fit.get_or_insert(false);
    let seed = *a.seed.get_or_insert(0);
    if models.is_empty() || models.len() != params.len() {
        return Err(CliError::Config(format!(
            "cv: {} --model but {} --params",
            models.len(),
            params.len()
        )));
    }
    let fixed = a
        .fixed
        .get_or_insert_with(|| vec![BTreeMap::new(); models.len()])
        .clone();
    if fixed.len() != models.len() {
        return Err(CliError::Config(format!(
            "cv: {} --model but {} --fixed",
            models.len(),
            fixed.len()
        )));
    }
    let sample = load_sample("cv", &input)?;
    let options = FitOptions {
        seed,
        compute_std_errors: false,
        ..FitOptions::default()
    };
    let mut results = Vec::new();
    for (i, ((m, p), f)) in models.iter().zip(&params).zip(&fixed).enumerate() {
        let stage = format!("cv model {}", i + 1);
        let spec = if do_fit {
            let (template, _, fit) = fit_one(&stage, m, p, f, &sample, &options)?;
            fit.spec(&template)
        } else {
            let mut all = p.clone();
            all.extend(f.iter().map(|(k, v)| (k.clone(), *v)));
            build_spec(m, &all, sample.locations.dim())?
        };
        let scores = loo_cv(&spec, &sample).map_err(|e| predict_err(&stage, e))?;
        let label = if models.iter().filter(|x| *x == m).count() > 1 {
            format!("{m}#{}", i + 1)
        } else {
            m.clone()
        };
        results.push(ModelScores {
            label,
            model: spec.normalized(),
            scores,
        });
    }
    // the first model wins ties
    let winner = results
        .iter()
        .fold(None::<&ModelScores>, |best, r| match best {
            Some(b) if b.scores.mse <= r.scores.mse => Some(b),
            _ => Some(r),
        })
        .expect("at least one model");
    let mut stdout = String::new();
    for r in &results {
        let s = &r.scores;
        writeln!(
            stdout,
            "{}: mse {} mae {} lscore {} crps {} n {}",
            r.label,
            fmt_f64(s.mse),
            fmt_f64(s.mae),
            fmt_f64(s.lscore),
            fmt_f64(s.crps),
            s.n
        )
        .ok();
    }
    writeln!(stdout, "winner by MSE: {}", winner.label).ok();
    create_out(&out)?;
    let report = json!({ "models": results, "winner_by_mse": winner.label });
    write_json(&out.join("scores.json"), &report)?;
    write_manifest(&out, "cv", &a, &["scores.json"], vec![], None)?;
    Ok(stdout)
}

// ------------------------------------------------------- bench-scenarios

const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

fn score_rows(o: &ScenarioOutcome) -> Vec<Vec<String>> {
    (0..o.competitors.len())
        .map(|k| {
            let s = o.mean_scores(k);
            vec![
                o.spec.label.clone(),
                o.competitors[k].name.clone(),
                o.spec.n_points.to_string(),
                o.replicates.len().to_string(),
                o.failures.len().to_string(),
                fmt_f64(s.mse),
                fmt_f64(s.mae),
                fmt_f64(s.lscore),
                fmt_f64(s.crps),
            ]
        })
        .collect()
}

fn estimate_rows(o: &ScenarioOutcome) -> Vec<Vec<String>> {
    let truth = o.spec.hybrid_start();
    truth
        .iter()
        .map(|(name, t)| {
            let mut centered: Vec<f64> = o.estimates(0, name).iter().map(|e| e - t).collect();
            centered.sort_by(f64::total_cmp);
            let mut row = vec![
                o.spec.label.clone(),
                o.competitors[0].name.clone(),
                name.clone(),
                fmt_f64(*t),
            ];
            row.extend(QUANTILES.iter().map(|p| fmt_f64(quantile(&centered, *p))));
            row
        })
        .collect()
}

pub fn cmd_bench_scenarios(args: &BenchArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let labels = a
        .labels
        .get_or_insert_with(|| LABELS.iter().map(|s| s.to_string()).collect())
        .clone();
    let n = *a.n.get_or_insert(100);
    let replicates = *a.replicates.get_or_insert(30);
    let seed = *a.seed.get_or_insert(0);
    let deltas = a.deltas.get_or_insert_with(|| vec![1.0, 2.0]).clone();
    let options = FitOptions {
        n_starts: *a.starts.get_or_insert(3),
        compute_std_errors: false,
        ..FitOptions::default()
    };
    if replicates == 0 || n < 3 {
        return Err(CliError::Config(
            "bench-scenarios: need at least 1 replicate and 3 points".into(),
        ));
    }
    let mut warnings = Vec::new();
    if replicates == 1 {
        warnings.push(
            "single replicate: means and quantiles are not Monte Carlo summaries".to_string(),
        );
    }
    let mut scores = Vec::new();
    let mut estimates = Vec::new();
    let mut failures = BTreeMap::new();
    for label in &labels {
        let spec = ScenarioSpec::canonical(label, n, replicates)
            .map_err(|e| CliError::Config(format!("bench-scenarios: {e}")))?;
        let o = run_scenario(&spec, &deltas, seed, &options).map_err(|e| match e {
            ScenarioError::Kernel(k) => kernel_err("bench-scenarios", k),
            ScenarioError::Field(f) => field_err("bench-scenarios", f),
            other => CliError::Numeric(format!("bench-scenarios: {other}")),
        })?;
        for (r, msg) in &o.failures {
            eprintln!("bench-scenarios: scenario {label} replicate {r} excluded: {msg}");
        }
        failures.insert(
            label.clone(),
            o.failures
                .iter()
                .map(|(r, m)| json!({"replicate": r, "error": m}))
                .collect::<Vec<_>>(),
        );
        scores.extend(score_rows(&o));
        estimates.extend(estimate_rows(&o));
    }
    for w in &warnings {
        eprintln!("bench-scenarios: warning: {w}");
    }
    let score_header: Vec<String> = [
        "scenario",
        "model",
        "n_points",
        "n_replicates",
        "n_failed",
        "mse",
        "mae",
        "lscore",
        "crps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut est_header: Vec<String> = ["scenario", "model", "parameter", "truth"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    est_header.extend(
        QUANTILES
            .iter()
            .map(|p| format!("q{:02}", (p * 100.0).round() as u32)),
    );
    create_out(&out)?;
    let table = csv_text(&score_header, &scores);
    write_text(&out.join("scores.csv"), &table)?;
    write_text(
        &out.join("estimates.csv"),
        &csv_text(&est_header, &estimates),
    )?;
    let extra = json!({ "failures": failures });
    write_manifest(
        &out,
        "bench-scenarios",
        &a,
        &["scores.csv", "estimates.csv"],
        warnings,
        Some(extra),
    )?;
    Ok(table)
}

// ------------------------------------------------------------ preprocess

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<String> {
    let mut a = merge(args, args.config.as_deref())?;
    let out = a.out.get_or_insert_with(|| "out".into()).clone();
    let input = required(&a.input, "input")?;
    let sample = load_sample("preprocess", &input)?;
    let (t, values, name) = match &a.inverse {
        Some(manifest) => {
            a.transform = None;
            let t = read_transform(manifest)?;
            let v: Vec<f64> = sample.values.iter().map(|v| t.invert(*v)).collect();
            (t, v, "restored.csv")
        }
        None => {
            let steps = a
                .transform
                .get_or_insert_with(|| vec!["log".into(), "center".into()])
                .clone();
            if let Some(bad) = steps.iter().find(|s| *s != "log" && *s != "center") {
                return Err(CliError::Config(format!(
                    "preprocess: unknown transform `{bad}`"
                )));
            }
            let log = steps.iter().any(|s| s == "log");
            let center = steps.iter().any(|s| s == "center");
            let mut v = sample.values.clone();
            if log {
                if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
                    return Err(CliError::Numeric(format!(
                        "preprocess: row {} has nonpositive value {} under log",
                        i + 1,
                        fmt_f64(v[i])
                    )));
                }
                v.iter_mut().for_each(|x| *x = x.ln());
            }
            let mean = if center {
                crate::predict::pairwise_sum(&v) / v.len() as f64
            } else {
                0.0
            };
            v.iter_mut().for_each(|x| *x -= mean);
            (Transform { log, center, mean }, v, "preprocessed.csv")
        }
    };
    let result = FieldSample::new(sample.locations.clone(), values)
        .map_err(|e| field_err("preprocess", e))?;
    create_out(&out)?;
    save_sample_csv(&result, &out.join(name)).map_err(|e| field_err("preprocess", e))?;
    let extra = json!({ "transform": t });
    write_manifest(&out, "preprocess", &a, &[name], vec![], Some(extra))?;
    Ok(String::new())
}

/// Runs a parsed command; returns what should go to stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Curves(a) => cmd_curves(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Krige(a) => cmd_krige(a),
        Command::Cv(a) => cmd_cv(a),
        Command::BenchScenarios(a) => cmd_bench_scenarios(a),
        Command::Preprocess(a) => cmd_preprocess(a),
    }
}

/// Parses `std::env::args`, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(s) => {
            print!("{s}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
