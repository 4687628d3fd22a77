//! Simple kriging, Gaussian predictive scores and leave-one-out validation.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Covariance, KernelError, KernelSpec};
use crate::linalg::{Cholesky, FactorizationError, Matrix, DEFAULT_LADDER};
use crate::randfield::{
    covariance_from_distances, euclid, fmt_f64, kernel_for, Distances, FieldError, FieldSample,
    Locations,
};
use crate::specfun::{normal_cdf, normal_pdf};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("dimension mismatch: sample has dimension {sample}, targets {targets}")]
    DimensionMismatch { sample: usize, targets: usize },
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("leave-one-out needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        source: FactorizationError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

type Result<T> = std::result::Result<T, PredictError>;

/// Kriging means and variances at a set of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub targets: Locations,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Unclamped variances, kept when clamping changed them.
    pub raw_variances: Vec<f64>,
}

/// Aggregate leave-one-out scores; smaller is better for all four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CVScores {
    pub mse: f64,
    pub mae: f64,
    pub lscore: f64,
    pub crps: f64,
    pub n: usize,
}

/// Per-point scores of a Gaussian predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScores {
    pub se: f64,
    pub ae: f64,
    pub lscore: f64,
    pub crps: f64,
}

/// Squared and absolute error, negative log density and CRPS of
/// N(mean, variance) at `actual`.
pub fn gaussian_scores(mean: f64, variance: f64, actual: f64) -> Result<PointScores> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(PredictError::NonPositiveVariance(variance));
    }
    let e = actual - mean;
    let sigma = variance.sqrt();
    let z = e / sigma;
    Ok(PointScores {
        se: e * e,
        ae: e.abs(),
        lscore: 0.5 * (2.0 * PI * variance).ln() + e * e / (2.0 * variance),
        crps: sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / PI.sqrt()),
    })
}

fn check_dims(sample: &FieldSample, targets: &Locations) -> Result<()> {
    let (s, t) = (sample.locations.dim(), targets.dim());
    if s != t {
        return Err(PredictError::DimensionMismatch {
            sample: s,
            targets: t,
        });
    }
    Ok(())
}

/// Kriging from a factorized covariance of the sample.
struct Krige {
    chol: Cholesky,
    weights: Vec<f64>,
    var0: f64,
}

impl Krige {
    fn new<C: Covariance + ?Sized>(kernel: &C, sigma: &Matrix, values: &[f64]) -> Result<Self> {
        let var0 = kernel.variance()?;
        let chol = Cholesky::factor_with_ladder(sigma, &DEFAULT_LADDER, var0)?;
        let weights = chol.solve(values);
        Ok(Self {
            chol,
            weights,
            var0,
        })
    }

    fn predict(&self, cross: &[f64]) -> (f64, f64) {
        let mean = cross.iter().zip(&self.weights).map(|(c, w)| c * w).sum();
        let y = self.chol.forward(cross);
        let var = self.var0 - y.iter().map(|v| v * v).sum::<f64>();
        (mean, var)
    }
}

/// Tolerance, relative to φ(0), within which a variance outside [0, φ(0)] is
/// treated as rounding.
pub const VARIANCE_SLACK: f64 = 1e-9;

impl PredictionSet {
    /// Targets whose raw variance left [−slack, φ(0) + slack] before clamping.
    pub fn out_of_range(&self, variance0: f64) -> Vec<usize> {
        let slack = VARIANCE_SLACK * variance0;
        self.raw_variances
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < -slack || **v > variance0 + slack)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Simple (known zero mean) kriging with any covariance.
pub fn simple_krige_with<C: Covariance + ?Sized>(
    kernel: &C,
    sample: &FieldSample,
    targets: &Locations,
) -> Result<PredictionSet> {
    check_dims(sample, targets)?;
    let sigma = covariance_from_distances(kernel, &Distances::new(&sample.locations))?;
    let krige = Krige::new(kernel, &sigma, &sample.values)?;
    let mut means = Vec::with_capacity(targets.len());
    let mut variances = Vec::with_capacity(targets.len());
    let mut raw = Vec::with_capacity(targets.len());
    for t in targets.points() {
        let cross = sample
            .locations
            .points()
            .map(|p| kernel.covariance(euclid(p, t)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let (m, v) = krige.predict(&cross);
        means.push(m);
        raw.push(v);
        variances.push(v.clamp(0.0, krige.var0));
    }
    Ok(PredictionSet {
        targets: targets.clone(),
        means,
        variances,
        raw_variances: raw,
    })
}

/// Simple kriging under `spec`, validated in the sample's dimension.
pub fn simple_krige(
    spec: &KernelSpec,
    sample: &FieldSample,
    targets: &Locations,
) -> Result<PredictionSet> {
    let kernel = kernel_for(spec, &sample.locations)?;
    simple_krige_with(&kernel, sample, targets)
}

/// Leave-one-out scores. Each fold refactorizes its own (n−1)×(n−1)
/// covariance, taken from the full matrix.
pub fn loo_cv_with<C: Covariance + ?Sized>(kernel: &C, sample: &FieldSample) -> Result<CVScores> {
    let n = sample.len();
    if n < 3 {
        return Err(PredictError::TooFewPoints(n));
    }
    let sigma = covariance_from_distances(kernel, &Distances::new(&sample.locations))?;
    let var0 = kernel.variance()?;
    let mut per_point = Vec::with_capacity(n);
    for i in 0..n {
        let sub = sigma.without(i);
        let values: Vec<f64> = (0..n)
            .filter(|&k| k != i)
            .map(|k| sample.values[k])
            .collect();
        let cross: Vec<f64> = (0..n)
            .filter(|&k| k != i)
            .map(|k| sigma.get(i, k))
            .collect();
        let chol = Cholesky::factor_with_ladder(&sub, &DEFAULT_LADDER, var0)
            .map_err(|source| PredictError::Fold { fold: i, source })?;
        let w = chol.solve(&values);
        let mean: f64 = cross.iter().zip(&w).map(|(c, w)| c * w).sum();
        let y = chol.forward(&cross);
        let var = (var0 - y.iter().map(|v| v * v).sum::<f64>()).clamp(0.0, var0);
        // a fold whose variance rounds to zero is scored with the smallest positive one
        let var = var.max(f64::MIN_POSITIVE);
        per_point.push(gaussian_scores(mean, var, sample.values[i])?);
    }
    Ok(aggregate(&per_point))
}

pub fn loo_cv(spec: &KernelSpec, sample: &FieldSample) -> Result<CVScores> {
    let kernel = kernel_for(spec, &sample.locations)?;
    loo_cv_with(&kernel, sample)
}

/// Pairwise (tree) summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn aggregate(points: &[PointScores]) -> CVScores {
    let n = points.len();
    let mean = |f: fn(&PointScores) -> f64| {
        let v: Vec<f64> = points.iter().map(f).collect();
        pairwise_sum(&v) / n as f64
    };
    CVScores {
        mse: mean(|p| p.se),
        mae: mean(|p| p.ae),
        lscore: mean(|p| p.lscore),
        crps: mean(|p| p.crps),
        n,
    }
}

/// Writes `x1,…,x_d,mean,variance`.
pub fn write_predictions_csv<W: Write>(p: &PredictionSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=p.targets.dim()).map(|k| format!("x{k}")).collect();
    header.push("mean".into());
    header.push("variance".into());
    w.write_record(&header)?;
    for ((t, m), v) in p.targets.points().zip(&p.means).zip(&p.variances) {
        let mut row: Vec<String> = t.iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*m));
        row.push(fmt_f64(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
