//! Locations, covariance matrices and exact Gaussian random field simulation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Covariance, Kernel, KernelError, KernelSpec};
use crate::linalg::{validate_ladder, Cholesky, FactorizationError, Matrix, DEFAULT_LADDER};
use crate::rng::{standard_normal, substream, uniform_open, LOCATION_STREAM};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no locations")]
    Empty,
    #[error("{0}")]
    InvalidInput(String),
    #[error("covariance is not finite at lag {h} (pair {i}, {j})")]
    NonFinite { i: usize, j: usize, h: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

type Result<T> = std::result::Result<T, FieldError>;

/// Points in ℝ^dim, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Locations {
    dim: usize,
    coords: Vec<f64>,
}

impl Locations {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(FieldError::DimensionMismatch(
                "dim must be at least 1".into(),
            ));
        }
        if coords.is_empty() {
            return Err(FieldError::Empty);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(FieldError::DimensionMismatch(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::InvalidInput(
                "coordinates must be finite".into(),
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or(FieldError::Empty)?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(FieldError::DimensionMismatch(
                "points differ in length".into(),
            ));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(self.point(i), self.point(j))
    }

    /// Subset in the given order.
    pub fn select(&self, idx: &[usize]) -> Locations {
        let coords = idx
            .iter()
            .flat_map(|&i| self.point(i).iter().copied())
            .collect();
        Locations {
            dim: self.dim,
            coords,
        }
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise distances, strict lower triangle packed row by row.
#[derive(Debug, Clone)]
pub struct Distances {
    n: usize,
    packed: Vec<f64>,
}

impl Distances {
    pub fn new(loc: &Locations) -> Self {
        let n = loc.len();
        let mut packed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 1..n {
            for j in 0..i {
                packed.push(loc.distance(i, j));
            }
        }
        Self { n, packed }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i > j { (i, j) } else { (j, i) };
        self.packed[i * (i - 1) / 2 + j]
    }
}

/// One realization (or observation) of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub locations: Locations,
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn new(locations: Locations, values: Vec<f64>) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(FieldError::DimensionMismatch(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::InvalidInput("values must be finite".into()));
        }
        Ok(Self { locations, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Subset in the given order.
    pub fn select(&self, idx: &[usize]) -> FieldSample {
        FieldSample {
            locations: self.locations.select(idx),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub n_replicates: usize,
    #[serde(default = "default_ladder")]
    pub jitter_ladder: Vec<f64>,
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}

impl SimulationConfig {
    pub fn new(seed: u64, n_replicates: usize) -> Self {
        Self {
            seed,
            n_replicates,
            jitter_ladder: default_ladder(),
        }
    }
}

/// Replicates plus the jitter (relative to φ(0)) that the factorization needed.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub samples: Vec<FieldSample>,
    pub relative_jitter: f64,
}

/// `n` points with coordinate k uniform on [lo[k], hi[k]].
pub fn sample_uniform_locations(n: usize, lo: &[f64], hi: &[f64], seed: u64) -> Result<Locations> {
    if lo.len() != hi.len() {
        return Err(FieldError::DimensionMismatch(format!(
            "box corners have lengths {} and {}",
            lo.len(),
            hi.len()
        )));
    }
    if n == 0 || lo.is_empty() {
        return Err(FieldError::Empty);
    }
    if lo
        .iter()
        .zip(hi)
        .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
    {
        return Err(FieldError::InvalidInput(
            "need lo < hi in every coordinate".into(),
        ));
    }
    let mut rng = substream(seed, LOCATION_STREAM);
    let mut coords = Vec::with_capacity(n * lo.len());
    for _ in 0..n {
        for (a, b) in lo.iter().zip(hi) {
            coords.push(a + (b - a) * uniform_open(&mut rng));
        }
    }
    Locations::new(lo.len(), coords)
}

/// Σ_ij = φ(d_ij) from precomputed distances; symmetric by construction.
pub fn covariance_from_distances<C: Covariance + ?Sized>(
    kernel: &C,
    d: &Distances,
) -> Result<Matrix> {
    let n = d.n();
    let mut m = Matrix::zeros(n);
    let var = kernel.variance()?;
    if !var.is_finite() {
        return Err(FieldError::NonFinite { i: 0, j: 0, h: 0.0 });
    }
    for i in 0..n {
        m.set(i, i, var);
        for j in 0..i {
            let h = d.get(i, j);
            let v = kernel.covariance(h)?;
            if !v.is_finite() {
                return Err(FieldError::NonFinite { i, j, h });
            }
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(m)
}

pub fn covariance_with<C: Covariance + ?Sized>(kernel: &C, loc: &Locations) -> Result<Matrix> {
    covariance_from_distances(kernel, &Distances::new(loc))
}

/// Kernel for `spec` checked for validity in the dimension of `loc`.
pub fn kernel_for(spec: &KernelSpec, loc: &Locations) -> Result<Kernel> {
    let mut spec = spec.clone();
    spec.dim = loc.dim();
    Ok(Kernel::new(&spec)?)
}

/// Covariance matrix of `loc` under `spec`, validated in dimension `loc.dim()`.
pub fn covariance_matrix(spec: &KernelSpec, loc: &Locations) -> Result<Matrix> {
    covariance_with(&kernel_for(spec, loc)?, loc)
}

/// Replicate r is L·ε_r, ε_r standard normal from stream r of `config.seed`.
pub fn simulate_with<C: Covariance + ?Sized>(
    kernel: &C,
    loc: &Locations,
    config: &SimulationConfig,
) -> Result<Simulation> {
    validate_ladder(&config.jitter_ladder)?;
    let sigma = covariance_with(kernel, loc)?;
    let var = kernel.variance()?;
    let chol = Cholesky::factor_with_ladder(&sigma, &config.jitter_ladder, var)?;
    let n = loc.len();
    let samples = (0..config.n_replicates)
        .map(|r| {
            let mut rng = substream(config.seed, r as u64);
            let eps: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            FieldSample {
                locations: loc.clone(),
                values: chol.mul_lower(&eps),
            }
        })
        .collect();
    Ok(Simulation {
        samples,
        relative_jitter: chol.jitter() / var,
    })
}

pub fn simulate(
    spec: &KernelSpec,
    loc: &Locations,
    config: &SimulationConfig,
) -> Result<Simulation> {
    simulate_with(&kernel_for(spec, loc)?, loc, config)
}

/// Shortest decimal that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `x1,…,x_d,value`.
pub fn write_sample_csv<W: Write>(sample: &FieldSample, writer: W) -> Result<()> {
    let dim = sample.locations.dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for (p, v) in sample.locations.points().zip(&sample.values) {
        let mut row: Vec<String> = p.iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sample_csv(sample: &FieldSample, path: &Path) -> Result<()> {
    write_sample_csv(sample, std::fs::File::create(path)?)
}

/// Reads `x1,…,x_d,value`; d is the number of columns before `value`.
pub fn read_sample_csv<R: Read>(reader: R) -> Result<FieldSample> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = r.headers()?.clone();
    let dim = check_header(&header, &["value"])?;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let nums = parse_row(&rec, row)?;
        coords.extend_from_slice(&nums[..dim]);
        values.push(nums[dim]);
    }
    FieldSample::new(Locations::new(dim, coords)?, values)
}

pub fn load_sample_csv(path: &Path) -> Result<FieldSample> {
    read_sample_csv(std::fs::File::open(path)?)
}

/// Reads a CSV of bare coordinates `x1,…,x_d`.
pub fn read_locations_csv<R: Read>(reader: R) -> Result<Locations> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = r.headers()?.clone();
    let dim = check_header(&header, &[])?;
    let mut coords = Vec::new();
    for (row, rec) in r.records().enumerate() {
        coords.extend(parse_row(&rec?, row)?);
    }
    Locations::new(dim, coords)
}

/// Verifies `x1..x_d` followed by `trailing`; returns d.
pub(crate) fn check_header(header: &csv::StringRecord, trailing: &[&str]) -> Result<usize> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < trailing.len() + 1 {
        return Err(FieldError::InvalidInput(format!(
            "header too short: {cols:?}"
        )));
    }
    let dim = cols.len() - trailing.len();
    for (k, c) in cols[..dim].iter().enumerate() {
        if *c != format!("x{}", k + 1) {
            return Err(FieldError::InvalidInput(format!(
                "expected column x{} but found `{c}`",
                k + 1
            )));
        }
    }
    if cols[dim..] != *trailing {
        return Err(FieldError::InvalidInput(format!(
            "expected trailing columns {trailing:?} but found {:?}",
            &cols[dim..]
        )));
    }
    Ok(dim)
}

pub(crate) fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<Vec<f64>> {
    rec.iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| {
                FieldError::InvalidInput(format!("row {}: `{f}` is not a number", row + 1))
            })
        })
        .collect()
}
