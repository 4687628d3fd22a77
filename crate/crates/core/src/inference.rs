//! Gaussian likelihood, maximum-likelihood fitting and standard errors.
//!
//! Free parameters are optimized on the log scale with Nelder–Mead from
//! several jittered starts. A covariance matrix that cannot be factorized
//! scores [`PENALTY`] (plus a small condition-dependent term) instead of
//! aborting, so the simplex can back away from it.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Kernel, KernelError, KernelSpec};
use crate::linalg::{Cholesky, FactorizationError, Matrix, DEFAULT_LADDER};
use crate::randfield::{covariance_from_distances, Distances, FieldError, FieldSample};
use crate::rng::{substream, JITTER_STREAM};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error("no start produced a finite likelihood")]
    NoFiniteStart,
}

type Result<T> = std::result::Result<T, FitError>;

/// Objective value for parameters whose covariance cannot be factorized.
pub const PENALTY: f64 = 1e12;

/// Which parameters are estimated and what the others are held at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMask {
    pub free: BTreeSet<String>,
    pub fixed: BTreeMap<String, f64>,
}

impl ParamMask {
    pub fn new(free: &[&str], fixed: &[(&str, f64)]) -> Self {
        Self {
            free: free.iter().map(|s| s.to_string()).collect(),
            fixed: fixed.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// Checks disjointness and that free ∪ fixed is exactly the spec's
    /// parameter list.
    pub fn validate_for(&self, spec: &KernelSpec) -> Result<()> {
        if let Some(k) = self.free.iter().find(|k| self.fixed.contains_key(*k)) {
            return Err(FitError::Parameter(format!("`{k}` is both free and fixed")));
        }
        let names: BTreeSet<&str> = spec.param_names().iter().copied().collect();
        let covered: BTreeSet<&str> = self
            .free
            .iter()
            .map(String::as_str)
            .chain(self.fixed.keys().map(String::as_str))
            .collect();
        if let Some(extra) = covered.difference(&names).next() {
            return Err(FitError::Parameter(format!(
                "`{extra}` is not a parameter of {}",
                spec.family
            )));
        }
        if let Some(missing) = names.difference(&covered).next() {
            return Err(FitError::Parameter(format!(
                "`{missing}` is neither free nor fixed"
            )));
        }
        for (k, v) in &self.fixed {
            if !v.is_finite() {
                return Err(FitError::Parameter(format!("fixed `{k}` must be finite")));
            }
        }
        Ok(())
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Half-width of the uniform log-scale jitter applied to starts after the first.
    pub start_jitter: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the simplex diameter in log space.
    pub tolerance: f64,
    /// Initial simplex edge in log space.
    pub initial_step: f64,
    pub seed: u64,
    pub jitter_ladder: Vec<f64>,
    pub compute_std_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 3,
            start_jitter: 0.5,
            max_iterations: 2000,
            tolerance: 1e-8,
            initial_step: 0.25,
            seed: 0,
            jitter_ladder: DEFAULT_LADDER.to_vec(),
            compute_std_errors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: BTreeMap<String, f64>,
    /// Present only when the Hessian at the optimum is positive definite.
    pub std_errors: Option<BTreeMap<String, f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub n_free: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub final_simplex_size: f64,
    /// Absolute diagonal jitter used at the optimum.
    pub jitter_used: f64,
    /// Index of the start that produced the optimum.
    pub best_start: usize,
}

/// Akaike information criterion 2k − 2·loglik.
pub fn aic(n_free: usize, loglik: f64) -> f64 {
    2.0 * n_free as f64 - 2.0 * loglik
}

impl FitResult {
    pub fn aic(&self) -> f64 {
        aic(self.n_free, self.loglik)
    }

    /// The fitted model.
    pub fn spec(&self, template: &KernelSpec) -> KernelSpec {
        let mut spec = template.clone();
        for (k, v) in &self.estimates {
            spec.params.insert(k.clone(), *v);
        }
        spec
    }
}

/// Negative log-likelihood and the jitter its factorization needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub value: f64,
    pub jitter: f64,
}

fn gaussian_nll(chol: &Cholesky, z: &[f64]) -> f64 {
    let y = chol.forward(z);
    let quad: f64 = y.iter().map(|v| v * v).sum();
    0.5 * (z.len() as f64 * (2.0 * PI).ln() + chol.log_det() + quad)
}

/// ½(n ln 2π + ln det Σ + zᵀΣ⁻¹z) for the model `spec` at the sample's locations.
pub fn neg_log_likelihood(spec: &KernelSpec, sample: &FieldSample) -> Result<Nll> {
    let problem = Likelihood::new(sample, &DEFAULT_LADDER)?;
    problem.nll_for(spec)
}

/// Likelihood of one data set with distances computed once.
#[derive(Debug, Clone)]
pub struct Likelihood<'a> {
    distances: Distances,
    values: &'a [f64],
    dim: usize,
    ladder: Vec<f64>,
}

impl<'a> Likelihood<'a> {
    pub fn new(sample: &'a FieldSample, ladder: &[f64]) -> Result<Self> {
        Ok(Self {
            distances: Distances::new(&sample.locations),
            values: &sample.values,
            dim: sample.locations.dim(),
            ladder: ladder.to_vec(),
        })
    }

    fn covariance(&self, spec: &KernelSpec) -> Result<(Matrix, f64)> {
        let mut spec = spec.clone();
        spec.dim = self.dim;
        let kernel = Kernel::new(&spec)?;
        let var = crate::kernels::Covariance::variance(&kernel)?;
        Ok((covariance_from_distances(&kernel, &self.distances)?, var))
    }

    pub fn nll_for(&self, spec: &KernelSpec) -> Result<Nll> {
        let (sigma, var) = self.covariance(spec)?;
        let chol = Cholesky::factor_with_ladder(&sigma, &self.ladder, var)?;
        Ok(Nll {
            value: gaussian_nll(&chol, self.values),
            jitter: chol.jitter(),
        })
    }

    /// Objective for the optimizer: the NLL, or the penalty on any failure.
    pub fn objective(&self, spec: &KernelSpec) -> f64 {
        match self.nll_for(spec) {
            Ok(n) if n.value.is_finite() => n.value,
            Err(FitError::Factorization(FactorizationError::LadderExhausted {
                condition_estimate,
                ..
            })) => PENALTY + condition_estimate.max(1.0).log10(),
            _ => PENALTY,
        }
    }
}

// ---------------------------------------------------------------------------
// Nelder–Mead

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diameter: f64,
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..simplex.len() {
        for j in 0..i {
            let s: f64 = simplex[i]
                .0
                .iter()
                .zip(&simplex[j].0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge
/// `step`. Stops when the simplex diameter drops below `tol` or after
/// `max_iter` iterations.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Minimum {
    let n = x0.len();
    if n == 0 {
        let value = f(x0);
        return Minimum {
            x: vec![],
            value,
            iterations: 0,
            converged: true,
            diameter: 0.0,
        };
    }
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // stable sort keeps earlier vertices first among ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v.0[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best
                .iter()
                .zip(&v.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let fx = eval(&x);
            *v = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let diameter = diameter(&simplex);
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
        diameter,
    }
}

// ---------------------------------------------------------------------------
// Fitting

fn spec_with(
    template: &KernelSpec,
    mask: &ParamMask,
    names: &[String],
    log_x: &[f64],
) -> KernelSpec {
    let mut spec = template.clone();
    for (k, v) in &mask.fixed {
        spec.params.insert(k.clone(), *v);
    }
    for (name, lx) in names.iter().zip(log_x) {
        spec.params.insert(name.clone(), lx.exp());
    }
    spec
}

/// Maximum-likelihood fit of the free parameters of `template`.
///
/// `init` gives the first start for every free parameter; further starts
/// multiply each one by e^U, U uniform on ±`start_jitter`, drawn from the
/// jitter stream of `options.seed`.
pub fn fit_mle(
    template: &KernelSpec,
    mask: &ParamMask,
    sample: &FieldSample,
    init: &BTreeMap<String, f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    let template = template.normalized();
    mask.validate_for(&template)?;
    let names: Vec<String> = mask.free.iter().cloned().collect();
    let x0: Vec<f64> = names
        .iter()
        .map(|k| match init.get(k) {
            Some(v) if *v > 0.0 && v.is_finite() => Ok(v.ln()),
            Some(_) => Err(FitError::Parameter(format!(
                "initial `{k}` must be positive"
            ))),
            None => Err(FitError::Parameter(format!("no initial value for `{k}`"))),
        })
        .collect::<Result<_>>()?;
    // fixed values are checked once through the kernel itself
    Kernel::new(&spec_with(&template, mask, &names, &x0))?;

    let lik = Likelihood::new(sample, &options.jitter_ladder)?;
    let objective = |lx: &[f64]| lik.objective(&spec_with(&template, mask, &names, lx));

    let mut rng = substream(options.seed, JITTER_STREAM);
    let mut best: Option<(usize, Minimum)> = None;
    for start in 0..options.n_starts.max(1) {
        let xs: Vec<f64> = if start == 0 {
            x0.clone()
        } else {
            x0.iter()
                .map(|x| x + rng.gen_range(-options.start_jitter..=options.start_jitter))
                .collect()
        };
        let m = nelder_mead(
            objective,
            &xs,
            options.initial_step,
            options.tolerance,
            options.max_iterations,
        );
        // strict comparison: the lowest start index wins ties
        if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
            best = Some((start, m));
        }
    }
    let (best_start, m) = best.expect("at least one start");
    if m.value >= PENALTY {
        return Err(FitError::NoFiniteStart);
    }
    let spec = spec_with(&template, mask, &names, &m.x);
    let nll = lik.nll_for(&spec)?;
    let estimates: BTreeMap<String, f64> = names
        .iter()
        .cloned()
        .zip(m.x.iter().map(|v| v.exp()))
        .collect();
    let std_errors = if options.compute_std_errors && !names.is_empty() {
        log_scale_std_errors(&objective, &m.x).map(|se| names.iter().cloned().zip(se).collect())
    } else {
        None
    };
    let loglik = -nll.value;
    Ok(FitResult {
        estimates,
        std_errors,
        loglik,
        aic: aic(names.len(), loglik),
        n_free: names.len(),
        n_iterations: m.iterations,
        converged: m.converged,
        final_simplex_size: m.diameter,
        jitter_used: nll.jitter,
        best_start,
    })
}

/// Relative step (in log space) of the finite-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Central-difference Hessian of `f` at `x`.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Matrix {
    let n = x.len();
    let f0 = f(x);
    let mut h = Matrix::zeros(n);
    let shifted = |pairs: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in pairs {
            y[i] += d;
        }
        f(&y)
    };
    for i in 0..n {
        let fp = shifted(&[(i, step)]);
        let fm = shifted(&[(i, -step)]);
        h.set(i, i, (fp - 2.0 * f0 + fm) / (step * step));
        for j in 0..i {
            let v = (shifted(&[(i, step), (j, step)])
                - shifted(&[(i, step), (j, -step)])
                - shifted(&[(i, -step), (j, step)])
                + shifted(&[(i, -step), (j, -step)]))
                / (4.0 * step * step);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    h
}

/// Inverse of a symmetric positive definite matrix, `None` otherwise.
pub fn spd_inverse(a: &Matrix) -> Option<Matrix> {
    let chol = Cholesky::factor(a, 0.0).ok()?;
    let n = a.n();
    let mut inv = Matrix::zeros(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol.solve(&e);
        for (i, v) in col.into_iter().enumerate() {
            inv.set(i, j, v);
        }
    }
    Some(inv)
}

/// Standard errors of θ = e^x from the inverse Hessian in x (delta method:
/// se(θ) = θ·se(x)).
fn log_scale_std_errors<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Option<Vec<f64>> {
    let h = numerical_hessian(f, x, HESSIAN_STEP);
    let inv = spd_inverse(&h)?;
    (0..x.len())
        .map(|i| {
            let v = inv.get(i, i);
            (v > 0.0 && v.is_finite()).then(|| x[i].exp() * v.sqrt())
        })
        .collect()
}

/// Standard errors at a fit's optimum; `None` unless the Hessian is positive definite.
pub fn std_errors(
    template: &KernelSpec,
    mask: &ParamMask,
    fit: &FitResult,
    sample: &FieldSample,
    ladder: &[f64],
) -> Result<Option<BTreeMap<String, f64>>> {
    let template = template.normalized();
    mask.validate_for(&template)?;
    let names: Vec<String> = mask.free.iter().cloned().collect();
    let x: Vec<f64> = names
        .iter()
        .map(|k| {
            fit.estimates
                .get(k)
                .map(|v| v.ln())
                .ok_or_else(|| FitError::Parameter(format!("fit has no estimate for `{k}`")))
        })
        .collect::<Result<_>>()?;
    let lik = Likelihood::new(sample, ladder)?;
    let objective = |lx: &[f64]| lik.objective(&spec_with(&template, mask, &names, lx));
    Ok(log_scale_std_errors(&objective, &x).map(|se| names.into_iter().zip(se).collect()))
}

/// Fit report in the JSON layout used by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: String,
    pub mask: ParamMask,
    pub estimates: BTreeMap<String, f64>,
    pub std_errors: Option<BTreeMap<String, f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub k: usize,
    pub converged: bool,
    pub n_iterations: usize,
    pub jitter_used: f64,
}

impl FitReport {
    pub fn new(template: &KernelSpec, mask: &ParamMask, fit: &FitResult) -> Self {
        Self {
            family: template.family.to_string(),
            mask: mask.clone(),
            estimates: fit.estimates.clone(),
            std_errors: fit.std_errors.clone(),
            loglik: fit.loglik,
            aic: fit.aic,
            k: fit.n_free,
            converged: fit.converged,
            n_iterations: fit.n_iterations,
            jitter_used: fit.jitter_used,
        }
    }
}
