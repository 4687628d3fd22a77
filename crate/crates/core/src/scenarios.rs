//! Simulation study: replicate fields from a parsimonious hybrid model, fit
//! the hybrid and generalized-Cauchy competitors, and score them by
//! leave-one-out cross-validation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{fit_mle, FitError, FitOptions, ParamMask};
use crate::kernels::{GenCauchyParams, KernelError, KernelSpec, ParsimoniousCM};
use crate::predict::{loo_cv, CVScores, PredictError};
use crate::randfield::{
    sample_uniform_locations, simulate, FieldError, FieldSample, Locations, SimulationConfig,
};

pub const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario label `{0}` (expected a, b, c or d)")]
    UnknownLabel(String),
    #[error("{failed} of {total} replicates failed in scenario {label}")]
    TooManyFailures {
        label: String,
        failed: usize,
        total: usize,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub nu2: f64,
    pub xi: f64,
    pub omega: f64,
    pub alpha: f64,
    pub nu1: f64,
    pub n_points: usize,
    pub n_replicates: usize,
}

impl ScenarioSpec {
    pub fn canonical(
        label: &str,
        n_points: usize,
        n_replicates: usize,
    ) -> Result<Self, ScenarioError> {
        let (nu2, xi) = match label {
            "a" => (0.5, 40.0),
            "b" => (0.5, 120.0),
            "c" => (1.5, 40.0),
            "d" => (1.5, 120.0),
            other => return Err(ScenarioError::UnknownLabel(other.to_string())),
        };
        Ok(Self {
            label: label.to_string(),
            nu2,
            xi,
            omega: 1.0,
            alpha: 0.125,
            nu1: 0.75,
            n_points,
            n_replicates,
        })
    }

    pub fn truth(&self) -> ParsimoniousCM {
        ParsimoniousCM {
            omega: self.omega,
            alpha: self.alpha,
            nu1: self.nu1,
            nu2: self.nu2,
            xi_tilde: self.alpha * self.xi.sqrt(),
        }
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec::parsimonious_cm(&self.truth(), 2)
    }

    /// Free parameters of the hybrid fit and the values they are started from.
    pub fn hybrid_start(&self) -> BTreeMap<String, f64> {
        let t = self.truth();
        [
            ("omega", t.omega),
            ("alpha", t.alpha),
            ("xi_tilde", t.xi_tilde),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn hybrid_mask(&self) -> ParamMask {
        ParamMask::new(
            &["omega", "alpha", "xi_tilde"],
            &[("nu1", self.nu1), ("nu2", self.nu2)],
        )
    }

    /// Uniform locations on [0, 3]².
    pub fn locations(&self, seed: u64) -> Result<Locations, FieldError> {
        sample_uniform_locations(self.n_points, &[0.0, 0.0], &[3.0, 3.0], seed)
    }

    pub fn simulate(&self, seed: u64) -> Result<Vec<FieldSample>, ScenarioError> {
        let loc = self.locations(seed)?;
        Ok(simulate(
            &self.spec(),
            &loc,
            &SimulationConfig::new(seed, self.n_replicates),
        )?
        .samples)
    }
}

/// One competitor in the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Competitor {
    pub name: String,
    pub template: KernelSpec,
    pub mask: ParamMask,
    pub init: BTreeMap<String, f64>,
}

impl Competitor {
    pub fn hybrid(s: &ScenarioSpec) -> Self {
        Self {
            name: "hybrid_cm".into(),
            template: s.spec(),
            mask: s.hybrid_mask(),
            init: s.hybrid_start(),
        }
    }

    /// Generalized Cauchy with ν = ν₁ and δ held fixed; α starts at α₀^{δ/2}
    /// so that the start matches the hybrid's Cauchy component when δ = 2.
    pub fn gen_cauchy(s: &ScenarioSpec, delta: f64) -> Result<Self, KernelError> {
        let alpha0 = s.alpha.powf(delta / 2.0);
        let template = KernelSpec::gen_cauchy(1.0, GenCauchyParams::new(alpha0, s.nu1, delta)?, 2);
        Ok(Self {
            name: format!("gc_delta{delta}"),
            template,
            mask: ParamMask::new(&["omega", "alpha"], &[("nu", s.nu1), ("delta", delta)]),
            init: [
                ("omega".to_string(), s.omega),
                ("alpha".to_string(), alpha0),
            ]
            .into(),
        })
    }
}

/// Outcome of one replicate for one competitor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFit {
    pub estimates: BTreeMap<String, f64>,
    pub scores: CVScores,
}

#[derive(Debug, Error)]
pub enum ReplicateError {
    #[error("{model}: fit failed: {source}")]
    Fit { model: String, source: FitError },
    #[error("{model}: cross-validation failed: {source}")]
    Cv { model: String, source: PredictError },
}

pub fn run_replicate(
    competitors: &[Competitor],
    sample: &FieldSample,
    options: &FitOptions,
) -> Result<Vec<ReplicateFit>, ReplicateError> {
    competitors
        .iter()
        .map(|c| {
            let fit =
                fit_mle(&c.template, &c.mask, sample, &c.init, options).map_err(|source| {
                    ReplicateError::Fit {
                        model: c.name.clone(),
                        source,
                    }
                })?;
            let scores =
                loo_cv(&fit.spec(&c.template), sample).map_err(|source| ReplicateError::Cv {
                    model: c.name.clone(),
                    source,
                })?;
            Ok(ReplicateFit {
                estimates: fit.estimates,
                scores,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub competitors: Vec<Competitor>,
    /// Successful replicates in replicate order; entry k follows `competitors[k]`.
    pub replicates: Vec<(usize, Vec<ReplicateFit>)>,
    pub failures: Vec<(usize, String)>,
}

impl ScenarioOutcome {
    /// Mean scores of competitor `k` over successful replicates.
    pub fn mean_scores(&self, k: usize) -> CVScores {
        let m = self.replicates.len().max(1) as f64;
        let sum = |f: fn(&CVScores) -> f64| {
            self.replicates
                .iter()
                .map(|(_, r)| f(&r[k].scores))
                .sum::<f64>()
                / m
        };
        CVScores {
            mse: sum(|s| s.mse),
            mae: sum(|s| s.mae),
            lscore: sum(|s| s.lscore),
            crps: sum(|s| s.crps),
            n: self.spec.n_points,
        }
    }

    /// Estimates of `param` from competitor `k`, in replicate order.
    pub fn estimates(&self, k: usize, param: &str) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|(_, r)| r[k].estimates.get(param).copied())
            .collect()
    }
}

/// Runs every replicate of `spec`. Replicates are fitted in parallel and
/// merged in replicate order, so the outcome does not depend on scheduling.
pub fn run_scenario(
    spec: &ScenarioSpec,
    gc_deltas: &[f64],
    seed: u64,
    options: &FitOptions,
) -> Result<ScenarioOutcome, ScenarioError> {
    let mut competitors = vec![Competitor::hybrid(spec)];
    for &d in gc_deltas {
        competitors.push(Competitor::gen_cauchy(spec, d)?);
    }
    let samples = spec.simulate(seed)?;
    let results: Vec<_> = samples
        .par_iter()
        .enumerate()
        .map(|(r, s)| {
            let opts = FitOptions {
                seed: seed.wrapping_add(r as u64),
                ..options.clone()
            };
            (r, run_replicate(&competitors, s, &opts))
        })
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(fits) => replicates.push((r, fits)),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * spec.n_replicates as f64 {
        return Err(ScenarioError::TooManyFailures {
            label: spec.label.clone(),
            failed: failures.len(),
            total: spec.n_replicates,
        });
    }
    Ok(ScenarioOutcome {
        spec: spec.clone(),
        competitors,
        replicates,
        failures,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}
