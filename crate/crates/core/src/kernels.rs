//! Isotropic covariance families.
//!
//! The closed forms live here; [`crate::mixture_oracle`] evaluates the same
//! models from their scale-mixture representation by brute-force quadrature.
//!
//! A model is identified by a [`KernelSpec`] (family tag, flat parameter map,
//! ambient dimension) and evaluated through a [`Kernel`], which validates the
//! parameters once and precomputes every shape-dependent constant.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{
    ln_bessel_k, ln_gamma, reg_lower_gamma, reg_upper_gamma, LowerGeneralizedGamma,
    QuadratureSettings, RegularizedGamma, SpecialFunctionError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("parameter `{name}` is invalid: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("unknown parameter `{name}` for family {family}")]
    UnknownParameter { family: &'static str, name: String },
    #[error("hole-effect model is not positive definite in dimension {dim}: need 1 < eta < tau^(2/d), got tau={tau}, eta={eta}")]
    HoleEffectInvalid { tau: f64, eta: f64, dim: usize },
    #[error("kernel is not strictly positive at h={h}")]
    NonPositive { h: f64 },
    #[error("distance must be finite and nonnegative, got {0}")]
    InvalidDistance(f64),
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error(transparent)]
    Numeric(#[from] SpecialFunctionError),
}

type Result<T> = std::result::Result<T, KernelError>;

fn invalid(name: &str, reason: &str) -> KernelError {
    KernelError::InvalidParameter {
        name: name.to_string(),
        reason: reason.to_string(),
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(name, "must be positive and finite"))
    }
}

fn check_distance(h: f64) -> Result<f64> {
    if h >= 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(KernelError::InvalidDistance(h))
    }
}

/// Matérn shape: scale `alpha`, smoothness `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub alpha: f64,
    pub nu: f64,
}

/// Cauchy shape: `alpha` is a squared scale, `nu` the tail exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyParams {
    pub alpha: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCauchyParams {
    pub alpha: f64,
    pub nu: f64,
    pub delta: f64,
}

/// Hybrid Cauchy–Matérn: Cauchy mixing on [0, ξ₁), Matérn mixing on [ξ₂, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridCMParams {
    pub lambda1: CauchyParams,
    pub lambda2: MaternParams,
    pub omega1: f64,
    pub omega2: f64,
    pub xi1: f64,
    pub xi2: f64,
}

/// Hybrid hole-effect–Matérn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridHMParams {
    pub lambda1: MaternParams,
    pub lambda2: MaternParams,
    pub omega1: f64,
    pub omega2: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub tau: f64,
    pub eta: f64,
    pub dim: usize,
}

/// Five-parameter Cauchy–Matérn with shared weight and scale, split given in
/// distance units as `xi_tilde = alpha * sqrt(xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsimoniousCM {
    pub omega: f64,
    pub alpha: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub xi_tilde: f64,
}

impl MaternParams {
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        let p = Self { alpha, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("nu", self.nu)?;
        Ok(())
    }
}

impl CauchyParams {
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        let p = Self { alpha, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("nu", self.nu)?;
        Ok(())
    }

    /// Hurst parameter 1 − ν/2, meaningful for ν ∈ (0, 2).
    pub fn hurst(&self) -> f64 {
        1.0 - 0.5 * self.nu
    }
}

impl GenCauchyParams {
    pub fn new(alpha: f64, nu: f64, delta: f64) -> Result<Self> {
        let p = Self { alpha, nu, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("nu", self.nu)?;
        if !(self.delta > 0.0 && self.delta <= 2.0) {
            return Err(invalid("delta", "must lie in (0, 2]"));
        }
        Ok(())
    }
}

impl HybridCMParams {
    pub fn validate(&self) -> Result<()> {
        positive("alpha1", self.lambda1.alpha)?;
        positive("nu1", self.lambda1.nu)?;
        positive("alpha2", self.lambda2.alpha)?;
        positive("nu2", self.lambda2.nu)?;
        positive("omega1", self.omega1)?;
        positive("omega2", self.omega2)?;
        positive("xi1", self.xi1)?;
        positive("xi2", self.xi2)?;
        Ok(())
    }
}

impl HybridHMParams {
    pub fn validate(&self) -> Result<()> {
        positive("alpha1", self.lambda1.alpha)?;
        positive("nu1", self.lambda1.nu)?;
        positive("alpha2", self.lambda2.alpha)?;
        positive("nu2", self.lambda2.nu)?;
        positive("omega1", self.omega1)?;
        positive("omega2", self.omega2)?;
        positive("xi1", self.xi1)?;
        positive("xi2", self.xi2)?;
        positive("tau", self.tau)?;
        if !self.eta.is_finite() {
            return Err(invalid("eta", "must be finite"));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !hm_validity(self.tau, self.eta, self.dim) {
            return Err(KernelError::HoleEffectInvalid {
                tau: self.tau,
                eta: self.eta,
                dim: self.dim,
            });
        }
        Ok(())
    }
}

impl ParsimoniousCM {
    pub fn validate(&self) -> Result<()> {
        positive("omega", self.omega)?;
        positive("alpha", self.alpha)?;
        positive("nu1", self.nu1)?;
        positive("nu2", self.nu2)?;
        positive("xi_tilde", self.xi_tilde)?;
        Ok(())
    }

    /// The split point ξ = (ξ̃/α)².
    pub fn xi(&self) -> f64 {
        let r = self.xi_tilde / self.alpha;
        r * r
    }
}

/// ω₁=ω₂=ω, α₁=α₂=α, ξ₁=ξ₂=(ξ̃/α)².
pub fn expand_parsimonious(p: &ParsimoniousCM) -> HybridCMParams {
    let xi = p.xi();
    HybridCMParams {
        lambda1: CauchyParams {
            alpha: p.alpha,
            nu: p.nu1,
        },
        lambda2: MaternParams {
            alpha: p.alpha,
            nu: p.nu2,
        },
        omega1: p.omega,
        omega2: p.omega,
        xi1: xi,
        xi2: xi,
    }
}

/// Inverse of [`expand_parsimonious`]; `None` unless the duplicated fields agree.
pub fn contract_parsimonious(p: &HybridCMParams) -> Option<ParsimoniousCM> {
    let same = p.omega1 == p.omega2 && p.lambda1.alpha == p.lambda2.alpha && p.xi1 == p.xi2;
    same.then(|| ParsimoniousCM {
        omega: p.omega1,
        alpha: p.lambda1.alpha,
        nu1: p.lambda1.nu,
        nu2: p.lambda2.nu,
        xi_tilde: p.lambda1.alpha * p.xi1.sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Closed forms

/// Unit-variance Matérn with precomputed normalization.
#[derive(Debug, Clone, Copy)]
struct MaternCore {
    inv_alpha: f64,
    nu: f64,
    // ln(2^{1-ν}/Γ(ν))
    ln_norm: f64,
}

impl MaternCore {
    fn new(p: &MaternParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            inv_alpha: 1.0 / p.alpha,
            nu: p.nu,
            ln_norm: (1.0 - p.nu) * LN_2 - ln_gamma(p.nu)?,
        })
    }

    fn ln_eval(&self, h: f64) -> Result<f64> {
        if h == 0.0 {
            return Ok(0.0);
        }
        let x = h * self.inv_alpha;
        let v = self.ln_norm + self.nu * x.ln() + ln_bessel_k(self.nu, x)?;
        // the exact value never exceeds 1; rounding near h = 0 can push it over
        Ok(v.min(0.0))
    }

    fn eval(&self, h: f64) -> Result<f64> {
        Ok(self.ln_eval(h)?.exp())
    }
}

/// Matérn correlation 2^{1−ν}/Γ(ν) (h/α)^ν K_ν(h/α).
pub fn matern(h: f64, p: &MaternParams) -> Result<f64> {
    MaternCore::new(p)?.eval(check_distance(h)?)
}

/// Cauchy correlation (1 + h²/α)^{−ν/2}.
pub fn cauchy(h: f64, p: &CauchyParams) -> Result<f64> {
    p.validate()?;
    check_distance(h)?;
    Ok((1.0 + h * h / p.alpha).powf(-0.5 * p.nu))
}

/// Generalized Cauchy correlation (1 + h^δ/α)^{−ν/δ}.
pub fn gen_cauchy(h: f64, p: &GenCauchyParams) -> Result<f64> {
    p.validate()?;
    check_distance(h)?;
    Ok(gen_cauchy_unchecked(h, p))
}

fn gen_cauchy_unchecked(h: f64, p: &GenCauchyParams) -> f64 {
    let hd = if p.delta == 2.0 {
        h * h
    } else {
        h.powf(p.delta)
    };
    (1.0 + hd / p.alpha).powf(-p.nu / p.delta)
}

/// Gamma density with shape ν/2 and rate α; mixes Gaussians into the Cauchy model.
pub fn mixing_cauchy(u: f64, p: &CauchyParams) -> Result<f64> {
    p.validate()?;
    if !(u > 0.0) {
        return Err(invalid("u", "must be positive"));
    }
    let a = 0.5 * p.nu;
    Ok((a * p.alpha.ln() - ln_gamma(a)? + (a - 1.0) * u.ln() - p.alpha * u).exp())
}

/// Inverse-gamma density with shape ν and scale 1/(4α²); mixes Gaussians into the Matérn model.
pub fn mixing_matern(u: f64, p: &MaternParams) -> Result<f64> {
    p.validate()?;
    if !(u > 0.0) {
        return Err(invalid("u", "must be positive"));
    }
    let beta = 0.25 / (p.alpha * p.alpha);
    Ok((p.nu * beta.ln() - ln_gamma(p.nu)? - (p.nu + 1.0) * u.ln() - beta / u).exp())
}

/// Matérn mixture restricted to u ∈ [ξ, ∞), i.e. γ(ν; b; c)/Γ(ν) with
/// b = 1/(4ξα²), c = h²/(4α²).
#[derive(Debug, Clone)]
struct TruncatedMatern {
    quarter_inv_alpha_sq: f64,
    xi: f64,
    lower: LowerGeneralizedGamma,
    mass: f64,
}

impl TruncatedMatern {
    fn new(p: &MaternParams, xi: f64, settings: &QuadratureSettings) -> Result<Self> {
        p.validate()?;
        positive("xi", xi)?;
        let quarter_inv_alpha_sq = 0.25 / (p.alpha * p.alpha);
        let lower = LowerGeneralizedGamma::new(p.nu, quarter_inv_alpha_sq / xi, settings)?;
        let mass = lower.mass();
        Ok(Self {
            quarter_inv_alpha_sq,
            xi,
            lower,
            mass,
        })
    }

    /// Rigorous upper bound e^{−ξh²}·P(ν, b) on [`Self::eval`].
    fn bound(&self, h2: f64) -> f64 {
        (-self.xi * h2).exp() * self.mass
    }

    fn eval(&self, h2: f64) -> Result<f64> {
        if self.bound(h2) < f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        match self.lower.regularized(h2 * self.quarter_inv_alpha_sq) {
            Err(SpecialFunctionError::Underflow { .. }) => Ok(0.0),
            r => Ok(r?),
        }
    }
}

// A summand whose bound sits this far below the other one is invisible in f64.
const NEGLIGIBLE: f64 = 1e-17;

#[derive(Debug, Clone)]
struct HybridCMCore {
    omega1: f64,
    omega2: f64,
    alpha1: f64,
    xi1: f64,
    neg_half_nu1: f64,
    cauchy_mass: RegularizedGamma,
    matern: TruncatedMatern,
}

impl HybridCMCore {
    fn new(p: &HybridCMParams, settings: &QuadratureSettings) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            omega1: p.omega1,
            omega2: p.omega2,
            alpha1: p.lambda1.alpha,
            xi1: p.xi1,
            neg_half_nu1: -0.5 * p.lambda1.nu,
            cauchy_mass: RegularizedGamma::new(0.5 * p.lambda1.nu)?,
            matern: TruncatedMatern::new(&p.lambda2, p.xi2, settings)?,
        })
    }

    fn eval(&self, h: f64) -> Result<f64> {
        let h2 = h * h;
        let first = self.omega1
            * self.cauchy_mass.lower((h2 + self.alpha1) * self.xi1)
            * (1.0 + h2 / self.alpha1).powf(self.neg_half_nu1);
        if self.omega2 * self.matern.bound(h2) < NEGLIGIBLE * first {
            return Ok(first);
        }
        Ok(first + self.omega2 * self.matern.eval(h2)?)
    }
}

/// Hybrid Cauchy–Matérn covariance.
pub fn hybrid_cm(h: f64, p: &HybridCMParams) -> Result<f64> {
    HybridCMCore::new(p, &QuadratureSettings::default())?.eval(check_distance(h)?)
}

#[derive(Debug, Clone)]
struct HybridHMCore {
    omega1: f64,
    omega2: f64,
    tau: f64,
    eta: f64,
    sqrt_eta: f64,
    matern1: MaternCore,
    truncated1: TruncatedMatern,
    truncated2: TruncatedMatern,
}

impl HybridHMCore {
    fn new(p: &HybridHMParams, settings: &QuadratureSettings) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            omega1: p.omega1,
            omega2: p.omega2,
            tau: p.tau,
            eta: p.eta,
            sqrt_eta: p.eta.sqrt(),
            matern1: MaternCore::new(&p.lambda1)?,
            truncated1: TruncatedMatern::new(&p.lambda1, p.xi1, settings)?,
            truncated2: TruncatedMatern::new(&p.lambda2, p.xi2, settings)?,
        })
    }

    fn eval(&self, h: f64) -> Result<f64> {
        let h2 = h * h;
        // ∫_0^ξ₁ (τe^{−uηh²} − e^{−uh²}) g_M(u) du as full Matérn minus the [ξ₁, ∞) part
        let full = self.tau * self.matern1.eval(self.sqrt_eta * h)? - self.matern1.eval(h)?;
        let tail = self.tau * self.truncated1.eval(self.eta * h2)? - self.truncated1.eval(h2)?;
        let first = self.omega1 * (full - tail);
        Ok(first + self.omega2 * self.truncated2.eval(h2)?)
    }
}

/// Hybrid hole-effect–Matérn covariance. Refuses parameters outside
/// 1 < η < τ^{2/d}.
pub fn hybrid_hm(h: f64, p: &HybridHMParams) -> Result<f64> {
    HybridHMCore::new(p, &QuadratureSettings::default())?.eval(check_distance(h)?)
}

/// True iff τe^{−ηu h²} − e^{−u h²} is positive definite in ℝ^dim: 1 < η < τ^{2/dim}.
pub fn hm_validity(tau: f64, eta: f64, dim: usize) -> bool {
    dim >= 1 && tau > 0.0 && 1.0 < eta && eta < tau.powf(2.0 / dim as f64)
}

/// min over x ≥ 0 of τe^{−ηx} − e^{−x}: (τη)^{−1/(η−1)}(1−η)/η.
fn hole_depth(tau: f64, eta: f64) -> f64 {
    (tau * eta).powf(-1.0 / (eta - 1.0)) * (1.0 - eta) / eta
}

/// Lower bound on the hybrid hole-effect–Matérn covariance over all h ≥ 0:
/// ω₁(τη)^{−1/(η−1)}((1−η)/η)·Q(ν₁, 1/(4ξ₁α₁²)).
///
/// The last factor is the mass that the inverse-gamma mixing density puts on
/// [0, ξ₁); the bound is attained when every Gaussian in that range sits at
/// its own worst lag and the nonnegative second summand vanishes.
pub fn hm_lower_bound(p: &HybridHMParams) -> Result<f64> {
    p.validate()?;
    let b = 0.25 / (p.xi1 * p.lambda1.alpha * p.lambda1.alpha);
    Ok(p.omega1 * hole_depth(p.tau, p.eta) * reg_upper_gamma(p.lambda1.nu, b)?)
}

/// The same bound with the mass written as Q(ν₁, α₁/ξ₁), the form found in
/// the literature. It only bounds the kernel when α₁³ ≤ 1/4, where it is
/// looser than [`hm_lower_bound`].
pub fn hm_lower_bound_literature(p: &HybridHMParams) -> Result<f64> {
    p.validate()?;
    let b = p.lambda1.alpha / p.xi1;
    Ok(p.omega1 * hole_depth(p.tau, p.eta) * (1.0 - reg_lower_gamma(p.lambda1.nu, b)?))
}

/// Lag at which the Gaussian component with mixing variable `u` reaches
/// its minimum: h* = √(ln(τη)/(u(η−1))).
pub fn hm_minimizer(tau: f64, eta: f64, u: f64) -> f64 {
    ((tau * eta).ln() / (u * (eta - 1.0))).sqrt()
}

// ---------------------------------------------------------------------------
// Serializable model identity

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Matern,
    Cauchy,
    #[serde(rename = "gencauchy")]
    GenCauchy,
    HybridCm,
    HybridHm,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Matern => "matern",
            Family::Cauchy => "cauchy",
            Family::GenCauchy => "gencauchy",
            Family::HybridCm => "hybrid_cm",
            Family::HybridHm => "hybrid_hm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "matern" => Family::Matern,
            "cauchy" => Family::Cauchy,
            "gencauchy" => Family::GenCauchy,
            "hybrid_cm" => Family::HybridCm,
            "hybrid_hm" => Family::HybridHm,
            _ => return None,
        })
    }

    pub const ALL: [Family; 5] = [
        Family::Matern,
        Family::Cauchy,
        Family::GenCauchy,
        Family::HybridCm,
        Family::HybridHm,
    ];
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

const MATERN_NAMES: &[&str] = &["omega", "alpha", "nu"];
const GENCAUCHY_NAMES: &[&str] = &["omega", "alpha", "nu", "delta"];
const CM_FULL: &[&str] = &[
    "omega1", "omega2", "alpha1", "nu1", "alpha2", "nu2", "xi1", "xi2",
];
const CM_PARSIMONIOUS: &[&str] = &["omega", "alpha", "nu1", "nu2", "xi_tilde"];
const HM_FULL: &[&str] = &[
    "omega1", "omega2", "alpha1", "nu1", "alpha2", "nu2", "xi1", "xi2", "tau", "eta",
];
const HM_PARSIMONIOUS: &[&str] = &["omega", "alpha", "nu", "xi", "tau", "eta"];

/// A covariance model: family, flat parameter map and ambient dimension.
///
/// JSON form: `{"family": "hybrid_cm", "params": {"omega": 1, ...}, "dim": 2}`.
///
/// Hybrid Cauchy–Matérn accepts either the full parameter set
/// (`omega1, omega2, alpha1, nu1, alpha2, nu2, xi1, xi2`) or the parsimonious
/// one (`omega, alpha, nu1, nu2, xi_tilde`). Hybrid hole-effect–Matérn
/// likewise accepts the full set plus `tau, eta`, or `omega, alpha, nu, xi,
/// tau, eta`. The three base families take `alpha, nu` (and `delta` for
/// gencauchy) plus an optional variance `omega` defaulting to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    2
}

/// A validated model with typed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Matern { omega: f64, params: MaternParams },
    Cauchy { omega: f64, params: CauchyParams },
    GenCauchy { omega: f64, params: GenCauchyParams },
    HybridCm(HybridCMParams),
    HybridHm(HybridHMParams),
}

impl KernelSpec {
    pub fn new(family: Family, params: &[(&str, f64)], dim: usize) -> Self {
        Self {
            family,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            dim,
        }
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn matern(omega: f64, p: MaternParams, dim: usize) -> Self {
        Self::new(
            Family::Matern,
            &[("omega", omega), ("alpha", p.alpha), ("nu", p.nu)],
            dim,
        )
    }

    pub fn cauchy(omega: f64, p: CauchyParams, dim: usize) -> Self {
        Self::new(
            Family::Cauchy,
            &[("omega", omega), ("alpha", p.alpha), ("nu", p.nu)],
            dim,
        )
    }

    pub fn gen_cauchy(omega: f64, p: GenCauchyParams, dim: usize) -> Self {
        Self::new(
            Family::GenCauchy,
            &[
                ("omega", omega),
                ("alpha", p.alpha),
                ("nu", p.nu),
                ("delta", p.delta),
            ],
            dim,
        )
    }

    pub fn hybrid_cm(p: &HybridCMParams, dim: usize) -> Self {
        Self::new(
            Family::HybridCm,
            &[
                ("omega1", p.omega1),
                ("omega2", p.omega2),
                ("alpha1", p.lambda1.alpha),
                ("nu1", p.lambda1.nu),
                ("alpha2", p.lambda2.alpha),
                ("nu2", p.lambda2.nu),
                ("xi1", p.xi1),
                ("xi2", p.xi2),
            ],
            dim,
        )
    }

    pub fn parsimonious_cm(p: &ParsimoniousCM, dim: usize) -> Self {
        Self::new(
            Family::HybridCm,
            &[
                ("omega", p.omega),
                ("alpha", p.alpha),
                ("nu1", p.nu1),
                ("nu2", p.nu2),
                ("xi_tilde", p.xi_tilde),
            ],
            dim,
        )
    }

    pub fn hybrid_hm(p: &HybridHMParams) -> Self {
        Self::new(
            Family::HybridHm,
            &[
                ("omega1", p.omega1),
                ("omega2", p.omega2),
                ("alpha1", p.lambda1.alpha),
                ("nu1", p.lambda1.nu),
                ("alpha2", p.lambda2.alpha),
                ("nu2", p.lambda2.nu),
                ("xi1", p.xi1),
                ("xi2", p.xi2),
                ("tau", p.tau),
                ("eta", p.eta),
            ],
            p.dim,
        )
    }

    /// True when a hybrid spec uses the reduced parameter set.
    pub fn is_parsimonious(&self) -> bool {
        match self.family {
            Family::HybridCm => self.params.contains_key("xi_tilde"),
            Family::HybridHm => self.params.contains_key("xi"),
            _ => false,
        }
    }

    /// Canonical parameter names for this spec's family and layout.
    pub fn param_names(&self) -> &'static [&'static str] {
        match (self.family, self.is_parsimonious()) {
            (Family::Matern | Family::Cauchy, _) => MATERN_NAMES,
            (Family::GenCauchy, _) => GENCAUCHY_NAMES,
            (Family::HybridCm, false) => CM_FULL,
            (Family::HybridCm, true) => CM_PARSIMONIOUS,
            (Family::HybridHm, false) => HM_FULL,
            (Family::HybridHm, true) => HM_PARSIMONIOUS,
        }
    }

    /// Copy with `omega = 1` filled in for base families that omit it.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        if matches!(
            self.family,
            Family::Matern | Family::Cauchy | Family::GenCauchy
        ) {
            out.params.entry("omega".to_string()).or_insert(1.0);
        }
        out
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| KernelError::MissingParameter(name.to_string()))
    }

    /// Checks names and values and builds the typed model.
    pub fn model(&self) -> Result<Model> {
        let spec = self.normalized();
        let names = spec.param_names();
        for key in spec.params.keys() {
            if !names.contains(&key.as_str()) {
                return Err(KernelError::UnknownParameter {
                    family: self.family.as_str(),
                    name: key.clone(),
                });
            }
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        let g = |name: &str| spec.get(name);
        let model = match (self.family, spec.is_parsimonious()) {
            (Family::Matern, _) => Model::Matern {
                omega: positive("omega", g("omega")?)?,
                params: MaternParams::new(g("alpha")?, g("nu")?)?,
            },
            (Family::Cauchy, _) => Model::Cauchy {
                omega: positive("omega", g("omega")?)?,
                params: CauchyParams::new(g("alpha")?, g("nu")?)?,
            },
            (Family::GenCauchy, _) => Model::GenCauchy {
                omega: positive("omega", g("omega")?)?,
                params: GenCauchyParams::new(g("alpha")?, g("nu")?, g("delta")?)?,
            },
            (Family::HybridCm, true) => {
                let p = ParsimoniousCM {
                    omega: g("omega")?,
                    alpha: g("alpha")?,
                    nu1: g("nu1")?,
                    nu2: g("nu2")?,
                    xi_tilde: g("xi_tilde")?,
                };
                p.validate()?;
                Model::HybridCm(expand_parsimonious(&p))
            }
            (Family::HybridCm, false) => {
                let p = HybridCMParams {
                    lambda1: CauchyParams {
                        alpha: g("alpha1")?,
                        nu: g("nu1")?,
                    },
                    lambda2: MaternParams {
                        alpha: g("alpha2")?,
                        nu: g("nu2")?,
                    },
                    omega1: g("omega1")?,
                    omega2: g("omega2")?,
                    xi1: g("xi1")?,
                    xi2: g("xi2")?,
                };
                p.validate()?;
                Model::HybridCm(p)
            }
            (Family::HybridHm, parsimonious) => {
                let p = if parsimonious {
                    let m = MaternParams {
                        alpha: g("alpha")?,
                        nu: g("nu")?,
                    };
                    HybridHMParams {
                        lambda1: m,
                        lambda2: m,
                        omega1: g("omega")?,
                        omega2: g("omega")?,
                        xi1: g("xi")?,
                        xi2: g("xi")?,
                        tau: g("tau")?,
                        eta: g("eta")?,
                        dim: self.dim,
                    }
                } else {
                    HybridHMParams {
                        lambda1: MaternParams {
                            alpha: g("alpha1")?,
                            nu: g("nu1")?,
                        },
                        lambda2: MaternParams {
                            alpha: g("alpha2")?,
                            nu: g("nu2")?,
                        },
                        omega1: g("omega1")?,
                        omega2: g("omega2")?,
                        xi1: g("xi1")?,
                        xi2: g("xi2")?,
                        tau: g("tau")?,
                        eta: g("eta")?,
                        dim: self.dim,
                    }
                };
                p.validate()?;
                Model::HybridHm(p)
            }
        };
        Ok(model)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Anything that maps a lag to a covariance.
pub trait Covariance {
    fn covariance(&self, h: f64) -> Result<f64>;

    /// φ(0).
    fn variance(&self) -> Result<f64> {
        self.covariance(0.0)
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Matern(MaternCore),
    Cauchy { alpha: f64, neg_half_nu: f64 },
    GenCauchy(GenCauchyParams),
    HybridCm(HybridCMCore),
    HybridHm(HybridHMCore),
}

/// A validated, ready-to-evaluate covariance function.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    model: Model,
    scale: f64,
    evaluator: Evaluator,
}

impl Kernel {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        Self::with_settings(spec, &QuadratureSettings::default())
    }

    pub fn with_settings(spec: &KernelSpec, settings: &QuadratureSettings) -> Result<Self> {
        let model = spec.model()?;
        let (scale, evaluator) = match model {
            Model::Matern { omega, params } => {
                (omega, Evaluator::Matern(MaternCore::new(&params)?))
            }
            Model::Cauchy { omega, params } => (
                omega,
                Evaluator::Cauchy {
                    alpha: params.alpha,
                    neg_half_nu: -0.5 * params.nu,
                },
            ),
            Model::GenCauchy { omega, params } => (omega, Evaluator::GenCauchy(params)),
            Model::HybridCm(p) => (1.0, Evaluator::HybridCm(HybridCMCore::new(&p, settings)?)),
            Model::HybridHm(p) => (1.0, Evaluator::HybridHm(HybridHMCore::new(&p, settings)?)),
        };
        Ok(Self {
            spec: spec.normalized(),
            model,
            scale,
            evaluator,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// ln φ(h). Evaluated in log space for the Matérn family so that it stays
    /// finite far beyond the range where φ itself underflows.
    pub fn ln_covariance(&self, h: f64) -> Result<f64> {
        let h = check_distance(h)?;
        if let Evaluator::Matern(m) = &self.evaluator {
            return Ok(self.scale.ln() + m.ln_eval(h)?);
        }
        let v = self.covariance(h)?;
        if v > 0.0 {
            Ok(v.ln())
        } else {
            Err(KernelError::NonPositive { h })
        }
    }
}

impl Covariance for Kernel {
    fn covariance(&self, h: f64) -> Result<f64> {
        let h = check_distance(h)?;
        let unit = match &self.evaluator {
            Evaluator::Matern(m) => m.eval(h)?,
            Evaluator::Cauchy { alpha, neg_half_nu } => (1.0 + h * h / alpha).powf(*neg_half_nu),
            Evaluator::GenCauchy(p) => gen_cauchy_unchecked(h, p),
            Evaluator::HybridCm(c) => c.eval(h)?,
            Evaluator::HybridHm(c) => c.eval(h)?,
        };
        Ok(self.scale * unit)
    }
}

impl<T: Covariance + ?Sized> Covariance for &T {
    fn covariance(&self, h: f64) -> Result<f64> {
        (**self).covariance(h)
    }

    fn variance(&self) -> Result<f64> {
        (**self).variance()
    }
}

/// Number of log-spaced lags used by [`tail_exponent`].
pub const TAIL_GRID: usize = 50;

/// Least-squares slope of ln φ against ln h over 50 log-spaced lags in
/// [h_lo, h_hi].
pub fn tail_exponent(spec: &KernelSpec, h_lo: f64, h_hi: f64) -> Result<f64> {
    if !(h_lo > 0.0 && h_hi > h_lo && h_hi.is_finite()) {
        return Err(KernelError::InvalidRange { lo: h_lo, hi: h_hi });
    }
    let kernel = Kernel::new(spec)?;
    let (l0, l1) = (h_lo.ln(), h_hi.ln());
    let mut xs = Vec::with_capacity(TAIL_GRID);
    let mut ys = Vec::with_capacity(TAIL_GRID);
    for i in 0..TAIL_GRID {
        let x = l0 + (l1 - l0) * i as f64 / (TAIL_GRID - 1) as f64;
        xs.push(x);
        ys.push(kernel.ln_covariance(x.exp())?);
    }
    let n = TAIL_GRID as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cm_curve(nu2: f64, xi: f64) -> HybridCMParams {
        expand_parsimonious(&ParsimoniousCM {
            omega: 0.5,
            alpha: 0.125,
            nu1: 0.75,
            nu2,
            xi_tilde: 0.125 * xi.sqrt(),
        })
    }

    fn hm_curve(nu: f64, xi: f64) -> HybridHMParams {
        let m = MaternParams { alpha: 0.125, nu };
        HybridHMParams {
            lambda1: m,
            lambda2: m,
            omega1: 0.5,
            omega2: 0.5,
            xi1: xi,
            xi2: xi,
            tau: 2.0,
            eta: 3.5,
            dim: 1,
        }
    }

    #[test]
    fn matern_exponential_case() {
        let p = MaternParams::new(0.125, 0.5).unwrap();
        for i in 0..=200 {
            let h = i as f64 * 0.1;
            assert!((matern(h, &p).unwrap() - (-8.0 * h).exp()).abs() < 1e-14);
        }
        assert_eq!(matern(0.0, &p).unwrap(), 1.0);
    }

    #[test]
    fn matern_oracle_value() {
        let p = MaternParams::new(1.0, 0.75).unwrap();
        assert_relative_eq!(
            matern(1.0, &p).unwrap(),
            0.500_534_761_845_784_571_12,
            max_relative = 1e-13
        );
    }

    #[test]
    fn cauchy_values() {
        let p = CauchyParams::new(0.3, 1.7).unwrap();
        assert_relative_eq!(
            cauchy(0.3f64.sqrt(), &p).unwrap(),
            2f64.powf(-0.85),
            max_relative = 1e-15
        );
        let g = GenCauchyParams::new(0.3, 1.7, 2.0).unwrap();
        for h in [0.0, 0.5, 2.0] {
            assert_eq!(gen_cauchy(h, &g).unwrap(), cauchy(h, &p).unwrap());
        }
        assert!(GenCauchyParams::new(1.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn mixing_densities() {
        let c = CauchyParams::new(1.0, 2.0).unwrap();
        assert_relative_eq!(
            mixing_cauchy(1e-300, &c).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            mixing_cauchy(2.0, &c).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-13
        );
        let m = MaternParams::new(0.5, 1.0).unwrap();
        // shape 1, scale 1: u^{-2} e^{-1/u}
        assert_relative_eq!(
            mixing_matern(2.0, &m).unwrap(),
            0.25 * (-0.5f64).exp(),
            max_relative = 1e-13
        );
        assert!(mixing_matern(0.0, &m).is_err());
    }

    #[test]
    fn parsimonious_round_trip() {
        let p = ParsimoniousCM {
            omega: 1.0,
            alpha: 0.125,
            nu1: 0.75,
            nu2: 0.5,
            xi_tilde: 0.125 * 40f64.sqrt(),
        };
        let full = expand_parsimonious(&p);
        assert_relative_eq!(full.xi1, 40.0, max_relative = 1e-15);
        let back = contract_parsimonious(&full).unwrap();
        assert_relative_eq!(back.xi_tilde, p.xi_tilde, max_relative = 1e-15);
        assert_eq!(back.omega, p.omega);
        let unit = ParsimoniousCM {
            xi_tilde: p.alpha,
            ..p
        };
        assert_eq!(unit.xi(), 1.0);
    }

    #[test]
    fn hybrid_cm_at_origin() {
        let p = expand_parsimonious(&ParsimoniousCM {
            omega: 1.0,
            alpha: 0.125,
            nu1: 0.75,
            nu2: 0.5,
            xi_tilde: 0.125 * 40f64.sqrt(),
        });
        let expect =
            reg_lower_gamma(0.375, 5.0).unwrap() + 1.0 - reg_upper_gamma(0.5, 0.4).unwrap();
        assert_relative_eq!(hybrid_cm(0.0, &p).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(
            hybrid_cm(0.0, &p).unwrap(),
            1.627_968_226_163_584_575_3,
            max_relative = 1e-13
        );
    }

    // 40-digit values of the defining mixture integrals, see tests/data/oracle_values.py
    #[test]
    fn hybrid_cm_reference_values() {
        let hs = [0.0, 0.1, 0.5, 1.0, 3.0];
        let table: [(f64, f64, [f64; 5]); 4] = [
            (
                0.5,
                1.0,
                [
                    0.749_417_191_479_058_22,
                    0.473_428_903_142_829_62,
                    0.243_310_384_760_814_48,
                    0.199_150_807_386_282_05,
                    0.100_050_489_167_633_98,
                ],
            ),
            (
                0.5,
                40.0,
                [
                    0.813_984_113_081_792_26,
                    0.556_843_940_201_899_18,
                    0.331_169_375_249_824_94,
                    0.219_345_668_825_415_39,
                    0.100_051_575_495_932_94,
                ],
            ),
            (
                1.5,
                10.0,
                [
                    0.779_916_266_278_602_39,
                    0.687_320_812_622_540_01,
                    0.335_401_980_811_931_35,
                    0.219_346_373_553_736_91,
                    0.100_051_575_495_932_95,
                ],
            ),
            (
                1.5,
                100.0,
                [
                    0.521_887_762_841_706_30,
                    0.489_819_687_027_284_62,
                    0.331_168_891_070_278_61,
                    0.219_345_668_825_415_37,
                    0.100_051_575_495_932_92,
                ],
            ),
        ];
        for (nu2, xi, vals) in table {
            let p = cm_curve(nu2, xi);
            for (h, v) in hs.iter().zip(vals) {
                let got = hybrid_cm(*h, &p).unwrap();
                assert!(
                    (got - v).abs() < 1e-12,
                    "nu2={nu2} xi={xi} h={h}: {got} vs {v}"
                );
            }
        }
    }

    #[test]
    fn hybrid_hm_reference_values() {
        let hs = [0.1, 0.5, 1.0, 3.0];
        let table: [(f64, f64, [f64; 4]); 3] = [
            (
                0.5,
                1.0,
                [
                    0.224_664_481_701_865_50,
                    0.009_157_814_018_931_786_5,
                    1.677_258_897_895_814e-4,
                    1.535_241_506_365_766_8e-11,
                ],
            ),
            (
                0.5,
                40.0,
                [
                    0.115_985_008_445_563_34,
                    -0.008_594_445_821_531_159_4,
                    -1.674_150_312_968_180_7e-4,
                    -1.887_567_268_975_624_3e-11,
                ],
            ),
            (
                1.5,
                100.0,
                [
                    0.162_298_016_513_697_88,
                    -0.041_018_164_752_768_424,
                    -0.001_504_531_857_585_722_5,
                    -4.718_918_165_826_493_5e-10,
                ],
            ),
        ];
        for (nu, xi, vals) in table {
            let p = hm_curve(nu, xi);
            assert_relative_eq!(hybrid_hm(0.0, &p).unwrap(), 0.5, max_relative = 1e-14);
            for (h, v) in hs.iter().zip(vals) {
                let got = hybrid_hm(*h, &p).unwrap();
                assert!(
                    (got - v).abs() < 1e-12,
                    "nu={nu} xi={xi} h={h}: {got} vs {v}"
                );
            }
        }
    }

    #[test]
    fn hybrid_hm_origin_first_summand() {
        let mut p = hm_curve(0.5, 40.0);
        p.omega2 = 1e-300;
        let expect = 0.5 * (p.tau - 1.0) * reg_upper_gamma(0.5, 0.25 / (40.0 / 64.0)).unwrap();
        assert_relative_eq!(hybrid_hm(0.0, &p).unwrap(), expect, max_relative = 1e-13);
    }

    #[test]
    fn hole_effect_validity() {
        assert!(hm_validity(2.0, 3.5, 1));
        assert!(!hm_validity(2.0, 3.5, 2));
        assert!(hm_validity(8.0, 3.9, 3));
        assert!(!hm_validity(2.0, 1.0, 1));
        let mut p = hm_curve(0.5, 40.0);
        p.eta = 4.5;
        assert!(matches!(
            hybrid_hm(0.3, &p),
            Err(KernelError::HoleEffectInvalid { .. })
        ));
    }

    #[test]
    fn lower_bound_limits_and_grid() {
        let mut p = hm_curve(0.5, 40.0);
        let bound = hm_lower_bound(&p).unwrap();
        let min = (0..=5000)
            .map(|i| hybrid_hm(i as f64 * 0.01, &p).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min < 0.0 && min >= bound, "min {min} bound {bound}");
        assert!(hm_lower_bound_literature(&p).unwrap() <= bound);
        p.xi1 = 1e-12;
        assert!(hm_lower_bound(&p).unwrap().abs() < 1e-300);
        p.xi1 = 1e300;
        let depth = 0.5 * 7f64.powf(-0.4) * (-2.5 / 3.5);
        assert_relative_eq!(hm_lower_bound(&p).unwrap(), depth, max_relative = 1e-12);
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"family":"hybrid_cm","params":{"omega":1,"alpha":0.125,"nu1":0.75,"nu2":0.5,"xi_tilde":0.79},"dim":2}"#;
        let spec = KernelSpec::from_json(json).unwrap();
        assert!(spec.is_parsimonious());
        assert_eq!(KernelSpec::from_json(&spec.to_json()).unwrap(), spec);
        assert!(matches!(spec.model().unwrap(), Model::HybridCm(_)));
        let bad = spec.clone().with_param("zeta", 1.0);
        assert!(matches!(
            bad.model(),
            Err(KernelError::UnknownParameter { .. })
        ));
        let m =
            KernelSpec::from_json(r#"{"family":"matern","params":{"alpha":1,"nu":0.5}}"#).unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(Kernel::new(&m).unwrap().variance().unwrap(), 1.0);
        assert!(KernelSpec::from_json(r#"{"family":"spherical","params":{}}"#).is_err());
    }

    #[test]
    fn kernel_matches_free_functions() {
        let p = cm_curve(1.5, 40.0);
        let k = Kernel::new(&KernelSpec::hybrid_cm(&p, 2)).unwrap();
        for h in [0.0, 0.2, 1.3, 7.0] {
            assert_eq!(k.covariance(h).unwrap(), hybrid_cm(h, &p).unwrap());
        }
        let spec = KernelSpec::gen_cauchy(2.0, GenCauchyParams::new(0.5, 0.75, 1.0).unwrap(), 2);
        let k = Kernel::new(&spec).unwrap();
        assert_relative_eq!(
            k.covariance(1.0).unwrap(),
            2.0 * 3f64.powf(-0.75),
            max_relative = 1e-15
        );
    }

    #[test]
    fn tail_exponents() {
        let cauchy = KernelSpec::cauchy(1.0, CauchyParams::new(0.125, 0.75).unwrap(), 2);
        assert!((tail_exponent(&cauchy, 1e2, 1e4).unwrap() + 0.75).abs() < 0.02);
        let hybrid = KernelSpec::parsimonious_cm(
            &ParsimoniousCM {
                omega: 1.0,
                alpha: 0.125,
                nu1: 0.75,
                nu2: 0.5,
                xi_tilde: 0.125 * 40f64.sqrt(),
            },
            2,
        );
        assert!((tail_exponent(&hybrid, 1e2, 1e4).unwrap() + 0.75).abs() < 0.05);
        let matern = KernelSpec::matern(1.0, MaternParams::new(0.125, 0.5).unwrap(), 2);
        assert!(tail_exponent(&matern, 1e2, 1e4).unwrap() < -10.0);
        let hm = KernelSpec::hybrid_hm(&hm_curve(0.5, 40.0));
        assert!(matches!(
            tail_exponent(&hm, 0.1, 10.0),
            Err(KernelError::NonPositive { .. })
        ));
        assert!(tail_exponent(&cauchy, 2.0, 1.0).is_err());
    }
}
