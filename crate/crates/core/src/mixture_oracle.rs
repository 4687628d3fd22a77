//! Brute-force evaluation of piecewise scale mixtures
//! Σ_i ω_i ∫_{[u_lo, u_hi)} φ_i(h; u) g_i(u) du.
//!
//! This is the reference every closed form in [`crate::kernels`] is checked
//! against. It is slow on purpose and shares no code with the closed forms
//! beyond the mixing densities themselves.

use std::fmt;
use std::sync::Arc;

use crate::kernels::{
    mixing_cauchy, mixing_matern, CauchyParams, Covariance, HybridCMParams, HybridHMParams,
    KernelError, MaternParams,
};
use crate::quadrature::{
    exp_sinh, integrate, integrate_to_infinity, tanh_sinh, QuadratureSettings,
};

type Result<T> = std::result::Result<T, KernelError>;

/// Density g(u) of the mixing variable.
#[derive(Clone)]
pub enum MixingDensity {
    /// Gamma density behind the Cauchy model.
    Cauchy(CauchyParams),
    /// Inverse-gamma density behind the Matérn model.
    Matern(MaternParams),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl MixingDensity {
    pub fn density(&self, u: f64) -> f64 {
        if !(u > 0.0) || u.is_infinite() {
            return 0.0;
        }
        match self {
            MixingDensity::Cauchy(p) => mixing_cauchy(u, p).unwrap_or(f64::NAN),
            MixingDensity::Matern(p) => mixing_matern(u, p).unwrap_or(f64::NAN),
            MixingDensity::Custom(g) => g(u),
        }
    }
}

impl fmt::Debug for MixingDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixingDensity::Cauchy(p) => f.debug_tuple("Cauchy").field(p).finish(),
            MixingDensity::Matern(p) => f.debug_tuple("Matern").field(p).finish(),
            MixingDensity::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// The kernel φ(h; u) that is mixed over u.
#[derive(Clone, Default)]
pub enum BaseKernel {
    /// e^{−u h²}
    #[default]
    Gaussian,
    /// τ e^{−uηh²} − e^{−uh²}
    HoleEffect {
        tau: f64,
        eta: f64,
    },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl BaseKernel {
    pub fn eval(&self, h: f64, u: f64) -> f64 {
        let h2 = h * h;
        match self {
            BaseKernel::Gaussian => (-u * h2).exp(),
            BaseKernel::HoleEffect { tau, eta } => tau * (-u * eta * h2).exp() - (-u * h2).exp(),
            BaseKernel::Custom(phi) => phi(h, u),
        }
    }
}

impl fmt::Debug for BaseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseKernel::Gaussian => f.write_str("Gaussian"),
            BaseKernel::HoleEffect { tau, eta } => f
                .debug_struct("HoleEffect")
                .field("tau", tau)
                .field("eta", eta)
                .finish(),
            BaseKernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// One piece ω ∫_{u_lo}^{u_hi} φ(h; u) g(u) du of a mixture.
#[derive(Debug, Clone)]
pub struct MixtureSegment {
    pub u_lo: f64,
    pub u_hi: f64,
    pub weight: f64,
    pub mixing: MixingDensity,
    pub base_kernel: BaseKernel,
}

impl MixtureSegment {
    /// Segment with the Gaussian base kernel.
    pub fn new(u_lo: f64, u_hi: f64, weight: f64, mixing: MixingDensity) -> Result<Self> {
        let s = Self {
            u_lo,
            u_hi,
            weight,
            mixing,
            base_kernel: BaseKernel::Gaussian,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_base(mut self, base_kernel: BaseKernel) -> Self {
        self.base_kernel = base_kernel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| KernelError::InvalidParameter {
            name: "segment".to_string(),
            reason: reason.to_string(),
        };
        if !(self.u_lo >= 0.0) || self.u_lo.is_infinite() {
            return Err(bad("u_lo must be finite and nonnegative"));
        }
        if !(self.u_hi > self.u_lo) {
            return Err(bad("u_hi must exceed u_lo"));
        }
        if !(self.weight > 0.0) || self.weight.is_infinite() {
            return Err(bad("weight must be positive and finite"));
        }
        Ok(())
    }
}

/// Which independent quadrature family evaluates the segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleScheme {
    /// Adaptive Gauss–Kronrod bisection, unbounded tail mapped to [0, 1).
    #[default]
    GaussKronrod,
    /// Tanh–sinh pieces, exp–sinh for the unbounded tail.
    DoubleExponential,
}

/// Mixture value at lag `h` with the default Gauss–Kronrod scheme.
pub fn eval_mixture(
    segments: &[MixtureSegment],
    h: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    eval_mixture_with(segments, h, settings, OracleScheme::GaussKronrod)
}

pub fn eval_mixture_with(
    segments: &[MixtureSegment],
    h: f64,
    settings: &QuadratureSettings,
    scheme: OracleScheme,
) -> Result<f64> {
    if !(h >= 0.0) || h.is_infinite() {
        return Err(KernelError::InvalidDistance(h));
    }
    let mut total = 0.0;
    for seg in segments {
        seg.validate()?;
        let f = |u: f64| seg.base_kernel.eval(h, u) * seg.mixing.density(u);
        let value = match scheme {
            OracleScheme::GaussKronrod => gauss_kronrod_segment(&f, seg, settings)?,
            OracleScheme::DoubleExponential => double_exponential_segment(&f, seg, settings)?,
        };
        total += seg.weight * value;
    }
    Ok(total)
}

fn quad_err(e: crate::quadrature::QuadratureError) -> KernelError {
    KernelError::Numeric(e.into())
}

/// Segment boundaries plus every decade 1e-6, ..., 1e7 strictly inside, so
/// that no panel starts out many orders of magnitude wider than the features
/// of the integrand.
fn decade_cuts(seg: &MixtureSegment) -> Vec<f64> {
    let mut cuts = vec![seg.u_lo];
    let mut edge = 1e-6;
    while edge < 1e8 {
        if edge > seg.u_lo && edge < seg.u_hi {
            cuts.push(edge);
        }
        edge *= 10.0;
    }
    cuts
}

fn gauss_kronrod_segment(
    f: &dyn Fn(f64) -> f64,
    seg: &MixtureSegment,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let cuts = decade_cuts(seg);
    let last = *cuts.last().expect("cuts start with u_lo");
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let piece = if w[0] == 0.0 {
            // u = w₁·e^{−v} turns an algebraic singularity at 0 into an exponential tail
            integrate_to_infinity(
                |v| {
                    let u = w[1] * (-v).exp();
                    f(u) * u
                },
                0.0,
                settings,
            )
        } else {
            integrate(f, w[0], w[1], settings)
        };
        total += piece.map_err(quad_err)?.value;
    }
    let tail = if seg.u_hi.is_infinite() {
        // u = last·e^v turns algebraic tails into exponential ones
        integrate_to_infinity(
            |v| {
                let u = last * v.exp();
                if u.is_finite() {
                    f(u) * u
                } else {
                    0.0
                }
            },
            0.0,
            settings,
        )
    } else {
        integrate(f, last, seg.u_hi, settings)
    };
    Ok(total + tail.map_err(quad_err)?.value)
}

fn double_exponential_segment(
    f: &dyn Fn(f64) -> f64,
    seg: &MixtureSegment,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let cuts = decade_cuts(seg);
    let last = *cuts.last().expect("cuts start with u_lo");
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += tanh_sinh(f, w[0], w[1], settings).map_err(quad_err)?.value;
    }
    let tail = if seg.u_hi.is_infinite() {
        exp_sinh(f, last, settings)
    } else {
        tanh_sinh(f, last, seg.u_hi, settings)
    };
    Ok(total + tail.map_err(quad_err)?.value)
}

/// ω₁ g_C on [0, ξ₁) plus ω₂ g_M on [ξ₂, ∞). Overlapping ranges (ξ₁ > ξ₂)
/// superpose both families there.
pub fn hybrid_cm_segments(p: &HybridCMParams) -> Result<Vec<MixtureSegment>> {
    p.validate()?;
    Ok(vec![
        MixtureSegment::new(0.0, p.xi1, p.omega1, MixingDensity::Cauchy(p.lambda1))?,
        MixtureSegment::new(
            p.xi2,
            f64::INFINITY,
            p.omega2,
            MixingDensity::Matern(p.lambda2),
        )?,
    ])
}

/// Hole-effect base kernel against g_M on [0, ξ₁), Gaussian against g_M on [ξ₂, ∞).
pub fn hybrid_hm_segments(p: &HybridHMParams) -> Result<Vec<MixtureSegment>> {
    p.validate()?;
    Ok(vec![
        MixtureSegment::new(0.0, p.xi1, p.omega1, MixingDensity::Matern(p.lambda1))?.with_base(
            BaseKernel::HoleEffect {
                tau: p.tau,
                eta: p.eta,
            },
        ),
        MixtureSegment::new(
            p.xi2,
            f64::INFINITY,
            p.omega2,
            MixingDensity::Matern(p.lambda2),
        )?,
    ])
}

/// Full-range Cauchy mixture; reproduces the Cauchy model.
pub fn cauchy_segments(p: &CauchyParams) -> Result<Vec<MixtureSegment>> {
    p.validate()?;
    Ok(vec![MixtureSegment::new(
        0.0,
        f64::INFINITY,
        1.0,
        MixingDensity::Cauchy(*p),
    )?])
}

/// Full-range Matérn mixture; reproduces the Matérn model.
pub fn matern_segments(p: &MaternParams) -> Result<Vec<MixtureSegment>> {
    p.validate()?;
    Ok(vec![MixtureSegment::new(
        0.0,
        f64::INFINITY,
        1.0,
        MixingDensity::Matern(*p),
    )?])
}

/// Hybrid Cauchy–Matérn with ξ₁ ≥ ξ₂: both families contribute on [ξ₂, ξ₁).
pub fn superposition_mixture(
    p: &HybridCMParams,
    h: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    if p.xi1 < p.xi2 {
        return Err(KernelError::InvalidParameter {
            name: "xi1".to_string(),
            reason: "superposition needs xi1 >= xi2".to_string(),
        });
    }
    eval_mixture(&hybrid_cm_segments(p)?, h, settings)
}

/// A covariance defined by numerical mixing, usable anywhere a closed-form
/// kernel is.
#[derive(Debug, Clone)]
pub struct MixtureKernel {
    pub segments: Vec<MixtureSegment>,
    pub settings: QuadratureSettings,
    pub scheme: OracleScheme,
}

impl MixtureKernel {
    pub fn new(segments: Vec<MixtureSegment>) -> Result<Self> {
        for s in &segments {
            s.validate()?;
        }
        Ok(Self {
            segments,
            settings: QuadratureSettings::default(),
            scheme: OracleScheme::default(),
        })
    }
}

impl Covariance for MixtureKernel {
    fn covariance(&self, h: f64) -> Result<f64> {
        eval_mixture_with(&self.segments, h, &self.settings, self.scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{cauchy, expand_parsimonious, hybrid_cm, matern, ParsimoniousCM};
    use crate::specfun::reg_lower_gamma;

    fn settings() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    #[test]
    fn reproduces_base_families() {
        let c = CauchyParams::new(0.125, 0.75).unwrap();
        let m = MaternParams::new(1.0, 0.75).unwrap();
        for h in [0.0, 1.0, 4.0] {
            for scheme in [OracleScheme::GaussKronrod, OracleScheme::DoubleExponential] {
                let v = eval_mixture_with(&cauchy_segments(&c).unwrap(), h, &settings(), scheme)
                    .unwrap();
                assert!(
                    (v - cauchy(h, &c).unwrap()).abs() < 1e-9,
                    "cauchy {h} {scheme:?}"
                );
                let v = eval_mixture_with(&matern_segments(&m).unwrap(), h, &settings(), scheme)
                    .unwrap();
                assert!(
                    (v - matern(h, &m).unwrap()).abs() < 1e-9,
                    "matern {h} {scheme:?}"
                );
            }
        }
        let v = eval_mixture(&cauchy_segments(&c).unwrap(), 1.0, &settings()).unwrap();
        assert!((v - 0.438_691_337_650_830_807_77).abs() < 1e-10);
    }

    #[test]
    fn gamma_cdf_mass() {
        let c = CauchyParams::new(0.125, 0.75).unwrap();
        let seg = vec![MixtureSegment::new(0.0, 40.0, 1.0, MixingDensity::Cauchy(c)).unwrap()];
        let v = eval_mixture(&seg, 0.0, &settings()).unwrap();
        assert!((v - reg_lower_gamma(0.375, 5.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn weights_are_linear() {
        let c = CauchyParams::new(0.5, 1.0).unwrap();
        let one = MixtureSegment::new(0.0, 3.0, 0.7, MixingDensity::Cauchy(c)).unwrap();
        let two = MixtureSegment {
            weight: 1.4,
            ..one.clone()
        };
        let a = eval_mixture(&[one], 0.8, &settings()).unwrap();
        let b = eval_mixture(&[two], 0.8, &settings()).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn agrees_with_closed_hybrid() {
        let p = expand_parsimonious(&ParsimoniousCM {
            omega: 0.5,
            alpha: 0.125,
            nu1: 0.75,
            nu2: 0.5,
            xi_tilde: 0.125 * 40f64.sqrt(),
        });
        let segs = hybrid_cm_segments(&p).unwrap();
        for h in [0.0, 0.3, 2.0] {
            let v = eval_mixture(&segs, h, &settings()).unwrap();
            assert!((v - hybrid_cm(h, &p).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn superposition_limits() {
        let c = CauchyParams::new(0.125, 0.75).unwrap();
        let m = MaternParams::new(0.125, 0.5).unwrap();
        let mut p = HybridCMParams {
            lambda1: c,
            lambda2: m,
            omega1: 0.5,
            omega2: 0.5,
            xi1: 1e8,
            xi2: 1e-8,
        };
        for h in [0.0, 0.5, 2.0] {
            let v = superposition_mixture(&p, h, &settings()).unwrap();
            let full = 0.5 * cauchy(h, &c).unwrap() + 0.5 * matern(h, &m).unwrap();
            assert!((v - full).abs() < 1e-4, "{h}: {v} vs {full}");
        }
        p.xi1 = 1.0;
        p.xi2 = 2.0;
        assert!(superposition_mixture(&p, 0.0, &settings()).is_err());
    }

    #[test]
    fn rejects_bad_segments() {
        let c = CauchyParams::new(1.0, 1.0).unwrap();
        assert!(MixtureSegment::new(2.0, 1.0, 1.0, MixingDensity::Cauchy(c)).is_err());
        assert!(MixtureSegment::new(0.0, 1.0, 0.0, MixingDensity::Cauchy(c)).is_err());
    }
}
