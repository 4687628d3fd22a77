//! Special functions behind the closed-form covariance models.
//!
//! Everything here is pure, allocation-free on the common paths, and
//! deterministic: identical inputs give bit-identical outputs.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use thiserror::Error;

pub use crate::quadrature::QuadratureSettings;
use crate::quadrature::{integrate, integrate_to_infinity, QuadratureError};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecialFunctionError {
    #[error("{function}: argument outside the domain ({detail})")]
    Domain {
        function: &'static str,
        detail: &'static str,
    },
    #[error("{function}: result overflows f64")]
    Overflow { function: &'static str },
    #[error("{function}: result underflows to zero")]
    Underflow { function: &'static str },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

type Result<T> = std::result::Result<T, SpecialFunctionError>;

fn domain(function: &'static str, detail: &'static str) -> SpecialFunctionError {
    SpecialFunctionError::Domain { function, detail }
}

// Lanczos approximation, g = 607/128, 15 terms.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_091_82,
    57.156_235_665_862_923_517,
    -59.597_960_355_475_491_248,
    14.136_097_974_741_747_174,
    -0.491_913_816_097_620_199_78,
    0.339_946_499_848_118_886_99e-4,
    0.465_236_289_270_485_756_65e-4,
    -0.983_744_753_048_795_646_77e-4,
    0.158_088_703_224_912_488_84e-3,
    -0.210_264_441_724_104_883_19e-3,
    0.217_439_618_115_212_643_20e-3,
    -0.164_318_106_536_763_890_22e-3,
    0.844_182_239_838_527_432_93e-4,
    -0.261_908_384_015_814_086_70e-4,
    0.368_991_826_595_316_227_04e-5,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_78;

fn lanczos_sum(z: f64) -> f64 {
    LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (k, c)| acc + c / (z + (k + 1) as f64))
}

/// ln Γ(a) for a > 0 (no domain check).
pub(crate) fn ln_gamma_unchecked(a: f64) -> f64 {
    if a < 0.5 {
        // Γ(a) = Γ(a+1)/a keeps the Lanczos argument ≥ 1/2
        return ln_gamma_unchecked(a + 1.0) - a.ln();
    }
    let z = a - 1.0;
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

/// ln Γ(a), a > 0.
pub fn ln_gamma(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(domain("ln_gamma", "a must be positive and finite"));
    }
    Ok(ln_gamma_unchecked(a))
}

/// Γ(a), a > 0.
pub fn gamma_fn(a: f64) -> Result<f64> {
    if !(a > 0.0) || a.is_nan() {
        return Err(domain("gamma_fn", "a must be positive"));
    }
    if a > 171.624_376_956_302_7 {
        return Err(SpecialFunctionError::Overflow {
            function: "gamma_fn",
        });
    }
    if a < 0.5 {
        return Ok(gamma_fn(a + 1.0)? / a);
    }
    let z = a - 1.0;
    let t = z + LANCZOS_G + 0.5;
    // t^(z+1/2) is split in halves so that large arguments do not overflow early
    let half_power = t.powf(0.5 * (z + 0.5));
    let value = (2.0 * PI).sqrt() * half_power * (half_power * (-t).exp()) * lanczos_sum(z);
    if value.is_infinite() {
        return Err(SpecialFunctionError::Overflow {
            function: "gamma_fn",
        });
    }
    Ok(value)
}

const SERIES_MAX_ITER: usize = 100_000;
const TINY: f64 = 1e-300;

/// exp(a ln x − x − ln Γ(a)); shared prefactor of both incomplete gamma branches.
fn incomplete_gamma_prefactor(a: f64, x: f64, ln_gamma_a: f64) -> f64 {
    (a * x.ln() - x - ln_gamma_a).exp()
}

fn lower_series(a: f64, x: f64, ln_gamma_a: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..SERIES_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    sum * incomplete_gamma_prefactor(a, x, ln_gamma_a)
}

fn upper_continued_fraction(a: f64, x: f64, ln_gamma_a: f64) -> f64 {
    // modified Lentz evaluation
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..SERIES_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h * incomplete_gamma_prefactor(a, x, ln_gamma_a)
}

fn check_incomplete(function: &'static str, a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(domain(function, "a must be positive and finite"));
    }
    if !(x >= 0.0) {
        return Err(domain(function, "x must be nonnegative"));
    }
    Ok(())
}

/// Regularized lower incomplete gamma P(a, x) = γ(a, x)/Γ(a).
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    check_incomplete("reg_lower_gamma", a, x)?;
    Ok(reg_lower_unchecked(a, x))
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x)/Γ(a).
pub fn reg_upper_gamma(a: f64, x: f64) -> Result<f64> {
    check_incomplete("reg_upper_gamma", a, x)?;
    Ok(reg_upper_unchecked(a, x))
}

pub(crate) fn reg_lower_unchecked(a: f64, x: f64) -> f64 {
    RegularizedGamma::new_unchecked(a).lower(x)
}

pub(crate) fn reg_upper_unchecked(a: f64, x: f64) -> f64 {
    RegularizedGamma::new_unchecked(a).upper(x)
}

/// P(a, ·) and Q(a, ·) for a fixed shape, with ln Γ(a) computed once.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedGamma {
    a: f64,
    ln_gamma_a: f64,
}

impl RegularizedGamma {
    pub fn new(a: f64) -> Result<Self> {
        check_incomplete("RegularizedGamma::new", a, 0.0)?;
        Ok(Self::new_unchecked(a))
    }

    pub(crate) fn new_unchecked(a: f64) -> Self {
        Self {
            a,
            ln_gamma_a: ln_gamma_unchecked(a),
        }
    }

    pub fn shape(&self) -> f64 {
        self.a
    }

    /// P(a, x); x must be nonnegative.
    pub fn lower(&self, x: f64) -> f64 {
        let a = self.a;
        if x == 0.0 {
            0.0
        } else if x.is_infinite() {
            1.0
        } else if x < a + 1.0 {
            lower_series(a, x, self.ln_gamma_a)
        } else if a * x.ln() - x - self.ln_gamma_a < -40.0 {
            // Q < 2e-17 here, below half an ulp of 1
            1.0
        } else {
            1.0 - upper_continued_fraction(a, x, self.ln_gamma_a)
        }
    }

    /// Q(a, x); x must be nonnegative.
    pub fn upper(&self, x: f64) -> f64 {
        let a = self.a;
        if x == 0.0 {
            1.0
        } else if x.is_infinite() {
            0.0
        } else if x < a + 1.0 {
            1.0 - lower_series(a, x, self.ln_gamma_a)
        } else {
            upper_continued_fraction(a, x, self.ln_gamma_a)
        }
    }
}

fn check_generalized(function: &'static str, a: f64, b: f64, c: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(domain(function, "a must be positive and finite"));
    }
    if !(b >= 0.0) || !(c >= 0.0) || !c.is_finite() {
        return Err(domain(function, "b and c must be nonnegative"));
    }
    Ok(())
}

/// Location of the maximum of t^{a-1} e^{-t-c/t} on (0, ∞) for c > 0.
fn integrand_peak(a: f64, c: f64) -> f64 {
    let am1 = a - 1.0;
    // the two algebraically equal forms avoid cancellation for either sign of a-1
    if am1 >= 0.0 {
        0.5 * (am1 + (am1 * am1 + 4.0 * c).sqrt())
    } else {
        2.0 * c / ((am1 * am1 + 4.0 * c).sqrt() - am1)
    }
}

fn ln_integrand(a: f64, c: f64, t: f64) -> f64 {
    (a - 1.0) * t.ln() - t - c / t
}

// e^-60 relative to the peak
const LN_NEGLIGIBLE: f64 = -60.0;

/// A point past `from` (at or beyond the peak) where the scaled integrand
/// has dropped below e^-60.
fn negligible_after(a: f64, c: f64, from: f64, log_scale: f64) -> f64 {
    let mut step = from.max(1.0);
    loop {
        let t = from + step;
        if ln_integrand(a, c, t) - log_scale < LN_NEGLIGIBLE || !t.is_finite() {
            return t;
        }
        step *= 2.0;
    }
}

/// Generalized incomplete gamma Γ(a; b; c) = ∫_b^∞ t^{a−1} exp(−t − c/t) dt.
///
/// With `c = 0` this is the ordinary upper incomplete gamma and is evaluated
/// by series/continued fraction. Otherwise the range is split at the larger of
/// `b` and the integrand's peak; the bounded piece and the mapped tail are
/// integrated adaptively with the integrand scaled to unit height at the split.
pub fn gen_inc_gamma(a: f64, b: f64, c: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_generalized("gen_inc_gamma", a, b, c)?;
    if b.is_infinite() {
        return Ok(0.0);
    }
    if c == 0.0 {
        return if b == 0.0 {
            gamma_fn(a)
        } else {
            Ok(reg_upper_unchecked(a, b) * gamma_fn(a)?)
        };
    }
    let split = integrand_peak(a, c).max(b);
    let log_scale = ln_integrand(a, c, split);
    let f = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (ln_integrand(a, c, t) - log_scale).exp()
        }
    };
    let mut total = integrate_to_infinity(f, split, settings)?.value;
    if split > b {
        total += integrate(f, b, split, settings)?.value;
    }
    finish_scaled("gen_inc_gamma", total, log_scale)
}

/// Lower generalized incomplete gamma ∫_0^b t^{a−1} exp(−t − c/t) dt, the
/// complement of [`gen_inc_gamma`]: the two add up to Γ(a; 0; c).
///
/// For moderate `b` and `c/b ≥ 1` it is summed from the convergent expansion
/// `b^a Σ_k (−b)^k/k! E_{a+k+1}(c/b)`; elsewhere it falls back to adaptive
/// quadrature on the finite range.
pub fn gen_lower_inc_gamma(a: f64, b: f64, c: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_generalized("gen_lower_inc_gamma", a, b, c)?;
    if b == 0.0 {
        return Ok(0.0);
    }
    if c == 0.0 {
        return Ok(reg_lower_unchecked(a, b) * gamma_fn(a)?);
    }
    if b.is_infinite() {
        return gen_inc_gamma(a, 0.0, c, settings);
    }
    if b <= EXPANSION_MAX_B && c >= b * EXPANSION_MIN_RATIO {
        if let Some(v) = lower_generalized_expansion(a, b, c / b) {
            return Ok(v);
        }
    }
    gen_lower_inc_gamma_quadrature(a, b, c, settings)
}

/// Quadrature-only evaluation of [`gen_lower_inc_gamma`].
pub fn gen_lower_inc_gamma_quadrature(
    a: f64,
    b: f64,
    c: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    check_generalized("gen_lower_inc_gamma", a, b, c)?;
    if b == 0.0 {
        return Ok(0.0);
    }
    if c == 0.0 {
        return Ok(reg_lower_unchecked(a, b) * gamma_fn(a)?);
    }
    let peak = integrand_peak(a, c);
    let split = peak.min(b);
    let log_scale = ln_integrand(a, c, split);
    let f = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (ln_integrand(a, c, t) - log_scale).exp()
        }
    };
    let mut total = integrate(f, 0.0, split, settings)?.value;
    if split < b {
        // a wide interval hides the mass near the peak from the adaptive rule
        let end = b.min(negligible_after(a, c, split, log_scale));
        total += integrate(f, split, end, settings)?.value;
    }
    finish_scaled("gen_lower_inc_gamma", total, log_scale)
}

// Alternating terms peak near k ≈ b, so the expansion loses about e^b·eps.
const EXPANSION_MAX_B: f64 = 3.0;
// The exponential-integral continued fraction converges slowly below z = 1.
const EXPANSION_MIN_RATIO: f64 = 1.0;
const EXPANSION_MAX_TERMS: usize = 200;

/// E_p(z) for real p and z > 0 by the incomplete gamma continued fraction.
fn expint_continued_fraction(p: f64, z: f64) -> f64 {
    let mut b = z + p;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..SERIES_MAX_ITER {
        let fi = i as f64;
        let an = -fi * (p - 1.0 + fi);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h * (-z).exp()
}

/// Number of terms for the expansion at this `b`, or `None` when too many.
fn expansion_terms(b: f64) -> Option<usize> {
    // stop once b^k/k! is negligible against the first term
    let mut n_terms = 1;
    let mut mag = 1.0;
    while n_terms < EXPANSION_MAX_TERMS {
        mag *= b / n_terms as f64;
        n_terms += 1;
        if mag < 1e-18 && n_terms as f64 > b {
            return Some(n_terms);
        }
    }
    None
}

/// b^a Σ_k (−b)^k/k! E_{a+k+1}(z), z = c/b, without the b^a factor.
///
/// E_p is seeded once by continued fraction at the order closest to z, then
/// filled by recurrence E_{p+1} = (e^{−z} − z E_p)/p: upwards for p > z and
/// downwards for p < z, the stable direction on each side.
fn expansion_sum(a: f64, b: f64, z: f64, n_terms: usize) -> f64 {
    let mut orders = [0.0f64; EXPANSION_MAX_TERMS];
    let e_z = (-z).exp();
    let p0 = a + 1.0;
    let seed = ((z - p0).round().max(0.0) as usize).min(n_terms - 1);
    orders[seed] = expint_continued_fraction(p0 + seed as f64, z);
    for k in (0..seed).rev() {
        let p = p0 + k as f64;
        orders[k] = (e_z - p * orders[k + 1]) / z;
    }
    for k in seed..n_terms - 1 {
        let p = p0 + k as f64;
        orders[k + 1] = (e_z - z * orders[k]) / p;
    }
    let mut sum = 0.0;
    let mut coef = 1.0;
    for (k, e_p) in orders.iter().take(n_terms).enumerate() {
        if k > 0 {
            coef *= -b / k as f64;
        }
        sum += coef * e_p;
    }
    sum
}

fn lower_generalized_expansion(a: f64, b: f64, z: f64) -> Option<f64> {
    let n_terms = expansion_terms(b)?;
    let value = b.powf(a) * expansion_sum(a, b, z, n_terms);
    (value.is_finite() && value >= 0.0).then_some(value)
}

/// γ(a; b; c)/Γ(a) for fixed `a` and `b` as a function of `c`, with the
/// per-shape constants computed once.
#[derive(Debug, Clone)]
pub struct LowerGeneralizedGamma {
    a: f64,
    b: f64,
    gamma_a: f64,
    b_pow_a: f64,
    n_terms: Option<usize>,
    settings: QuadratureSettings,
}

impl LowerGeneralizedGamma {
    pub fn new(a: f64, b: f64, settings: &QuadratureSettings) -> Result<Self> {
        check_generalized("LowerGeneralizedGamma::new", a, b, 0.0)?;
        let n_terms = if b <= EXPANSION_MAX_B {
            expansion_terms(b)
        } else {
            None
        };
        Ok(Self {
            a,
            b,
            gamma_a: gamma_fn(a)?,
            b_pow_a: b.powf(a),
            n_terms,
            settings: *settings,
        })
    }

    /// Upper bound on the regularized value for every c: the c = 0 value P(a, b).
    pub fn mass(&self) -> f64 {
        reg_lower_unchecked(self.a, self.b)
    }

    /// γ(a; b; c)/Γ(a), c ≥ 0.
    pub fn regularized(&self, c: f64) -> Result<f64> {
        if self.b == 0.0 {
            return Ok(0.0);
        }
        if let Some(n) = self.n_terms {
            if c >= self.b * EXPANSION_MIN_RATIO {
                let value = self.b_pow_a * expansion_sum(self.a, self.b, c / self.b, n);
                if value.is_finite() && value >= 0.0 {
                    return Ok(value / self.gamma_a);
                }
            }
        }
        Ok(gen_lower_inc_gamma(self.a, self.b, c, &self.settings)? / self.gamma_a)
    }
}

fn finish_scaled(function: &'static str, total: f64, log_scale: f64) -> Result<f64> {
    let value = total * log_scale.exp();
    if value.is_infinite() {
        return Err(SpecialFunctionError::Overflow { function });
    }
    if total > 0.0 && value == 0.0 {
        return Err(SpecialFunctionError::Underflow { function });
    }
    Ok(value)
}

// Taylor coefficients of 1/Γ(1+x) about 0.
const RGAMMA1P: [f64; 29] = [
    1.0,
    0.577_215_664_901_532_860_606_5,
    -0.655_878_071_520_253_881_077,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_501_7,
    -0.042_197_734_555_544_336_748_21,
    -0.009_621_971_527_876_973_562_115,
    0.007_218_943_246_663_099_542_395,
    -0.001_165_167_591_859_065_112_114,
    -0.000_215_241_674_114_950_972_815_7,
    0.000_128_050_282_388_116_186_153_2,
    -0.000_020_134_854_780_788_238_655_69,
    -0.000_001_250_493_482_142_670_657_345,
    0.000_001_133_027_231_981_695_882_374,
    -2.056_338_416_977_607_103_45e-7,
    6.116_095_104_481_415_817_862e-9,
    5.002_007_644_469_222_930_056e-9,
    -1.181_274_570_487_020_144_588e-9,
    1.043_426_711_691_100_510_492e-10,
    7.782_263_439_905_071_254_05e-12,
    -3.696_805_618_642_205_708_188e-12,
    5.100_370_287_454_475_979_015e-13,
    -2.058_326_053_566_506_783_222e-14,
    -5.348_122_539_423_017_982_37e-15,
    1.226_778_628_238_260_790_159e-15,
    -1.181_259_301_697_458_769_514e-16,
    1.186_692_254_751_600_332_58e-18,
    1.412_380_655_318_031_781_556e-18,
    -2.298_745_684_435_370_206_592e-19,
];

/// Temme's auxiliary gammas for |mu| <= 1/2:
/// (gam1, gam2, 1/Γ(1+mu), 1/Γ(1−mu)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let m2 = mu * mu;
    let mut odd = 0.0;
    let mut even = 0.0;
    // Horner over powers of mu^2
    for k in (0..RGAMMA1P.len()).rev() {
        if k % 2 == 1 {
            odd = odd * m2 + RGAMMA1P[k];
        } else {
            even = even * m2 + RGAMMA1P[k];
        }
    }
    // odd = Σ c_{2j+1} mu^{2j}, even = Σ c_{2j} mu^{2j}
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, even + mu * odd, even - mu * odd)
}

const BESSEL_MAX_ITER: usize = 100_000;
const RESCALE_THRESHOLD: f64 = 1e250;
const RESCALE_BITS: i32 = 800;

/// e^x K_nu(x) as `mantissa · 2^exponent`, so that neither small-x/large-nu
/// overflow nor large-x underflow can occur inside the recurrence.
fn bessel_k_scaled_parts(nu: f64, x: f64) -> (f64, i32) {
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let n_up = nl as usize;
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (k_mu, k_mu1) = if x < 2.0 {
        // Temme's series
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < f64::EPSILON {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < f64::EPSILON {
            1.0
        } else {
            e.sinh() / e
        };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..BESSEL_MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * xi2 * scale)
    } else {
        // Steed's continued fraction CF2 (Thompson–Barnett)
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..BESSEL_MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < f64::EPSILON {
                break;
            }
        }
        h *= a1;
        let k_mu = (PI / (2.0 * x)).sqrt() / s;
        (k_mu, k_mu * (mu + x + 0.5 - h) * xi)
    };

    // upward recurrence K_{m+1} = 2m/x K_m + K_{m-1}
    let mut exponent = 0i32;
    let mut k_prev = k_mu;
    let mut k_cur = k_mu1;
    if n_up == 0 {
        return (k_prev, 0);
    }
    for i in 1..n_up {
        let next = (mu + i as f64) * xi2 * k_cur + k_prev;
        k_prev = k_cur;
        k_cur = next;
        if k_cur.abs() > RESCALE_THRESHOLD {
            let s = 2f64.powi(-RESCALE_BITS);
            k_cur *= s;
            k_prev *= s;
            exponent += RESCALE_BITS;
        }
    }
    (k_cur, exponent)
}

fn check_bessel(function: &'static str, nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_infinite() {
        return Err(domain(function, "x must be positive and finite"));
    }
    if !nu.is_finite() {
        return Err(domain(function, "nu must be finite"));
    }
    Ok(nu.abs())
}

/// Multiplies by 2^exponent in steps that never overflow the scale factor itself.
fn ldexp(mut value: f64, mut exponent: i32) -> f64 {
    while exponent > 1000 {
        value *= 2f64.powi(1000);
        exponent -= 1000;
    }
    while exponent < -1000 {
        value *= 2f64.powi(-1000);
        exponent += 1000;
    }
    value * 2f64.powi(exponent)
}

/// Modified Bessel function of the second kind, K_nu(x). `nu` is taken as a
/// magnitude (K_{-nu} = K_nu).
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    let nu = check_bessel("bessel_k", nu, x)?;
    let (m, e) = bessel_k_scaled_parts(nu, x);
    // e^{-x} is applied in two halves to delay underflow
    let half = (-0.5 * x).exp();
    let value = ldexp(m * half, e) * half;
    if value.is_infinite() {
        return Err(SpecialFunctionError::Overflow {
            function: "bessel_k",
        });
    }
    if value < f64::MIN_POSITIVE {
        return Err(SpecialFunctionError::Underflow {
            function: "bessel_k",
        });
    }
    Ok(value)
}

/// Exponentially scaled e^x K_nu(x).
pub fn bessel_k_scaled(nu: f64, x: f64) -> Result<f64> {
    let nu = check_bessel("bessel_k_scaled", nu, x)?;
    let (m, e) = bessel_k_scaled_parts(nu, x);
    let value = ldexp(m, e);
    if value.is_infinite() {
        return Err(SpecialFunctionError::Overflow {
            function: "bessel_k_scaled",
        });
    }
    Ok(value)
}

/// ln K_nu(x); finite wherever K_nu(x) itself would over- or underflow.
pub fn ln_bessel_k(nu: f64, x: f64) -> Result<f64> {
    let nu = check_bessel("ln_bessel_k", nu, x)?;
    let (m, e) = bessel_k_scaled_parts(nu, x);
    Ok(m.ln() + e as f64 * LN_2 - x)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let x2 = x * x;
    if x >= 0.0 {
        reg_upper_unchecked(0.5, x2)
    } else {
        1.0 + reg_lower_unchecked(0.5, x2)
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal quantile for p in (0, 1).
///
/// Acklam's rational approximation followed by one Halley step against
/// [`erfc`], which brings it to full double precision.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement; the residual is formed on the smaller tail
    let e = if x < 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - 0.5 * erfc(x * FRAC_1_SQRT_2)
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
