//! One-dimensional numerical integration.
//!
//! Two independent schemes live here:
//!
//! * [`integrate`] / [`integrate_to_infinity`]: globally adaptive 21-point
//!   Gauss–Kronrod (the QUADPACK `QAG` strategy). The interval with the
//!   largest error estimate is bisected until the summed error estimate meets
//!   the tolerance. Semi-infinite ranges are mapped onto `[0, 1)` through
//!   `t = a + s / (1 - s)`.
//! * [`tanh_sinh`] / [`exp_sinh`]: double-exponential rules refined by halving
//!   the step. They share no nodes or subdivision logic with the Gauss–Kronrod
//!   path, which makes them suitable as a cross-check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accuracy targets for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSettings {
    pub fn new(
        rel_tol: f64,
        abs_tol: f64,
        max_subdivisions: usize,
    ) -> Result<Self, QuadratureError> {
        let s = Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || self.max_subdivisions == 0 {
            return Err(QuadratureError::InvalidSettings);
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadratureError {
    #[error("requested tolerance not met: estimate {estimate:e} with error {error:e}")]
    ToleranceNotMet { estimate: f64, error: f64 },
    #[error("integrand returned a non-finite value at t = {at}")]
    NonFinite { at: f64 },
    #[error("quadrature settings must have positive tolerances and at least one subdivision")]
    InvalidSettings,
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_222_993,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite { at: x2 });
        }
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Panel { a, b, value, error })
}

/// Adaptive Gauss–Kronrod integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<Integral, QuadratureError> {
    settings.validate()?;
    if a == b {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let first = gauss_kronrod_21(&f, a, b)?;
    let mut evaluations = 21;
    if first.error <= settings.target(first.value) {
        return Ok(Integral {
            value: first.value,
            abs_error: first.error,
            evaluations,
        });
    }
    let mut total = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::with_capacity(2 * settings.max_subdivisions);
    heap.push(first);
    let mut panels = 1;
    while error > settings.target(total) {
        if panels >= settings.max_subdivisions {
            return Err(QuadratureError::ToleranceNotMet {
                estimate: total,
                error,
            });
        }
        let worst = heap.pop().expect("heap holds every live panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval has shrunk to adjacent floating point numbers
            return Err(QuadratureError::ToleranceNotMet {
                estimate: total,
                error,
            });
        }
        let left = gauss_kronrod_21(&f, worst.a, mid)?;
        let right = gauss_kronrod_21(&f, mid, worst.b)?;
        evaluations += 42;
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }
    // re-sum to shed the drift of the running updates
    let (value, abs_error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(Integral {
        value,
        abs_error,
        evaluations,
    })
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, ∞)`, through `t = a + s/(1-s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    settings: &QuadratureSettings,
) -> Result<Integral, QuadratureError> {
    integrate(
        |s| {
            let one_minus = 1.0 - s;
            let t = a + s / one_minus;
            if !t.is_finite() {
                return 0.0;
            }
            let v = f(t);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        settings,
    )
}

const DE_MAX_LEVEL: usize = 12;
const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

fn de_settle(
    levels: impl FnMut(usize, f64) -> Result<f64, QuadratureError>,
    settings: &QuadratureSettings,
) -> Result<Integral, QuadratureError> {
    settings.validate()?;
    let mut levels = levels;
    let mut step = 1.0;
    let mut sum = levels(0, step)?;
    let mut estimate = sum * step;
    let mut evaluations = 0;
    for level in 1..=DE_MAX_LEVEL {
        step *= 0.5;
        sum += levels(level, step)?;
        evaluations += 1usize << level;
        let next = sum * step;
        let diff = (next - estimate).abs();
        estimate = next;
        if level >= 3 && diff <= settings.target(estimate) {
            return Ok(Integral {
                value: estimate,
                abs_error: diff,
                evaluations,
            });
        }
    }
    let error = settings.target(estimate) * 2.0;
    Err(QuadratureError::ToleranceNotMet { estimate, error })
}

/// Tanh–sinh (double exponential) integral over a finite interval. Handles
/// integrable endpoint singularities well.
pub fn tanh_sinh<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<Integral, QuadratureError> {
    let half = 0.5 * (b - a);
    let t_max = 6.6;
    // Sum of weighted samples at abscissae k*step that are new at this level.
    let eval_level = |level: usize, step: f64| -> Result<f64, QuadratureError> {
        let mut sum = 0.0;
        let (start, stride) = if level == 0 { (0, 1) } else { (1, 2) };
        let mut k = start;
        loop {
            let t = k as f64 * step;
            if t > t_max {
                break;
            }
            let s = HALF_PI * t.sinh();
            let cosh_s = s.cosh();
            let w = HALF_PI * t.cosh() / (cosh_s * cosh_s);
            // distance from each endpoint, computed without cancellation
            let gap = half * 2.0 / (1.0 + (2.0 * s).exp());
            let terms: &[f64] = if k == 0 {
                &[a + half]
            } else {
                &[a + gap, b - gap]
            };
            for &x in terms {
                if x <= a || x >= b {
                    continue;
                }
                let v = f(x);
                if !v.is_finite() {
                    return Err(QuadratureError::NonFinite { at: x });
                }
                sum += w * v;
            }
            k += stride;
        }
        Ok(sum * half)
    };
    de_settle(eval_level, settings)
}

/// Exp–sinh integral over `[a, ∞)`.
pub fn exp_sinh<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    settings: &QuadratureSettings,
) -> Result<Integral, QuadratureError> {
    let t_lo = -6.5;
    let t_hi = 5.5;
    let eval_level = |level: usize, step: f64| -> Result<f64, QuadratureError> {
        let mut sum = 0.0;
        let (start, stride) = if level == 0 { (0i64, 1i64) } else { (1, 2) };
        for sign in [1i64, -1] {
            let mut k = start;
            loop {
                if sign < 0 && k == 0 {
                    k += stride;
                    continue;
                }
                let t = (sign * k) as f64 * step;
                if t > t_hi || t < t_lo {
                    break;
                }
                let e = (HALF_PI * t.sinh()).exp();
                let w = HALF_PI * t.cosh() * e;
                let x = a + e;
                if x > a && x.is_finite() && w.is_finite() {
                    let v = f(x);
                    if !v.is_finite() {
                        return Err(QuadratureError::NonFinite { at: x });
                    }
                    if v != 0.0 {
                        sum += w * v;
                    }
                }
                k += stride;
            }
        }
        Ok(sum)
    };
    de_settle(eval_level, settings)
}
