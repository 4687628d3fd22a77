//! Checks closed-form hybrid covariances against direct numerical
//! integration of their scale-mixture representation.

use std::time::Instant;

use hybrid_cov::kernels::{hybrid_cm, CauchyParams, HybridCMParams, MaternParams};
use hybrid_cov::mixture_oracle::{eval_mixture_with, hybrid_cm_segments, OracleScheme};
use hybrid_cov::quadrature::QuadratureSettings;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = QuadratureSettings::default();
    for scheme in [OracleScheme::GaussKronrod, OracleScheme::DoubleExponential] {
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for nu2 in [0.5, 1.5] {
            for xi in [1.0, 10.0, 100.0] {
                let p = HybridCMParams {
                    lambda1: CauchyParams::new(0.125, 0.75)?,
                    lambda2: MaternParams::new(0.125, nu2)?,
                    omega1: 0.5,
                    omega2: 0.5,
                    xi1: xi,
                    xi2: xi,
                };
                let segments = hybrid_cm_segments(&p)?;
                for i in 0..=200 {
                    let h = 0.05 * i as f64;
                    let oracle = eval_mixture_with(&segments, h, &settings, scheme)?;
                    worst = worst.max((hybrid_cm(h, &p)? - oracle).abs());
                }
            }
        }
        println!(
            "{scheme:?}: max |closed form - oracle| = {worst:.3e} in {:?}",
            start.elapsed()
        );
    }
    Ok(())
}
