//! Evaluates the hybrid families next to their building blocks and prints
//! correlation curves, tail exponents and the hole-effect lower bound.

use hybrid_cov::kernels::{
    hm_lower_bound, hm_minimizer, hm_validity, tail_exponent, CauchyParams, Covariance,
    HybridCMParams, HybridHMParams, Kernel, KernelSpec, MaternParams, ParsimoniousCM,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cm = HybridCMParams {
        lambda1: CauchyParams::new(0.125, 0.75)?,
        lambda2: MaternParams::new(0.125, 0.5)?,
        omega1: 0.5,
        omega2: 0.5,
        xi1: 10.0,
        xi2: 10.0,
    };
    let hybrid = Kernel::new(&KernelSpec::hybrid_cm(&cm, 2))?;
    let cauchy = Kernel::new(&KernelSpec::cauchy(1.0, cm.lambda1, 2))?;
    let matern = Kernel::new(&KernelSpec::matern(1.0, cm.lambda2, 2))?;

    println!(
        "{:>6} {:>12} {:>12} {:>12}",
        "h", "hybrid", "cauchy", "matern"
    );
    let v0 = hybrid.variance()?;
    for i in 0..=10 {
        let h = 0.1 * i as f64;
        println!(
            "{h:>6.2} {:>12.6} {:>12.6} {:>12.6}",
            hybrid.covariance(h)? / v0,
            cauchy.covariance(h)?,
            matern.covariance(h)?
        );
    }

    // the hybrid inherits the Cauchy power-law tail: φ(h) ~ h^(-ν₁)
    let parsimonious = ParsimoniousCM {
        omega: 1.0,
        alpha: 0.125,
        nu1: 0.75,
        nu2: 0.5,
        xi_tilde: 0.125 * 40f64.sqrt(),
    };
    let spec = KernelSpec::parsimonious_cm(&parsimonious, 2);
    println!(
        "\ntail exponent on [1e2, 1e4]: {:.4}",
        tail_exponent(&spec, 1e2, 1e4)?
    );
    println!(
        "matérn tail exponent on [1e2, 1e4]: {:.1}",
        tail_exponent(&KernelSpec::matern(1.0, cm.lambda2, 2), 1e2, 1e4)?
    );

    let hm = HybridHMParams {
        lambda1: MaternParams::new(0.125, 0.5)?,
        lambda2: MaternParams::new(0.125, 0.5)?,
        omega1: 1.0,
        omega2: 1.0,
        xi1: 10.0,
        xi2: 10.0,
        tau: 2.0,
        eta: 3.5,
        dim: 1,
    };
    let hole = Kernel::new(&KernelSpec::hybrid_hm(&hm))?;
    let min = (0..=5000)
        .map(|i| hole.covariance(0.01 * i as f64))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    println!(
        "\nhole effect: min φ = {min:.6}, lower bound = {:.6}",
        hm_lower_bound(&hm)?
    );
    println!(
        "minimizing lag of the u = ξ₁ component: {:.4}",
        hm_minimizer(hm.tau, hm.eta, hm.xi1)
    );
    println!("eta = 4.1 valid in d = 1: {}", hm_validity(2.0, 4.1, 1));
    Ok(())
}
