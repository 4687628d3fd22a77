//! Bessel K, incomplete gamma and the generalized incomplete gamma that
//! appears in the truncated Matérn mixture.

use hybrid_cov::quadrature::QuadratureSettings;
use hybrid_cov::specfun::{
    bessel_k, gen_inc_gamma, gen_lower_inc_gamma, reg_lower_gamma, reg_upper_gamma,
};

fn main() {
    println!("{:>6} {:>8} {:>24}", "nu", "x", "K_nu(x)");
    for nu in [0.25, 0.5, 1.5, 3.0] {
        for x in [0.01, 1.0, 25.0] {
            println!("{nu:>6} {x:>8} {:>24.16e}", bessel_k(nu, x).unwrap());
        }
    }

    let (a, x) = (0.75, 2.0);
    let p = reg_lower_gamma(a, x).unwrap();
    let q = reg_upper_gamma(a, x).unwrap();
    println!(
        "\nP({a}, {x}) = {p:.16}, Q = {q:.16}, P + Q - 1 = {:e}",
        p + q - 1.0
    );

    // Γ(a; 0; c) = 2 c^(a/2) K_a(2√c)
    let s = QuadratureSettings::default();
    for c in [0.01, 1.0, 10.0] {
        let full = gen_inc_gamma(a, 0.0, c, &s).unwrap();
        let bessel = 2.0 * c.powf(a / 2.0) * bessel_k(a, 2.0 * c.sqrt()).unwrap();
        let lower = gen_lower_inc_gamma(a, 0.5, c, &s).unwrap();
        println!("c = {c:>5}: Γ(a;0;c) = {full:.15e}  Bessel form = {bessel:.15e}  γ(a;0.5;c) = {lower:.15e}");
    }
}
