//! Simple kriging of a simulated field on a regular grid, plus an
//! exactness check at the data sites.

use hybrid_cov::kernels::{KernelSpec, ParsimoniousCM};
use hybrid_cov::predict::simple_krige;
use hybrid_cov::randfield::{sample_uniform_locations, simulate, Locations, SimulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = ParsimoniousCM {
        omega: 1.0,
        alpha: 0.125,
        nu1: 0.75,
        nu2: 1.5,
        xi_tilde: 0.125 * 120f64.sqrt(),
    };
    let spec = KernelSpec::parsimonious_cm(&p, 2);
    let loc = sample_uniform_locations(60, &[0.0, 0.0], &[3.0, 3.0], 1)?;
    let sample = simulate(&spec, &loc, &SimulationConfig::new(1, 1))?
        .samples
        .remove(0);

    let at_sites = simple_krige(&spec, &sample, &loc)?;
    let worst = at_sites
        .means
        .iter()
        .zip(&sample.values)
        .map(|(m, z)| (m - z).abs())
        .fold(0.0, f64::max);
    println!("max |prediction - observation| at data sites: {worst:.2e}");

    let k = 7;
    let mut coords = Vec::new();
    for i in 0..k {
        for j in 0..k {
            coords.extend([
                3.0 * i as f64 / (k - 1) as f64,
                3.0 * j as f64 / (k - 1) as f64,
            ]);
        }
    }
    let grid = Locations::new(2, coords)?;
    let pred = simple_krige(&spec, &sample, &grid)?;
    println!("kriging mean (rows x1, columns x2):");
    for i in 0..k {
        let row: Vec<String> = (0..k)
            .map(|j| format!("{:>7.3}", pred.means[i * k + j]))
            .collect();
        println!("{}", row.join(""));
    }
    println!("kriging standard deviation:");
    for i in 0..k {
        let row: Vec<String> = (0..k)
            .map(|j| format!("{:>7.3}", pred.variances[i * k + j].sqrt()))
            .collect();
        println!("{}", row.join(""));
    }
    Ok(())
}
