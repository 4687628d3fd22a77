//! A small version of the simulation study: a few replicates of two
//! scenarios, mean scores per model and the spread of the hybrid estimates.
//!
//! Usage: cargo run --release --example scenario_benchmark [replicates]

use hybrid_cov::inference::FitOptions;
use hybrid_cov::scenarios::{median, run_scenario, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let replicates = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(4);
    let options = FitOptions {
        compute_std_errors: false,
        ..FitOptions::default()
    };
    for label in ["a", "d"] {
        let spec = ScenarioSpec::canonical(label, 100, replicates)?;
        let out = run_scenario(&spec, &[1.0, 2.0], 2024, &options)?;
        println!(
            "scenario ({label}), {} replicates, {} failed",
            out.replicates.len(),
            out.failures.len()
        );
        for (k, c) in out.competitors.iter().enumerate() {
            let s = out.mean_scores(k);
            println!(
                "  {:<12} mse {:.4} mae {:.4} lscore {:.4} crps {:.4}",
                c.name, s.mse, s.mae, s.lscore, s.crps
            );
        }
        for (name, truth) in spec.hybrid_start() {
            println!(
                "  median {name} {:.4} (truth {truth:.4})",
                median(&out.estimates(0, &name))
            );
        }
    }
    Ok(())
}
