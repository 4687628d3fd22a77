//! Leave-one-out comparison of the hybrid against generalized Cauchy
//! competitors, each fitted by maximum likelihood to the same replicate.

use hybrid_cov::inference::FitOptions;
use hybrid_cov::scenarios::{run_replicate, Competitor, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = ScenarioSpec::canonical("d", 100, 1)?;
    let sample = scenario.simulate(11)?.remove(0);
    let competitors = vec![
        Competitor::hybrid(&scenario),
        Competitor::gen_cauchy(&scenario, 1.0)?,
        Competitor::gen_cauchy(&scenario, 2.0)?,
    ];
    let options = FitOptions {
        compute_std_errors: false,
        ..FitOptions::default()
    };
    let fits = run_replicate(&competitors, &sample, &options)?;
    println!(
        "{:<12} {:>9} {:>9} {:>9} {:>9}",
        "model", "MSE", "MAE", "LSCORE", "CRPS"
    );
    for (c, f) in competitors.iter().zip(&fits) {
        let s = f.scores;
        println!(
            "{:<12} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
            c.name, s.mse, s.mae, s.lscore, s.crps
        );
    }
    Ok(())
}
