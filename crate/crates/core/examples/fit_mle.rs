//! Maximum-likelihood fit of the parsimonious hybrid to one simulated
//! replicate, with standard errors and AIC.

use hybrid_cov::inference::{fit_mle, neg_log_likelihood, FitOptions, FitReport};
use hybrid_cov::scenarios::ScenarioSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = ScenarioSpec::canonical("c", 100, 1)?;
    let sample = scenario.simulate(7)?.remove(0);
    let template = scenario.spec();
    let mask = scenario.hybrid_mask();

    let fit = fit_mle(
        &template,
        &mask,
        &sample,
        &scenario.hybrid_start(),
        &FitOptions::default(),
    )?;
    let at_truth = neg_log_likelihood(&template, &sample)?.value;
    println!(
        "loglik at truth {:.4}, at optimum {:.4}",
        -at_truth, fit.loglik
    );
    println!(
        "{} iterations, converged: {}",
        fit.n_iterations, fit.converged
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&FitReport::new(&template, &mask, &fit))?
    );
    Ok(())
}
