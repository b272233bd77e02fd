//! Evolves PID gains in-process and prints the best fitness per generation.
//!
//!     cargo run --release --example local_evolution -- [SEED]

use gabench::ga::{run_population_observed, GaConfig, LocalEvaluator};
use gabench::plant::{seed_params, FitnessModel, SimConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let cfg = GaConfig {
        pop_size: 20,
        n_generations: 30,
        rng_seed: seed,
        ..GaConfig::default()
    };
    let eval = LocalEvaluator::new(FitnessModel::new(SimConfig::default())?);

    let run = run_population_observed(&cfg, &eval, seed_params(), |g| {
        let mean = g.individuals.iter().map(|i| i.fitness).sum::<f64>() / g.individuals.len() as f64;
        println!("gen {:>3}: best {:>9.4}  mean {:>9.4}", g.index, g.best_fitness, mean);
    })
    .await?;

    let best = run
        .generations
        .last()
        .and_then(|g| g.individuals.iter().max_by(|a, b| a.fitness.total_cmp(&b.fitness)))
        .expect("at least one generation");
    println!(
        "\n{} evaluations in {:.3} s; best gains {:?} score {:.4}",
        run.evaluations,
        run.runtime_s,
        best.genes.to_array(),
        best.fitness
    );
    Ok(())
}
