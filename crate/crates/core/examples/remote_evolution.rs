//! Runs the same GA against a fitness service at two latency settings and
//! compares wall-clock runtimes. Individuals in a generation are evaluated
//! concurrently, so runtime tracks the slowest request per generation.
//!
//!     cargo run --release --example remote_evolution

use std::time::Duration;

use gabench::ga::{run_population, GaConfig, HttpEvaluator};
use gabench::plant::seed_params;
use gabench::service::{self, DelayDistribution, LatencyModel, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GaConfig {
        pop_size: 10,
        n_generations: 10,
        ..GaConfig::default()
    };
    for dist in [
        DelayDistribution::None,
        DelayDistribution::Exponential { mean_ms: 20.0 },
        DelayDistribution::LogNormal { mu: 3.5, sigma: 0.5 },
    ] {
        let handle = service::spawn_local(&ServiceConfig::with_latency(LatencyModel::new(dist, 0.0, 1))).await?;
        let eval = HttpEvaluator::new(&handle.url(), cfg.request_timeout(), cfg.max_retries)?;
        let run = run_population(&cfg, &eval, seed_params()).await?;
        println!(
            "{:<24} runtime {:>7.3} s  best {:>9.4}  requests {}",
            dist.to_string(),
            run.runtime_s,
            run.best_fitness(),
            handle.state().request_count()
        );
        handle.shutdown().await?;
    }

    // A capped client sends at most two requests at a time.
    let handle = service::spawn_local(&ServiceConfig::with_latency(LatencyModel::new(
        DelayDistribution::Fixed { delay_ms: 10.0 },
        0.0,
        1,
    )))
    .await?;
    let capped = GaConfig { max_in_flight: Some(2), ..cfg.clone() };
    let eval = HttpEvaluator::new(&handle.url(), Duration::from_secs(5), 0)?;
    let run = run_population(&capped, &eval, seed_params()).await?;
    println!("{:<24} runtime {:>7.3} s  (max 2 in flight)", "fixed:10", run.runtime_s);
    handle.shutdown().await?;
    Ok(())
}
