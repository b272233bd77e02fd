//! Starts the fitness service on a free port with injected latency and
//! failures, then talks to it through the HTTP evaluator.
//!
//!     cargo run --example fitness_service

use std::time::{Duration, Instant};

use gabench::ga::{Evaluator, HttpEvaluator};
use gabench::plant::{seed_params, ControllerParams};
use gabench::service::{self, DelayDistribution, LatencyModel, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let latency = LatencyModel::new(DelayDistribution::Exponential { mean_ms: 15.0 }, 0.2, 7);
    let handle = service::spawn_local(&ServiceConfig::with_latency(latency)).await?;
    println!("listening on {} with latency {}", handle.url(), latency.distribution);

    let eval = HttpEvaluator::new(&handle.url(), Duration::from_secs(5), 3)?
        .with_backoff_base(Duration::from_millis(20));
    eval.health().await?;

    let params = [
        seed_params(),
        ControllerParams::from_array([8.0, 0.2, 3.0, 8.0, 0.2, 3.0]),
        ControllerParams::from_array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
    ];
    for p in &params {
        let start = Instant::now();
        let result = eval.evaluate(p).await;
        println!("{:?} -> {result:?} in {:.1} ms", p.to_array(), start.elapsed().as_secs_f64() * 1e3);
    }

    // Out-of-bounds genes are rejected, not retried.
    let bad = ControllerParams::from_array([50.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    println!("out of bounds -> {:?}", eval.evaluate(&bad).await);

    let state = handle.state();
    println!(
        "requests received: {}, evaluations performed: {}",
        state.request_count(),
        state.evaluation_count()
    );
    handle.shutdown().await?;
    Ok(())
}
