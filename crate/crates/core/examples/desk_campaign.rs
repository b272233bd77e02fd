//! A full benchmark at desk scale: two mock services that differ only in
//! latency, one campaign against each, then the runtime analysis.
//!
//!     cargo run --release --example desk_campaign -- [OUT_DIR]

use std::path::PathBuf;

use gabench::analysis::{self, FilterOptions};
use gabench::ga::GaConfig;
use gabench::orchestrator::{self, CampaignConfig};
use gabench::service::{self, DelayDistribution, LatencyModel, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| "desk_campaign".into());
    let runs = out.join("runs");

    for (label, mean_ms) in [("Fast", 20.0), ("Slow", 60.0)] {
        let latency = LatencyModel::new(DelayDistribution::Exponential { mean_ms }, 0.0, mean_ms as u64);
        let handle = service::spawn_local(&ServiceConfig::with_latency(latency)).await?;
        let cfg = CampaignConfig {
            service_label: label.into(),
            client_label: "Desk".into(),
            service_url: handle.url(),
            n_trials: 3,
            populations_per_trial: 2,
            ga: GaConfig {
                pop_size: 10,
                n_generations: 10,
                ..GaConfig::default()
            },
            trial_interval_s: 0.5,
            out_dir: runs.clone(),
        };
        let summary = orchestrator::run_campaign(&cfg).await?;
        println!(
            "{label}: {} records in {}",
            summary.records_written,
            summary.records_path.display()
        );
        handle.shutdown().await?;
    }

    let inputs = analysis::expand_inputs(&[runs.join("*.jsonl").display().to_string()])?;
    let report_dir = out.join("report");
    let report = analysis::analyze(&inputs, &FilterOptions::default(), 0.01, &report_dir)?;
    println!("\n{}", std::fs::read_to_string(report_dir.join("report.md"))?);
    for o in &report.orderings {
        println!("{}: {}", o.client, o.statement());
    }
    Ok(())
}
