//! Benchmark campaigns.
//!
//! A campaign is `n_trials` strictly sequential trials against one service,
//! labelled with a service/client pair. Each trial runs several independent
//! GA populations concurrently and yields one [`TrialRecord`] per population.
//! Trial `i` starts no earlier than `i * trial_interval_s` after the
//! campaign starts, and never before trial `i - 1` has finished.

mod record;

pub use record::{
    parse_record_line, read_trial_records, records_file_name, write_trial_record, RecordError, RecordWriter,
    TrialRecord, SCHEMA_VERSION,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

use crate::ga::{run_population, EvalError, Evaluator, GaConfig, GaError, HttpEvaluator};
use crate::plant::seed_params;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error("output directory {path} is not writable: {source}")]
    OutputDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("failed to build HTTP client: {0}")]
    Client(EvalError),
    #[error("population task failed: {0}")]
    Task(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub service_label: String,
    pub client_label: String,
    pub service_url: String,
    pub n_trials: usize,
    pub populations_per_trial: usize,
    pub ga: GaConfig,
    pub trial_interval_s: f64,
    pub out_dir: PathBuf,
}

impl Default for CampaignConfig {
    /// Desk scale: 2 populations of 10 individuals over 20 generations.
    fn default() -> Self {
        CampaignConfig {
            service_label: "service".into(),
            client_label: "client".into(),
            service_url: "http://127.0.0.1:8080".into(),
            n_trials: 1,
            populations_per_trial: 2,
            ga: GaConfig::default(),
            trial_interval_s: 0.0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.n_trials == 0 {
            return Err(CampaignError::InvalidConfig("n_trials must be > 0".into()));
        }
        if self.populations_per_trial == 0 {
            return Err(CampaignError::InvalidConfig("populations_per_trial must be > 0".into()));
        }
        if !(self.trial_interval_s.is_finite() && self.trial_interval_s >= 0.0) {
            return Err(CampaignError::InvalidConfig("trial_interval_s must be >= 0".into()));
        }
        self.ga.validate()?;
        Ok(())
    }

    pub fn records_path(&self) -> PathBuf {
        self.out_dir.join(records_file_name(&self.service_label, &self.client_label))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.out_dir.join(format!(
            "{}_{}.summary.json",
            record::sanitize(&self.service_label),
            record::sanitize(&self.client_label)
        ))
    }
}

/// Seed for one population: distinct for every (trial, population) pair.
pub fn derive_seed(campaign_seed: u64, trial_index: usize, population_index: usize) -> u64 {
    campaign_seed ^ ((trial_index as u64) << 32) ^ population_index as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub trial_index: usize,
    pub reason: String,
}

/// When a trial ran, in seconds since the campaign started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialWindow {
    pub trial_index: usize,
    pub scheduled_s: f64,
    pub started_s: f64,
    pub finished_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub service_label: String,
    pub client_label: String,
    pub completed_trials: usize,
    pub skipped: Vec<SkippedTrial>,
    pub records_written: usize,
    pub records_path: PathBuf,
    pub windows: Vec<TrialWindow>,
}

#[derive(Debug)]
pub enum TrialOutcome {
    Completed(Vec<TrialRecord>),
    Skipped(SkippedTrial),
}

/// Runs one trial: a health check, then `populations_per_trial` concurrent
/// population runs. Each finished record is handed to `sink` as soon as its
/// population completes.
pub async fn run_trial<E, S>(
    cfg: &CampaignConfig,
    trial_index: usize,
    evaluator: &Arc<E>,
    sink: S,
) -> Result<TrialOutcome, CampaignError>
where
    E: Evaluator + 'static,
    S: Fn(&TrialRecord) -> Result<(), RecordError> + Send + Sync + 'static,
{
    if let Err(e) = evaluator.health().await {
        tracing::warn!(trial = trial_index, error = %e, "health check failed, skipping trial");
        return Ok(TrialOutcome::Skipped(SkippedTrial {
            trial_index,
            reason: format!("health check failed: {e}"),
        }));
    }

    let sink = Arc::new(sink);
    let mut tasks = Vec::with_capacity(cfg.populations_per_trial);
    for population_index in 0..cfg.populations_per_trial {
        let seed = derive_seed(cfg.ga.rng_seed, trial_index, population_index);
        let ga = GaConfig {
            rng_seed: seed,
            ..cfg.ga.clone()
        };
        let evaluator = Arc::clone(evaluator);
        let sink = Arc::clone(&sink);
        let (service, client) = (cfg.service_label.clone(), cfg.client_label.clone());
        tasks.push(tokio::spawn(async move {
            let run = run_population(&ga, evaluator.as_ref(), seed_params()).await?;
            let record = TrialRecord::from_run(&service, &client, trial_index, population_index, seed, run);
            let written = sink(&record);
            Ok::<_, CampaignError>((record, written))
        }));
    }

    // Join every population before reporting a write failure, so in-flight
    // runs are not abandoned.
    let mut records = Vec::with_capacity(tasks.len());
    let mut first_error = None;
    for task in tasks {
        match task.await {
            Ok(Ok((record, Ok(())))) => records.push(record),
            Ok(Ok((_, Err(e)))) => {
                first_error.get_or_insert(CampaignError::Record(e));
            }
            Ok(Err(e)) => {
                first_error.get_or_insert(e);
            }
            Err(e) => {
                first_error.get_or_insert(CampaignError::Task(e.to_string()));
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(TrialOutcome::Completed(records)),
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CampaignError> {
    let err = |source| CampaignError::OutputDir { path: dir.to_path_buf(), source };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".gabench-write-probe");
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)
}

/// Runs a campaign against `cfg.service_url` over HTTP.
pub async fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    let evaluator = HttpEvaluator::new(&cfg.service_url, cfg.ga.request_timeout(), cfg.ga.max_retries)
        .map_err(CampaignError::Client)?;
    run_campaign_with(cfg, Arc::new(evaluator)).await
}

/// Runs a campaign with any evaluator, persisting every record to
/// [`CampaignConfig::records_path`] and the summary next to it.
pub async fn run_campaign_with<E: Evaluator + 'static>(
    cfg: &CampaignConfig,
    evaluator: Arc<E>,
) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out_dir)?;
    let writer = Arc::new(RecordWriter::open(cfg.records_path())?);

    let campaign_start = Instant::now();
    let interval = Duration::from_secs_f64(cfg.trial_interval_s);
    let mut summary = CampaignSummary {
        service_label: cfg.service_label.clone(),
        client_label: cfg.client_label.clone(),
        completed_trials: 0,
        skipped: Vec::new(),
        records_written: 0,
        records_path: writer.path().to_path_buf(),
        windows: Vec::with_capacity(cfg.n_trials),
    };

    for trial_index in 0..cfg.n_trials {
        let slot = campaign_start + interval * trial_index as u32;
        // Trials are sequential, so the previous one is already done here.
        tokio::time::sleep_until(slot).await;
        let started = Instant::now();

        let w = Arc::clone(&writer);
        let outcome = run_trial(cfg, trial_index, &evaluator, move |r| w.append(r)).await?;
        let finished = Instant::now();
        summary.windows.push(TrialWindow {
            trial_index,
            scheduled_s: (slot - campaign_start).as_secs_f64(),
            started_s: (started - campaign_start).as_secs_f64(),
            finished_s: (finished - campaign_start).as_secs_f64(),
        });
        match outcome {
            TrialOutcome::Completed(records) => {
                summary.completed_trials += 1;
                summary.records_written += records.len();
                tracing::info!(
                    trial = trial_index,
                    populations = records.len(),
                    elapsed_s = (finished - started).as_secs_f64(),
                    "trial complete"
                );
            }
            TrialOutcome::Skipped(skip) => summary.skipped.push(skip),
        }
    }

    let text = serde_json::to_string_pretty(&summary).map_err(RecordError::from)?;
    std::fs::write(cfg.summary_path(), text).map_err(|source| RecordError::Io {
        path: cfg.summary_path(),
        source,
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::LocalEvaluator;
    use crate::plant::{FitnessModel, SimConfig};

    fn tiny(dir: &Path) -> CampaignConfig {
        CampaignConfig {
            n_trials: 2,
            populations_per_trial: 2,
            ga: GaConfig {
                pop_size: 4,
                n_generations: 3,
                ..GaConfig::default()
            },
            out_dir: dir.to_path_buf(),
            ..CampaignConfig::default()
        }
    }

    fn local() -> Arc<LocalEvaluator> {
        Arc::new(LocalEvaluator::new(FitnessModel::new(SimConfig::default()).unwrap()))
    }

    struct Down;

    impl Evaluator for Down {
        async fn evaluate(&self, _: &crate::plant::ControllerParams) -> Result<f64, EvalError> {
            Err(EvalError::Timeout)
        }

        async fn health(&self) -> Result<(), EvalError> {
            Err(EvalError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..50 {
            for p in 0..10 {
                assert!(seen.insert(derive_seed(42, t, p)));
            }
        }
    }

    #[tokio::test]
    async fn single_population_trial() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig { populations_per_trial: 1, ..tiny(dir.path()) };
        match run_trial(&cfg, 0, &local(), |_| Ok(())).await.unwrap() {
            TrialOutcome::Completed(r) => {
                assert_eq!(r.len(), 1);
                assert_eq!(r[0].generations.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[tokio::test]
    async fn populations_use_distinct_streams() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let TrialOutcome::Completed(mut r) = run_trial(&cfg, 0, &local(), |_| Ok(())).await.unwrap() else {
            panic!("skipped");
        };
        r.sort_by_key(|x| x.population_index);
        assert_ne!(r[0].rng_seed, r[1].rng_seed);
        assert_ne!(r[0].generations, r[1].generations);
    }

    #[tokio::test]
    async fn campaign_persists_every_record() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let summary = run_campaign_with(&cfg, local()).await.unwrap();
        assert_eq!(summary.completed_trials, 2);
        assert_eq!(summary.records_written, 4);
        let back = read_trial_records(&cfg.records_path()).unwrap();
        assert_eq!(back.len(), 4);
        assert!(back.iter().all(|r| r.runtime_s > 0.0 && r.end_ts >= r.start_ts));
        assert!(cfg.summary_path().exists());
    }

    #[tokio::test]
    async fn unhealthy_service_skips_trials() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let summary = run_campaign_with(&cfg, Arc::new(Down)).await.unwrap();
        assert_eq!(summary.completed_trials, 0);
        assert_eq!(summary.skipped.len(), 2);
        assert_eq!(summary.records_written, 0);
    }

    #[tokio::test]
    async fn unwritable_out_dir_aborts_first() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, b"x").unwrap();
        let cfg = CampaignConfig { out_dir: file.join("sub"), ..tiny(dir.path()) };
        let err = run_campaign_with(&cfg, local()).await.unwrap_err();
        assert!(matches!(err, CampaignError::OutputDir { .. }), "{err}");
    }

    #[tokio::test]
    async fn overrunning_trial_delays_the_next() {
        let dir = tempfile::tempdir().unwrap();
        // Each trial takes about 3 generations x 40 ms = 120 ms, longer than
        // the 50 ms interval.
        let slow = Arc::new(
            LocalEvaluator::new(FitnessModel::new(SimConfig::default()).unwrap())
                .with_delay(Duration::from_millis(40)),
        );
        let cfg = CampaignConfig { n_trials: 3, trial_interval_s: 0.05, ..tiny(dir.path()) };
        let summary = run_campaign_with(&cfg, slow).await.unwrap();
        for w in summary.windows.windows(2) {
            assert!(w[1].started_s >= w[0].finished_s);
            assert!(w[1].started_s >= w[1].scheduled_s);
        }
        let records = read_trial_records(&cfg.records_path()).unwrap();
        for t in 0..2 {
            let end = records.iter().filter(|r| r.trial_index == t).map(|r| r.end_ts).max().unwrap();
            let next = records.iter().filter(|r| r.trial_index == t + 1).map(|r| r.start_ts).min().unwrap();
            assert!(next >= end);
        }
    }

    #[tokio::test]
    async fn idle_interval_is_respected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig { n_trials: 2, trial_interval_s: 0.3, ..tiny(dir.path()) };
        let summary = run_campaign_with(&cfg, local()).await.unwrap();
        assert!(summary.windows[1].started_s >= 0.3);
    }
}
