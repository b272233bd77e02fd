//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its `[acceptance] C<n> ...: PASS|FAIL` line; the process
//! exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gabench::analysis::{self, ks_statistic, FilterOptions, PairKey, RemovalCause};
use gabench::ga::{
    run_population, run_population_observed, GaConfig, GenerationRecord, HttpEvaluator, LocalEvaluator,
    PopulationRun, ScoredIndividual, FAILURE_SENTINEL,
};
use gabench::orchestrator::{self, read_trial_records, write_trial_record, CampaignConfig, TrialRecord};
use gabench::plant::{seed_params, ControllerParams, FitnessModel, SimConfig, FITNESS_MAX, FITNESS_MIN, GENE_HIGH, GENE_LOW};
use gabench::service::{self, DelayDistribution, LatencyModel, ServiceConfig};

fn verdict(id: &str, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("[acceptance] {id} {name}: {status} ({detail})");
}

fn random_params(rng: &mut impl Rng) -> ControllerParams {
    let mut g = [0.0; 6];
    for v in &mut g {
        *v = rng.random_range(GENE_LOW..=GENE_HIGH);
    }
    ControllerParams::from_array(g)
}

fn model() -> FitnessModel {
    FitnessModel::new(SimConfig::default()).unwrap()
}

fn http(url: &str, retries: u32) -> HttpEvaluator {
    HttpEvaluator::new(url, Duration::from_secs(10), retries)
        .unwrap()
        .with_backoff_base(Duration::from_millis(5))
}

fn c1_plant_determinism_and_bounds() -> bool {
    let start = Instant::now();
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out_of_range = 0;
    let mut mismatched = 0;
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let a = m.fitness(&p).unwrap();
        let b = m.fitness(&p).unwrap();
        if !(FITNESS_MIN..=FITNESS_MAX).contains(&a) {
            out_of_range += 1;
        }
        if a.to_bits() != b.to_bits() {
            mismatched += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = out_of_range == 0 && mismatched == 0 && elapsed < Duration::from_secs(30);
    verdict(
        "C1",
        "plant determinism & bounds",
        ok,
        &format!("{out_of_range} out of range, {mismatched} non-identical, {:.2} s", elapsed.as_secs_f64()),
    );
    ok
}

fn c2_calibration_identity() -> bool {
    let m = model();
    let zero = m.fitness(&ControllerParams::ZERO).unwrap();
    let seed = m.fitness(&seed_params()).unwrap();
    let ok = zero.abs() <= 1e-9 && seed > 0.0;
    verdict("C2", "calibration identity", ok, &format!("zero = {zero:e}, seed = {seed}"));
    ok
}

async fn c3_service_oracle_equivalence() -> bool {
    let m = model();
    let handle = service::spawn_local(&ServiceConfig::default()).await.unwrap();
    let eval = http(&handle.url(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatched = 0;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let remote = gabench::ga::Evaluator::evaluate(&eval, &p).await.unwrap();
        if remote.to_bits() != m.fitness(&p).unwrap().to_bits() {
            mismatched += 1;
        }
    }
    handle.shutdown().await.unwrap();
    let ok = mismatched == 0;
    verdict("C3", "service/oracle equivalence", ok, &format!("{mismatched}/100 differ"));
    ok
}

async fn c4_elitism_invariant() -> bool {
    let eval = LocalEvaluator::new(model());
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let cfg = GaConfig {
            pop_size: 10,
            n_generations: 20,
            rng_seed: 1000 + seed,
            ..GaConfig::default()
        };
        let run = run_population(&cfg, &eval, seed_params()).await.unwrap();
        let best: Vec<f64> = run.generations.iter().map(|g| g.best_fitness).collect();
        let monotone = best.windows(2).all(|w| w[1] >= w[0]);
        let seeded = run.generations[0]
            .individuals
            .iter()
            .any(|i| i.genes.to_array() == seed_params().to_array());
        if !(monotone && seeded && run.generations.len() == 20) {
            failures.push(cfg.rng_seed);
        }
    }
    let ok = failures.is_empty();
    verdict("C4", "elitism invariant", ok, &format!("20 runs, failing seeds {failures:?}"));
    ok
}

async fn c5_workload_shape() -> bool {
    let handle = service::spawn_local(&ServiceConfig::default()).await.unwrap();
    let state = Arc::clone(handle.state());
    let eval = http(&handle.url(), 0);
    let cfg = GaConfig {
        pop_size: 12,
        n_generations: 7,
        ..GaConfig::default()
    };
    let before = state.request_count();
    let mut last = before;
    let mut per_generation = Vec::new();
    run_population_observed(&cfg, &eval, seed_params(), |_| {
        let now = state.request_count();
        per_generation.push(now - last);
        last = now;
    })
    .await
    .unwrap();
    let total = state.request_count() - before;
    handle.shutdown().await.unwrap();
    let ok = per_generation.len() == cfg.n_generations
        && per_generation.iter().all(|&n| n == cfg.pop_size as u64)
        && total == (cfg.pop_size * cfg.n_generations) as u64;
    verdict(
        "C5",
        "workload shape",
        ok,
        &format!("per generation {per_generation:?}, total {total}"),
    );
    ok
}

fn brute_force_d(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
        .fold(0.0, f64::max)
}

fn c6_ks_correctness() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatched = 0;
    let mut asymmetric = 0;
    for _ in 0..1000 {
        let n1 = rng.random_range(1..=12);
        let n2 = rng.random_range(1..=12);
        // Small integer support so ties are common.
        let a: Vec<f64> = (0..n1).map(|_| rng.random_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random_range(0..8) as f64).collect();
        let d = ks_statistic(&a, &b).unwrap();
        if d != brute_force_d(&a, &b) {
            mismatched += 1;
        }
        if d != ks_statistic(&b, &a).unwrap() {
            asymmetric += 1;
        }
    }
    let example = ks_statistic(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
    let same = ks_statistic(&[5.0, 1.0, 3.0, 3.0], &[3.0, 1.0, 5.0, 3.0]).unwrap();
    let ok = mismatched == 0 && asymmetric == 0 && example == 0.5 && same == 0.0;
    verdict(
        "C6",
        "KS correctness",
        ok,
        &format!("{mismatched} oracle mismatches, {asymmetric} asymmetric, D(ex) = {example}, D(same) = {same}"),
    );
    ok
}

async fn desk_campaign(service_label: &str, mean_ms: f64, out: &std::path::Path) {
    let latency = LatencyModel::new(DelayDistribution::Exponential { mean_ms }, 0.0, mean_ms as u64);
    let handle = service::spawn_local(&ServiceConfig::with_latency(latency)).await.unwrap();
    let cfg = CampaignConfig {
        service_label: service_label.into(),
        client_label: "ClientA".into(),
        service_url: handle.url(),
        n_trials: 3,
        populations_per_trial: 2,
        ga: GaConfig {
            pop_size: 10,
            n_generations: 10,
            ..GaConfig::default()
        },
        trial_interval_s: 0.0,
        out_dir: out.to_path_buf(),
    };
    let summary = orchestrator::run_campaign(&cfg).await.unwrap();
    assert_eq!(summary.records_written, 6);
    handle.shutdown().await.unwrap();
}

async fn c7_desk_scale_distinguishability() -> bool {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    desk_campaign("Fast", 20.0, dir.path()).await;
    desk_campaign("Slow", 60.0, dir.path()).await;

    let inputs = analysis::expand_inputs(&[dir.path().join("*.jsonl").display().to_string()]).unwrap();
    let report = analysis::analyze(&inputs, &FilterOptions::default(), 0.01, &dir.path().join("report")).unwrap();
    let fast = PairKey::new("Fast", "ClientA");
    let slow = PairKey::new("Slow", "ClientA");
    let ks = report.ks_between(&fast, &slow).expect("KS entry for Fast vs Slow");
    let ordering = report.ordering_for("ClientA");
    let ordered = ordering.is_some_and(|o| o.services_fastest_first == vec!["Fast".to_string(), "Slow".to_string()]);
    let elapsed = start.elapsed();
    let ok = ks.significant && ks.result.is_significant(0.01) && ordered && elapsed < Duration::from_secs(300);
    let means: Vec<String> = report
        .summaries
        .iter()
        .map(|s| format!("{} mean {:.3} s", s.pair, s.stats.mean_s))
        .collect();
    verdict(
        "C7",
        "desk-scale distinguishability",
        ok,
        &format!(
            "D = {}, p = {:.2e}, {}, ordering {:?}, {:.1} s",
            ks.result.d_statistic,
            ks.result.p_value,
            means.join(", "),
            ordering.map(|o| o.statement()),
            elapsed.as_secs_f64()
        ),
    );
    ok
}

async fn c8_record_arithmetic() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let handle = service::spawn_local(&ServiceConfig::default()).await.unwrap();
    let cfg = CampaignConfig {
        service_label: "Mock".into(),
        client_label: "ClientA".into(),
        service_url: handle.url(),
        n_trials: 41,
        populations_per_trial: 10,
        ga: GaConfig {
            pop_size: 2,
            n_generations: 2,
            ..GaConfig::default()
        },
        trial_interval_s: 0.0,
        out_dir: dir.path().to_path_buf(),
    };
    let summary = orchestrator::run_campaign(&cfg).await.unwrap();
    handle.shutdown().await.unwrap();

    let records = read_trial_records(&summary.records_path).unwrap();
    let text = std::fs::read_to_string(&summary.records_path).unwrap();
    let lossless = text.lines().zip(&records).all(|(line, r)| {
        let again: TrialRecord = serde_json::from_str(&serde_json::to_string(r).unwrap()).unwrap();
        serde_json::to_string(r).unwrap() == line && &again == r
    });
    let positive = records.iter().all(|r| r.runtime_s > 0.0);
    let mut keys: Vec<(usize, usize)> = records.iter().map(|r| (r.trial_index, r.population_index)).collect();
    keys.sort();
    keys.dedup();
    let ok = records.len() == 410 && summary.records_written == 410 && keys.len() == 410 && positive && lossless;
    verdict(
        "C8",
        "record arithmetic",
        ok,
        &format!("{} records, {} distinct keys, runtimes > 0: {positive}, lossless: {lossless}", records.len(), keys.len()),
    );
    ok
}

fn synthetic(service: &str, trial: usize, pop: usize, gen0_max: f64, runtime_s: f64) -> TrialRecord {
    let start = DateTime::from_timestamp_millis(1_700_000_000_000 + (trial * 100 + pop) as i64 * 1000).unwrap();
    let individuals = vec![
        ScoredIndividual { genes: seed_params(), fitness: gen0_max },
        ScoredIndividual { genes: ControllerParams::ZERO, fitness: gen0_max.min(0.0) },
    ];
    let run = PopulationRun {
        generations: vec![GenerationRecord { index: 0, individuals, best_fitness: gen0_max }],
        start_ts: start,
        end_ts: start + chrono::Duration::milliseconds((runtime_s * 1e3) as i64),
        runtime_s,
        evaluations: 2,
    };
    TrialRecord::from_run(service, "ClientA", trial, pop, 0, run)
}

fn c9_failure_filtering() -> bool {
    let dir = tempfile::tempdir().unwrap();
    for trial in 0..5 {
        for pop in 0..4 {
            let failed = (trial, pop) == (3, 2);
            let a = synthetic("A", trial, pop, if failed { 0.5 } else { 191.0 }, 10.0 + pop as f64);
            let b = synthetic("B", trial, pop, 191.0, 20.0 + pop as f64);
            write_trial_record(&a, dir.path()).unwrap();
            write_trial_record(&b, dir.path()).unwrap();
        }
    }
    let inputs = analysis::expand_inputs(&[dir.path().join("*.jsonl").display().to_string()]).unwrap();
    let report = analysis::analyze(&inputs, &FilterOptions::default(), 0.05, &dir.path().join("report")).unwrap();

    let a = PairKey::new("A", "ClientA");
    let b = PairKey::new("B", "ClientA");
    let count = |k: &PairKey| report.summaries.iter().find(|s| &s.pair == k).map(|s| s.stats.n);
    let direct = report.removals.iter().any(|r| {
        r.pair == a && (r.trial_index, r.population_index) == (3, 2) && matches!(r.cause, RemovalCause::Direct { .. })
    });
    let matched = report.removals.iter().any(|r| {
        r.pair == b
            && (r.trial_index, r.population_index) == (3, 2)
            && matches!(&r.cause, RemovalCause::Matched { source } if source == &a)
    });
    let ok = direct && matched && report.removals.len() == 2 && count(&a) == Some(19) && count(&b) == Some(19);
    verdict(
        "C9",
        "failure filtering",
        ok,
        &format!("direct {direct}, matched {matched}, counts A {:?} B {:?}", count(&a), count(&b)),
    );
    ok
}

async fn c10_error_recovery() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let latency = LatencyModel::new(DelayDistribution::None, 1.0, 10);
    let handle = service::spawn_local(&ServiceConfig::with_latency(latency)).await.unwrap();
    let cfg = CampaignConfig {
        service_label: "Broken".into(),
        client_label: "ClientA".into(),
        service_url: handle.url(),
        n_trials: 1,
        populations_per_trial: 1,
        ga: GaConfig {
            pop_size: 6,
            n_generations: 3,
            max_retries: 2,
            ..GaConfig::default()
        },
        trial_interval_s: 0.0,
        out_dir: dir.path().to_path_buf(),
    };
    let summary = orchestrator::run_campaign_with(&cfg, Arc::new(http(&handle.url(), cfg.ga.max_retries)))
        .await
        .unwrap();
    let requests = handle.state().request_count();
    handle.shutdown().await.unwrap();

    let records = read_trial_records(&summary.records_path).unwrap();
    let all_sentinel = records
        .iter()
        .flat_map(|r| &r.generations)
        .flat_map(|g| &g.individuals)
        .all(|i| i.fitness == FAILURE_SENTINEL);
    let valid = records.len() == 1
        && records[0].generations.len() == 3
        && records[0].generations.iter().all(|g| g.individuals.len() == 6 && g.best_fitness == FAILURE_SENTINEL)
        && records[0].runtime_s > 0.0
        && records[0].end_ts >= records[0].start_ts;
    // Every evaluation made 1 + max_retries attempts.
    let expected_requests = 6 * 3 * 3;
    let ok = summary.completed_trials == 1 && all_sentinel && valid && requests == expected_requests;
    verdict(
        "C10",
        "error recovery",
        ok,
        &format!("all fitness = {FAILURE_SENTINEL}: {all_sentinel}, record valid: {valid}, {requests} requests"),
    );
    ok
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap();
    let results = [
        c1_plant_determinism_and_bounds(),
        c2_calibration_identity(),
        rt.block_on(c3_service_oracle_equivalence()),
        rt.block_on(c4_elitism_invariant()),
        rt.block_on(c5_workload_shape()),
        c6_ks_correctness(),
        rt.block_on(c7_desk_scale_distinguishability()),
        rt.block_on(c8_record_arithmetic()),
        c9_failure_filtering(),
        rt.block_on(c10_error_recovery()),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("[acceptance] {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
