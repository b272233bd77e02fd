//! Offline analysis of persisted trial records.
//!
//! Records from every service/client pair are loaded together so that a
//! population that failed in one pair can be removed, under the same
//! `(trial_index, population_index)`, from every other pair as well.

mod ks;
mod report;
mod stats;

pub use ks::{kolmogorov_q, ks_p_value, ks_statistic, ks_two_sample, KsResult};
pub use report::{build_report, write_report, ClientOrdering, KsEntry, PairHistogram, PairSummary, Report};
pub use stats::{freedman_diaconis_width, quantile_sorted, summary_stats, BinSpec, SummaryStats};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{read_trial_records, RecordError, TrialRecord};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("duplicate record for {pair} trial {trial_index} population {population_index} in {path}")]
    Duplicate {
        pair: PairKey,
        trial_index: usize,
        population_index: usize,
        path: PathBuf,
    },
    #[error("bad input pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("no pairs to report")]
    NoPairs,
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub service: String,
    pub client: String,
}

impl PairKey {
    pub fn new(service: impl Into<String>, client: impl Into<String>) -> Self {
        PairKey { service: service.into(), client: client.into() }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.service, self.client)
    }
}

/// `(trial_index, population_index)`.
pub type PopulationKey = (usize, usize);

/// Records grouped by pair, then by population key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupedRecords {
    pub pairs: BTreeMap<PairKey, BTreeMap<PopulationKey, TrialRecord>>,
}

impl GroupedRecords {
    pub fn insert(&mut self, record: TrialRecord) -> Option<TrialRecord> {
        let pair = PairKey::new(&record.service_label, &record.client_label);
        self.pairs
            .entry(pair)
            .or_default()
            .insert((record.trial_index, record.population_index), record)
    }

    pub fn len(&self) -> usize {
        self.pairs.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, pair: &PairKey) -> usize {
        self.pairs.get(pair).map_or(0, BTreeMap::len)
    }
}

impl FromIterator<TrialRecord> for GroupedRecords {
    fn from_iter<T: IntoIterator<Item = TrialRecord>>(iter: T) -> Self {
        let mut g = GroupedRecords::default();
        for r in iter {
            g.insert(r);
        }
        g
    }
}

/// Expands shell-style patterns; plain paths pass through untouched.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>, AnalysisError> {
    let mut out = Vec::new();
    for p in patterns {
        if !p.contains(['*', '?', '[']) {
            out.push(PathBuf::from(p));
            continue;
        }
        let err = |message: String| AnalysisError::Pattern { pattern: p.clone(), message };
        let mut matched: Vec<PathBuf> = glob::glob(p)
            .map_err(|e| err(e.to_string()))?
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        if matched.is_empty() {
            return Err(err("matched no files".into()));
        }
        matched.sort();
        out.extend(matched);
    }
    Ok(out)
}

/// Loads every record from every file, failing on the first bad line.
pub fn load_records<P: AsRef<Path>>(paths: &[P]) -> Result<GroupedRecords, AnalysisError> {
    let mut grouped = GroupedRecords::default();
    for path in paths {
        let path = path.as_ref();
        for record in read_trial_records(path)? {
            let (pair, t, p) = (
                PairKey::new(&record.service_label, &record.client_label),
                record.trial_index,
                record.population_index,
            );
            if grouped.insert(record).is_some() {
                return Err(AnalysisError::Duplicate {
                    pair,
                    trial_index: t,
                    population_index: p,
                    path: path.to_path_buf(),
                });
            }
        }
    }
    Ok(grouped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// A population fails when no generation-0 fitness exceeds this.
    pub threshold: f64,
    /// Optional stricter rule: generation 0 must contain a fitness at least
    /// this high (the seed's own score).
    pub min_seed_fitness: Option<f64>,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { threshold: 1.0, min_seed_fitness: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum RemovalCause {
    /// Generation 0 never exceeded the threshold.
    Direct { max_fitness: f64 },
    /// Generation 0 lacked a seed-quality individual.
    SeedCheck { max_fitness: f64 },
    /// Removed because the same population failed in another pair.
    Matched { source: PairKey },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub pair: PairKey,
    pub trial_index: usize,
    pub population_index: usize,
    #[serde(flatten)]
    pub cause: RemovalCause,
}

fn direct_failure(record: &TrialRecord, opts: &FilterOptions) -> Option<RemovalCause> {
    let max_fitness = record.first_generation_max().unwrap_or(f64::NEG_INFINITY);
    if max_fitness <= opts.threshold {
        return Some(RemovalCause::Direct { max_fitness });
    }
    match opts.min_seed_fitness {
        Some(seed) if max_fitness < seed => Some(RemovalCause::SeedCheck { max_fitness }),
        _ => None,
    }
}

/// Removes failed populations and, for each, the same-keyed population in
/// every other pair. Returns the survivors and a log of every removal.
pub fn filter_failed(grouped: &GroupedRecords, opts: &FilterOptions) -> (GroupedRecords, Vec<Removal>) {
    // First failing pair per population key, in pair order.
    let mut failed: BTreeMap<PopulationKey, PairKey> = BTreeMap::new();
    let mut log = Vec::new();
    for (pair, pops) in &grouped.pairs {
        for (key, record) in pops {
            if let Some(cause) = direct_failure(record, opts) {
                failed.entry(*key).or_insert_with(|| pair.clone());
                log.push(Removal {
                    pair: pair.clone(),
                    trial_index: key.0,
                    population_index: key.1,
                    cause,
                });
            }
        }
    }

    let mut survivors = GroupedRecords::default();
    for (pair, pops) in &grouped.pairs {
        let kept = survivors.pairs.entry(pair.clone()).or_default();
        for (key, record) in pops {
            let Some(source) = failed.get(key) else {
                kept.insert(*key, record.clone());
                continue;
            };
            let already_logged = log
                .iter()
                .any(|r| &r.pair == pair && (r.trial_index, r.population_index) == *key);
            if !already_logged {
                log.push(Removal {
                    pair: pair.clone(),
                    trial_index: key.0,
                    population_index: key.1,
                    cause: RemovalCause::Matched { source: source.clone() },
                });
            }
        }
    }
    (survivors, log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistribution {
    pub service_label: String,
    pub client_label: String,
    pub runtimes: Vec<f64>,
    pub n_removed: usize,
}

impl PairDistribution {
    pub fn key(&self) -> PairKey {
        PairKey::new(&self.service_label, &self.client_label)
    }
}

/// Runtime samples per pair, in pair order.
pub fn distributions(survivors: &GroupedRecords, removals: &[Removal]) -> Vec<PairDistribution> {
    survivors
        .pairs
        .iter()
        .map(|(pair, pops)| PairDistribution {
            service_label: pair.service.clone(),
            client_label: pair.client.clone(),
            runtimes: pops.values().map(|r| r.runtime_s).collect(),
            n_removed: removals.iter().filter(|r| &r.pair == pair).count(),
        })
        .collect()
}

/// Load, filter, and report in one go, writing all outputs to `out_dir`.
pub fn analyze<P: AsRef<Path>>(
    paths: &[P],
    opts: &FilterOptions,
    alpha: f64,
    out_dir: &Path,
) -> Result<Report, AnalysisError> {
    let grouped = load_records(paths)?;
    let (survivors, removals) = filter_failed(&grouped, opts);
    let pairs: Vec<PairDistribution> = distributions(&survivors, &removals)
        .into_iter()
        .filter(|d| !d.runtimes.is_empty())
        .collect();
    let report = build_report(&pairs, alpha, removals)?;
    write_report(&report, out_dir)?;
    Ok(report)
}
