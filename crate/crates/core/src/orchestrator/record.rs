//! Line-delimited JSON persistence of trial records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ga::{GenerationRecord, PopulationRun};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown schema_version {found} (expected {SCHEMA_VERSION})")]
    UnknownSchema {
        path: PathBuf,
        line: usize,
        found: u64,
    },
    #[error("failed to serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// One timed population run inside one trial of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub service_label: String,
    pub client_label: String,
    pub trial_index: usize,
    pub population_index: usize,
    pub rng_seed: u64,
    #[serde(with = "chrono::serde::ts_milliseconds")]
    pub start_ts: DateTime<Utc>,
    #[serde(with = "chrono::serde::ts_milliseconds")]
    pub end_ts: DateTime<Utc>,
    pub runtime_s: f64,
    pub generations: Vec<GenerationRecord>,
}

impl TrialRecord {
    pub fn from_run(
        service_label: &str,
        client_label: &str,
        trial_index: usize,
        population_index: usize,
        rng_seed: u64,
        run: PopulationRun,
    ) -> Self {
        TrialRecord {
            schema_version: SCHEMA_VERSION,
            service_label: service_label.to_string(),
            client_label: client_label.to_string(),
            trial_index,
            population_index,
            rng_seed,
            // Millisecond precision on disk.
            start_ts: truncate_ms(run.start_ts),
            end_ts: truncate_ms(run.end_ts),
            runtime_s: run.runtime_s,
            generations: run.generations,
        }
    }

    /// Highest fitness in generation 0, if recorded.
    pub fn first_generation_max(&self) -> Option<f64> {
        self.generations.first().map(|g| {
            g.individuals
                .iter()
                .map(|i| i.fitness)
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }
}

fn truncate_ms(ts: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(ts.timestamp_millis()).unwrap_or(ts)
}

/// File name used for a pair's records.
pub fn records_file_name(service_label: &str, client_label: &str) -> String {
    format!("{}_{}.jsonl", sanitize(service_label), sanitize(client_label))
}

pub(crate) fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' })
        .collect()
}

fn encode_line(record: &TrialRecord) -> Result<Vec<u8>, RecordError> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    Ok(line)
}

fn append_line(file: &mut File, path: &Path, line: &[u8]) -> Result<(), RecordError> {
    let io = |source| RecordError::Io { path: path.to_path_buf(), source };
    // One write call per line on an O_APPEND handle, then sync.
    file.write_all(line).map_err(io)?;
    file.sync_data().map_err(io)
}

/// Appends one record to `<out_dir>/<service>_<client>.jsonl`.
pub fn write_trial_record(record: &TrialRecord, out_dir: &Path) -> Result<PathBuf, RecordError> {
    let path = out_dir.join(records_file_name(&record.service_label, &record.client_label));
    let line = encode_line(record)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|source| RecordError::Io { path: path.clone(), source })?;
    append_line(&mut file, &path, &line)?;
    Ok(path)
}

/// Serializes appends from concurrent population runs onto one file handle.
#[derive(Debug)]
pub struct RecordWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordWriter {
    pub fn open(path: PathBuf) -> Result<Self, RecordError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| RecordError::Io { path: path.clone(), source })?;
        Ok(RecordWriter { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &TrialRecord) -> Result<(), RecordError> {
        let line = encode_line(record)?;
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        append_line(&mut file, &self.path, &line)
    }
}

/// Parses one JSONL line, checking the schema version before the shape.
pub fn parse_record_line(text: &str, path: &Path, line: usize) -> Result<TrialRecord, RecordError> {
    let parse_err = |message: String| RecordError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse_err("missing schema_version".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(RecordError::UnknownSchema {
            path: path.to_path_buf(),
            line,
            found: version,
        });
    }
    serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))
}

/// Reads every record in a JSONL file. Blank lines are skipped; anything
/// else that fails to parse is an error naming the 1-based line number.
pub fn read_trial_records(path: &Path) -> Result<Vec<TrialRecord>, RecordError> {
    let io = |source| RecordError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(&line, path, i + 1)?);
    }
    Ok(records)
}
