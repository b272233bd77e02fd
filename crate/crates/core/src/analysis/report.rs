use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use super::stats::{summary_stats, BinSpec, SummaryStats};
use super::{AnalysisError, PairDistribution, PairKey, Removal, RemovalCause};
use crate::orchestrator::records_file_name;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: PairKey,
    pub stats: SummaryStats,
    pub n_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub a: PairKey,
    pub b: PairKey,
    pub result: KsResult,
    pub significant: bool,
}

/// Services for one client ranked by mean runtime, fastest first. Only
/// produced when every adjacent pair in the ranking differs significantly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientOrdering {
    pub client: String,
    pub services_fastest_first: Vec<String>,
    pub mean_s: Vec<f64>,
}

impl ClientOrdering {
    /// `slowest > ... > fastest`, by expected runtime.
    pub fn statement(&self) -> String {
        let names: Vec<&str> = self.services_fastest_first.iter().rev().map(String::as_str).collect();
        names.join(" > ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    pub pair: PairKey,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub summaries: Vec<PairSummary>,
    pub ks: Vec<KsEntry>,
    pub orderings: Vec<ClientOrdering>,
    /// Clients with several services whose ranking is not supported.
    pub unordered_clients: Vec<String>,
    pub bins: Option<BinSpec>,
    pub histograms: Vec<PairHistogram>,
    pub removals: Vec<Removal>,
}

impl Report {
    pub fn ks_between(&self, a: &PairKey, b: &PairKey) -> Option<&KsEntry> {
        self.ks
            .iter()
            .find(|e| (&e.a == a && &e.b == b) || (&e.a == b && &e.b == a))
    }

    pub fn ordering_for(&self, client: &str) -> Option<&ClientOrdering> {
        self.orderings.iter().find(|o| o.client == client)
    }
}

pub fn build_report(pairs: &[PairDistribution], alpha: f64, removals: Vec<Removal>) -> Result<Report, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::NoPairs);
    }
    let summaries = pairs
        .iter()
        .map(|d| {
            Ok(PairSummary {
                pair: d.key(),
                stats: summary_stats(&d.runtimes)?,
                n_removed: d.n_removed,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let mut ks = Vec::new();
    for (i, a) in pairs.iter().enumerate() {
        for b in &pairs[i + 1..] {
            let result = ks_two_sample(&a.runtimes, &b.runtimes)?;
            ks.push(KsEntry {
                a: a.key(),
                b: b.key(),
                significant: result.is_significant(alpha),
                result,
            });
        }
    }

    let mut by_client: BTreeMap<&str, Vec<&PairSummary>> = BTreeMap::new();
    for s in &summaries {
        by_client.entry(s.pair.client.as_str()).or_default().push(s);
    }
    let mut orderings = Vec::new();
    let mut unordered_clients = Vec::new();
    for (client, mut group) in by_client {
        if group.len() < 2 {
            continue;
        }
        group.sort_by(|x, y| x.stats.mean_s.total_cmp(&y.stats.mean_s));
        let supported = group.windows(2).all(|w| {
            ks.iter()
                .find(|e| (e.a == w[0].pair && e.b == w[1].pair) || (e.a == w[1].pair && e.b == w[0].pair))
                .is_some_and(|e| e.significant)
        });
        if supported {
            orderings.push(ClientOrdering {
                client: client.to_string(),
                services_fastest_first: group.iter().map(|s| s.pair.service.clone()).collect(),
                mean_s: group.iter().map(|s| s.stats.mean_s).collect(),
            });
        } else {
            unordered_clients.push(client.to_string());
        }
    }

    let bins = BinSpec::from_samples(pairs.iter().map(|d| d.runtimes.as_slice()));
    let histograms = match &bins {
        Some(spec) => pairs
            .iter()
            .map(|d| PairHistogram { pair: d.key(), counts: spec.counts(&d.runtimes) })
            .collect(),
        None => Vec::new(),
    };

    Ok(Report {
        alpha,
        summaries,
        ks,
        orderings,
        unordered_clients,
        bins,
        histograms,
        removals,
    })
}

pub fn render_markdown(report: &Report) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Runtime benchmark report\n");

    let _ = writeln!(md, "## Runtime distributions\n");
    let _ = writeln!(md, "| Pair | Mean (s) | Min (s) | Max (s) | n | removed |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|---:|");
    for s in &report.summaries {
        let _ = writeln!(
            md,
            "| {} | {:.3} | {:.3} | {:.3} | {} | {} |",
            s.pair, s.stats.mean_s, s.stats.min_s, s.stats.max_s, s.stats.n, s.n_removed
        );
    }

    let _ = writeln!(md, "\n## Two-sample Kolmogorov-Smirnov tests (alpha = {})\n", report.alpha);
    if report.ks.is_empty() {
        let _ = writeln!(md, "Only one pair; nothing to compare.");
    } else {
        let _ = writeln!(md, "| Pair A | Pair B | D | p | significant |");
        let _ = writeln!(md, "|---|---|---:|---:|:---:|");
        for e in &report.ks {
            let _ = writeln!(
                md,
                "| {} | {} | {:.4} | {:.3e} | {} |",
                e.a,
                e.b,
                e.result.d_statistic,
                e.result.p_value,
                if e.significant { "yes" } else { "no" }
            );
        }
    }

    let _ = writeln!(md, "\n## Service ordering by expected runtime\n");
    if report.orderings.is_empty() && report.unordered_clients.is_empty() {
        let _ = writeln!(md, "No client was measured against more than one service.");
    }
    for o in &report.orderings {
        let _ = writeln!(md, "- {}: {}", o.client, o.statement());
    }
    for c in &report.unordered_clients {
        let _ = writeln!(md, "- {c}: no ordering claimed (not every adjacent difference is significant)");
    }

    let _ = writeln!(md, "\n## Filtered populations\n");
    if report.removals.is_empty() {
        let _ = writeln!(md, "None.");
    }
    for r in &report.removals {
        let why = match &r.cause {
            RemovalCause::Direct { max_fitness } => format!("generation-0 max fitness {max_fitness}"),
            RemovalCause::SeedCheck { max_fitness } => {
                format!("no seed-quality individual in generation 0 (max {max_fitness})")
            }
            RemovalCause::Matched { source } => format!("matched removal (failed in {source})"),
        };
        let _ = writeln!(md, "- {} trial {} population {}: {}", r.pair, r.trial_index, r.population_index, why);
    }

    if let Some(b) = &report.bins {
        let _ = writeln!(
            md,
            "\n## Histograms\n\n{} bins of {:.3} s over [{:.3}, {:.3}] s (Freedman-Diaconis width {:.3} s), one `hist_<service>_<client>.csv` per pair.",
            b.n_bins,
            b.width(),
            b.low,
            b.high,
            b.fd_width
        );
    }
    md
}

pub fn summary_csv(report: &Report) -> String {
    let mut out = String::from("service,client,n,n_removed,mean_s,min_s,max_s\n");
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{:.3},{:.3}",
            csv_field(&s.pair.service),
            csv_field(&s.pair.client),
            s.stats.n,
            s.n_removed,
            s.stats.mean_s,
            s.stats.min_s,
            s.stats.max_s
        );
    }
    out
}

pub fn ks_csv(report: &Report) -> String {
    let mut out = String::from("service_a,client_a,service_b,client_b,n1,n2,d_statistic,p_value,significant\n");
    for e in &report.ks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&e.a.service),
            csv_field(&e.a.client),
            csv_field(&e.b.service),
            csv_field(&e.b.client),
            e.result.n1,
            e.result.n2,
            e.result.d_statistic,
            e.result.p_value,
            e.significant
        );
    }
    out
}

pub fn histogram_csv(spec: &BinSpec, hist: &PairHistogram) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, c) in hist.counts.iter().enumerate() {
        let (lo, hi) = spec.edges(i);
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `report.md`, `summary.csv`, `ks_matrix.csv` and one
/// `hist_<service>_<client>.csv` per pair.
pub fn write_report(report: &Report, out_dir: &Path) -> Result<(), AnalysisError> {
    let write = |name: &str, text: String| {
        let path = out_dir.join(name);
        std::fs::write(&path, text).map_err(|source| AnalysisError::Write { path, source })
    };
    std::fs::create_dir_all(out_dir).map_err(|source| AnalysisError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write("report.md", render_markdown(report))?;
    write("summary.csv", summary_csv(report))?;
    write("ks_matrix.csv", ks_csv(report))?;
    if let Some(spec) = &report.bins {
        for h in &report.histograms {
            let stem = records_file_name(&h.pair.service, &h.pair.client);
            let stem = stem.trim_end_matches(".jsonl");
            write(&format!("hist_{stem}.csv"), histogram_csv(spec, h))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(service: &str, client: &str, runtimes: &[f64]) -> PairDistribution {
        PairDistribution {
            service_label: service.into(),
            client_label: client.into(),
            runtimes: runtimes.to_vec(),
            n_removed: 0,
        }
    }

    #[test]
    fn single_pair_has_no_comparisons() {
        let r = build_report(&[dist("s", "c", &[1.0, 2.0, 3.0])], 0.05, vec![]).unwrap();
        assert_eq!(r.summaries.len(), 1);
        assert!(r.ks.is_empty());
        assert!(r.orderings.is_empty());
        assert!(render_markdown(&r).contains("| s/c | 2.000 | 1.000 | 3.000 | 3 | 0 |"));
    }

    #[test]
    fn separated_pairs_are_ordered() {
        let fast: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.01).collect();
        let slow: Vec<f64> = (0..20).map(|i| 3.0 + i as f64 * 0.01).collect();
        let r = build_report(&[dist("slow", "c", &slow), dist("fast", "c", &fast)], 0.05, vec![]).unwrap();
        assert!(r.ks[0].significant);
        let o = r.ordering_for("c").unwrap();
        assert_eq!(o.services_fastest_first, vec!["fast", "slow"]);
        assert_eq!(o.statement(), "slow > fast");
    }

    #[test]
    fn identical_pairs_get_no_claim() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let r = build_report(&[dist("a", "c", &x), dist("b", "c", &x)], 0.05, vec![]).unwrap();
        assert!(!r.ks[0].significant);
        assert!(r.orderings.is_empty());
        assert_eq!(r.unordered_clients, vec!["c"]);
    }

    #[test]
    fn paper_style_table_formatting() {
        let r = build_report(&[dist("PaaS3", "Client-A", &[265.7, 271.678, 271.678, 348.2])], 0.05, vec![])
            .unwrap();
        assert!(render_markdown(&r).contains("| PaaS3/Client-A | 289.314 | 265.700 | 348.200 |"));
        assert!(summary_csv(&r).contains("PaaS3,Client-A,4,0,289.314,265.700,348.200"));
    }

    #[test]
    fn writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(&[dist("a", "x", &[1.0, 2.0]), dist("b", "x", &[3.0, 4.0])], 0.05, vec![]).unwrap();
        write_report(&r, dir.path()).unwrap();
        for f in ["report.md", "summary.csv", "ks_matrix.csv", "hist_a_x.csv", "hist_b_x.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let hist = std::fs::read_to_string(dir.path().join("hist_a_x.csv")).unwrap();
        let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 2);
    }
}
