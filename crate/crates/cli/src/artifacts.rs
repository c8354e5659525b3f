//! Artifact serialization: CSV documents with reproduction metadata,
//! JSON reports, and sweep plot data.
//!
//! Every CSV starts with `#`-prefixed comment lines carrying the seed and
//! the configuration hash, so an artifact alone identifies the run that
//! made it. The `generated_at` line is the only nondeterministic content;
//! reruns with the same seed are bit-identical apart from it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mimoflow_core::flowsim::{SweepTable, Verdict};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct CsvDoc {
    /// Leading `#` comment lines (without the prefix).
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Trailing `#` comment lines, e.g. sweep brackets.
    pub footers: Vec<String>,
}

impl CsvDoc {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Self {
        CsvDoc {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            footers: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn footer(&mut self, line: impl Into<String>) {
        self.footers.push(line.into());
    }

    pub fn row<S: Into<String>>(&mut self, cells: Vec<S>) {
        let cells: Vec<String> = cells.into_iter().map(Into::into).collect();
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    /// Renders the document; `stamp` appends the wall-clock metadata line
    /// that determinism comparisons must skip.
    pub fn render(&self, stamp: bool) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        if stamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            out.push_str(&format!("# generated_at={now}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        for f in &self.footers {
            out.push_str("# ");
            out.push_str(f);
            out.push('\n');
        }
        out
    }
}

/// SHA-256 of the effective configuration's canonical JSON bytes. The
/// output directory is blanked first: it says where artifacts land, not
/// which experiment ran, and the same run into two directories must hash
/// the same.
pub fn config_sha256(cfg: &ExperimentConfig) -> String {
    let mut keyed = cfg.clone();
    keyed.out_dir = String::new();
    let bytes = serde_json::to_vec(&keyed).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_text(path: &PathBuf, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

pub(crate) fn csv_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::StableEvidence => "stable",
        Verdict::UnstableEvidence => "unstable",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Boundary data for external plotting: one scale column plus one verdict
/// column per policy, and one bracket footer per policy.
pub fn emit_plot_data(tables: &[(String, SweepTable)]) -> Result<CsvDoc, CliError> {
    if tables.is_empty() || tables.iter().any(|(_, t)| t.rows.is_empty()) {
        return Err(CliError::EmptyTable);
    }
    let scales: Vec<f64> = tables[0].1.rows.iter().map(|r| r.scale).collect();
    for (label, t) in tables {
        let s: Vec<f64> = t.rows.iter().map(|r| r.scale).collect();
        if s != scales {
            return Err(CliError::Runtime(format!(
                "plot tables must share one scale grid ({label} differs)"
            )));
        }
    }
    let mut header = vec!["scale".to_string()];
    for (label, _) in tables {
        header.push(format!("verdict_{label}"));
    }
    let mut doc = CsvDoc::new(header);
    for (i, &scale) in scales.iter().enumerate() {
        let mut row = vec![format!("{scale}")];
        for (_, t) in tables {
            row.push(verdict_label(t.rows[i].verdict).to_string());
        }
        doc.row(row);
    }
    for (label, t) in tables {
        let lo = t.largest_stable.map_or("none".to_string(), |v| format!("{v}"));
        let hi = t.smallest_unstable.map_or("none".to_string(), |v| format!("{v}"));
        doc.footer(format!("bracket_{label}: largest_stable={lo} smallest_unstable={hi}"));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimoflow_core::flowsim::{StabilityVerdict, SweepRow};

    fn table(verdicts: &[Verdict]) -> SweepTable {
        let rows: Vec<SweepRow> = verdicts
            .iter()
            .enumerate()
            .map(|(i, &v)| SweepRow {
                scale: (i + 1) as f64,
                verdict: v,
                mean_total_queue: i as f64,
                per_seed: vec![StabilityVerdict {
                    mean_total_queue: i as f64,
                    growth_slope: 0.0,
                    verdict: v,
                }],
            })
            .collect();
        let largest_stable = rows
            .iter()
            .filter(|r| r.verdict == Verdict::StableEvidence)
            .map(|r| r.scale)
            .next_back();
        let smallest_unstable = rows
            .iter()
            .filter(|r| r.verdict == Verdict::UnstableEvidence)
            .map(|r| r.scale)
            .next();
        SweepTable { rows, largest_stable, smallest_unstable }
    }

    #[test]
    fn empty_tables_are_rejected() {
        assert!(matches!(emit_plot_data(&[]), Err(CliError::EmptyTable)));
        let empty = SweepTable { rows: vec![], largest_stable: None, smallest_unstable: None };
        assert!(matches!(
            emit_plot_data(&[("centralized".into(), empty)]),
            Err(CliError::EmptyTable)
        ));
    }

    #[test]
    fn single_policy_five_points_gives_five_rows_and_a_bracket() {
        use Verdict::*;
        let t = table(&[
            StableEvidence,
            StableEvidence,
            Inconclusive,
            UnstableEvidence,
            UnstableEvidence,
        ]);
        let doc = emit_plot_data(&[("centralized".into(), t)]).unwrap();
        assert_eq!(doc.rows.len(), 5);
        assert_eq!(doc.header, vec!["scale", "verdict_centralized"]);
        assert_eq!(doc.footers.len(), 1);
        assert!(doc.footers[0].contains("largest_stable=2"));
        assert!(doc.footers[0].contains("smallest_unstable=4"));
    }

    #[test]
    fn paired_policies_share_scales_and_emit_two_footers() {
        use Verdict::*;
        let a = table(&[StableEvidence, UnstableEvidence]);
        let b = table(&[StableEvidence, UnstableEvidence]);
        let doc =
            emit_plot_data(&[("centralized".into(), a), ("distributed_stale".into(), b)])
                .unwrap();
        assert_eq!(doc.header.len(), 3);
        assert_eq!(doc.rows.len(), 2);
        assert_eq!(doc.footers.len(), 2);
        // Equal verdict columns for the paired run.
        for row in &doc.rows {
            assert_eq!(row[1], row[2]);
        }
    }

    #[test]
    fn render_places_metadata_before_header_and_footers_after_rows() {
        let mut doc = CsvDoc::new(vec!["a", "b"]);
        doc.comment("seed=7 config_sha256=abc");
        doc.row(vec!["1", "2"]);
        doc.footer("bracket: none");
        let text = doc.render(true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=7 config_sha256=abc");
        assert!(lines[1].starts_with("# generated_at="));
        assert_eq!(lines[2], "a,b");
        assert_eq!(lines[3], "1,2");
        assert_eq!(lines[4], "# bracket: none");
        // Without the stamp the render is fully deterministic.
        let a = doc.render(false);
        let b = doc.render(false);
        assert_eq!(a, b);
    }
}
