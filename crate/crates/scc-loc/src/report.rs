//! Report emission: JSON lines for machines, a fixed-width table for people,
//! optional CSV for plotting, and a run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::{self, DatasetError};
use crate::pipeline::{EvalReport, QueryRecord, Summary};

pub const REPORT_JSONL: &str = "report.jsonl";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const RUN_MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

/// Stage implementation versions recorded in every run manifest.
pub const STAGE_VERSIONS: [(&str, &str); 5] = [
    ("retrieval", "1"),
    ("sgva", "1"),
    ("csatsf", "1"),
    ("cdraps", "1"),
    ("metrics", "1"),
];

#[derive(Serialize)]
#[serde(untagged)]
enum Line<'a> {
    Record(&'a QueryRecord),
    Summary { summary: &'a Summary },
}

/// One record per line, then a summary line when the run was evaluated.
pub fn to_jsonl(report: &EvalReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        out.push_str(&serde_json::to_string(&Line::Record(r)).expect("records serialize"));
        out.push('\n');
    }
    if let Some(s) = &report.summary {
        out.push_str(
            &serde_json::to_string(&Line::Summary { summary: s }).expect("summary serializes"),
        );
        out.push('\n');
    }
    out
}

/// Parses records back from a JSON-lines report, skipping the summary.
pub fn records_from_jsonl(text: &str) -> Result<Vec<QueryRecord>, serde_json::Error> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("summary").is_none() {
            out.push(serde_json::from_value(v)?);
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

pub fn summary_table(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "queries {}  localized {}  seed {}",
        s.queries, s.localized, s.seed
    );
    for (r, a) in &s.acc_at_r {
        let _ = writeln!(out, "Acc@{r:<4} {a:7.2} %");
    }
    for (n, v) in &s.recall_at_n {
        let _ = writeln!(out, "Recall@{n:<2} {v:6.2} %");
    }
    let pen = if s.penalize_failures {
        " (failures penalized)"
    } else {
        ""
    };
    let _ = writeln!(
        out,
        "ME {:.3} m  SD {:.3} m{pen}",
        s.mean_error, s.std_error
    );
    let _ = writeln!(out, "config {}", s.config_hash);
    out
}

pub fn to_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>10} {:>10} {:>9} {:>4} {:>5} {:>8}  note",
        "query", "x", "y", "error", "hit", "cand", "naive"
    );
    for r in &report.records {
        let (x, y) = r.selected.map_or(("-".into(), "-".into()), |p| {
            (format!("{:.2}", p[0]), format!("{:.2}", p[1]))
        });
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>10} {:>9} {:>4} {:>5} {:>8}  {}",
            r.id,
            x,
            y,
            opt(r.error, 3),
            r.hit_rank.map_or("-".into(), |h| h.to_string()),
            r.selected_rank.map_or("-".into(), |k| k.to_string()),
            opt(r.naive_error, 2),
            match (&r.failure, r.penalized) {
                (Some(f), true) => format!("{f} [penalized]"),
                (Some(f), false) => f.clone(),
                _ => String::new(),
            }
        );
    }
    if let Some(s) = &report.summary {
        out.push('\n');
        out.push_str(&summary_table(s));
    }
    out
}

pub fn to_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "id,x,y,error,penalized,hit_rank,selected_rank,naive_error,valid_candidates,failure\n",
    );
    for r in &report.records {
        let (x, y) = r.selected.map_or((String::new(), String::new()), |p| {
            (p[0].to_string(), p[1].to_string())
        });
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.id,
            x,
            y,
            r.error.map_or(String::new(), |e| e.to_string()),
            r.penalized,
            r.hit_rank.map_or(String::new(), |h| h.to_string()),
            r.selected_rank.map_or(String::new(), |k| k.to_string()),
            r.naive_error.map_or(String::new(), |e| e.to_string()),
            r.candidates.iter().filter(|c| c.valid).count(),
            r.failure.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    out
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_hash: String,
    seed: u64,
    engine_version: &'a str,
    stages: std::collections::BTreeMap<&'a str, &'a str>,
    /// Database descriptors are pooled over the stored tiles, not the
    /// enlarged crops.
    descriptor_source: &'a str,
    config: &'a PipelineConfig,
}

fn write(path: &Path, text: &str) -> Result<(), DatasetError> {
    std::fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the report files into `out`.
pub fn write_all(
    out: &Path,
    report: &EvalReport,
    cfg: &PipelineConfig,
    emit_csv: bool,
) -> Result<(), DatasetError> {
    dataset::create_dir(out)?;
    write(&out.join(REPORT_JSONL), &to_jsonl(report))?;
    write(&out.join(REPORT_TXT), &to_table(report))?;
    if emit_csv {
        write(&out.join(REPORT_CSV), &to_csv(report))?;
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        seed: cfg.run.seed,
        engine_version: env!("CARGO_PKG_VERSION"),
        stages: STAGE_VERSIONS.into_iter().collect(),
        descriptor_source: "stored tile",
        config: cfg,
    };
    dataset::write_json(&out.join(RUN_MANIFEST), &manifest)?;
    dataset::write_json(&out.join(TIMINGS), &report.wall_times)
}
