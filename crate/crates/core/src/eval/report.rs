//! Report files: `scores.json`, a markdown `summary.md` and one
//! `confusion_*.json` plot-data file per report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::MetricsReport;
use crate::data::Polarity;
use crate::error::{Error, Result};

/// Language order of the shared-task dataset table.
pub const TABLE_LANGUAGE_ORDER: [&str; 14] = [
    "amh", "arq", "hau", "ibo", "kin", "ary", "pt-MZ", "pcm", "orm", "swa", "tir", "twi", "tso", "yor",
];

/// Sort rank of a language code; unknown codes sort after the table,
/// alphabetically.
pub fn language_rank(language: &str) -> (usize, String) {
    let rank = TABLE_LANGUAGE_ORDER
        .iter()
        .position(|l| l.eq_ignore_ascii_case(language))
        .unwrap_or(TABLE_LANGUAGE_ORDER.len());
    (rank, language.to_string())
}

fn sorted(reports: &[MetricsReport]) -> Vec<&MetricsReport> {
    let mut out: Vec<&MetricsReport> = reports.iter().collect();
    out.sort_by(|a, b| {
        (a.subtask, language_rank(&a.language), &a.run, &a.config_hash, a.seed)
            .partial_cmp(&(b.subtask, language_rank(&b.language), &b.run, &b.config_hash, b.seed))
            .unwrap()
    });
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Markdown table of weighted-F1 and per-category F1 (in percent).
pub fn render_summary(reports: &[MetricsReport]) -> String {
    let mut out = String::from("| Subtask | Language | Run | w-F1 | F1 positive | F1 negative | F1 neutral | Config | Seed |\n");
    out.push_str("|---|---|---|---:|---:|---:|---:|---|---:|\n");
    for r in sorted(reports) {
        let f1 = |p: Polarity| r.per_class.get(p.as_str()).map_or(0.0, |m| m.f1);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.subtask.as_str(),
            r.language,
            r.run.as_deref().unwrap_or("-"),
            pct(r.weighted_f1),
            pct(f1(Polarity::Positive)),
            pct(f1(Polarity::Negative)),
            pct(f1(Polarity::Neutral)),
            r.config_hash,
            r.seed,
        );
    }
    out
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Writes the report files into `dir` and returns their paths.
pub fn emit_report(dir: &Path, reports: &[MetricsReport]) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ordered = sorted(reports);
    let write = |name: &str, contents: String| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let scores = serde_json::to_value(&ordered)?;
    let mut files = vec![
        write("scores.json", serde_json::to_string_pretty(&scores)? + "\n")?,
        write("summary.md", render_summary(reports))?,
    ];

    let mut used = BTreeSet::new();
    for r in ordered {
        let mut name = format!("confusion_{}_{}", r.subtask.as_str(), sanitize(&r.language));
        if let Some(run) = &r.run {
            name = format!("{name}_{}", sanitize(run));
        }
        if used.contains(&name) {
            name = format!("{name}_{}", r.config_hash);
        }
        let mut unique = name.clone();
        let mut n = 2;
        while !used.insert(unique.clone()) {
            unique = format!("{name}_{n}");
            n += 1;
        }
        let data = json!({
            "subtask": r.subtask.as_str(),
            "language": r.language,
            "labels": Polarity::ALL.iter().map(|p| p.as_str()).collect::<Vec<_>>(),
            "counts": r.confusion,
            "normalized": r.confusion_normalized,
        });
        files.push(write(&format!("{unique}.json"), serde_json::to_string_pretty(&data)? + "\n")?);
    }
    Ok(files)
}
