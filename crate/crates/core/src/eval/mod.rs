//! Metric suite, end-to-end pipeline and report tables.

pub mod metrics;
pub mod pipeline;

pub use metrics::{
    ap_from_scores, average_precision, collision_rate, epa, greedy_match, min_ade_fde, MatchResult,
};
pub use pipeline::{
    run_batch, run_pipeline, scenario_batch, sweep, Metric, NoiseAxis, NoiseGrid, Perception, PipelineConfig,
    PipelineOutput, Report, Summary,
};

use std::path::{Path, PathBuf};

use crate::Result;

fn cell(v: Option<f64>, percent: bool) -> String {
    match v {
        None => "/".to_string(),
        Some(x) if percent => format!("{:.1}", 100.0 * x),
        Some(x) => format!("{x:.2}"),
    }
}

/// Summary table with one row per labelled batch: AP and EPA in percent,
/// displacement errors in metres, TOR and CR as fractions.
pub fn format_table(rows: &[(String, Summary)]) -> String {
    let header = ["Setting", "N", "AP@0.5", "minADE", "minFDE", "EPA", "TOR", "CR"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|(label, s)| {
            [
                label.clone(),
                s.scenarios.to_string(),
                cell(s.ap, true),
                cell(s.min_ade, false),
                cell(s.min_fde, false),
                cell(s.epa, true),
                cell(s.tor, false),
                cell(s.cr, false),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(header.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for row in &body {
        out.push(line(row.iter().map(String::as_str).collect()));
    }
    out.join("\n") + "\n"
}

/// Every `report.json` under `dir`, in path order.
pub fn find_reports(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.as_ref().to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_marks_absent_metrics() {
        let s = Summary::of(&[]);
        let t = format_table(&[("empty".into(), s)]);
        assert!(t.lines().nth(2).unwrap().contains('/'));
        assert_eq!(t.lines().count(), 3);
    }
}
