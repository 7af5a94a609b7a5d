//! Table rendering: loads cell logs, computes aggregates, and emits the
//! eight report tables (per-scenario by-ablation and by-attack, plus the two
//! global tables) as aligned text and CSV.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::metrics::{cell_aggregate, group_rows, CellAggregate, GroupRow};
use crate::record::{parse_log, LogError, LogLine, RunRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run logs found in {0}")]
    NoLogs(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Loads every cell log in a directory, keyed by (scenario, ablation,
/// attack). Breaker-reset lines are audit events, not runs, and are skipped.
pub fn load_cells(dir: &Path) -> Result<Vec<Vec<RunRecord>>, ReportError> {
    let mut cells: BTreeMap<(String, String, String), Vec<RunRecord>> = BTreeMap::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|source| ReportError::Io { path: dir.display().to_string(), source })?;
    for entry in entries {
        let entry =
            entry.map_err(|source| ReportError::Io { path: dir.display().to_string(), source })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        for line in parse_log(&path)? {
            if let LogLine::Run(record) = line {
                let key = (
                    record.scenario.clone(),
                    record.ablation.clone(),
                    crate::config::attack_as_str(record.attack).to_string(),
                );
                cells.entry(key).or_default().push(record);
            }
        }
    }
    if cells.is_empty() {
        return Err(ReportError::NoLogs(dir.display().to_string()));
    }
    Ok(cells.into_values().collect())
}

pub fn aggregates_from_cells(cells: &[Vec<RunRecord>]) -> Vec<CellAggregate> {
    cells.iter().map(|runs| cell_aggregate(runs)).collect()
}

pub fn aggregates_from_dir(dir: &Path) -> Result<Vec<CellAggregate>, ReportError> {
    Ok(aggregates_from_cells(&load_cells(dir)?))
}

fn fmt3(value: f64) -> String {
    format!("{value:.3}")
}

fn fmt_asr(asr: Option<f64>) -> String {
    match asr {
        Some(value) => fmt3(value),
        None => "---".to_string(),
    }
}

/// Ablation ids sort B0, B1, ..., B12 numerically, not lexically.
fn row_sort_key(key: &str) -> (u32, String) {
    if let Some(rest) = key.strip_prefix('B') {
        if let Ok(n) = rest.parse::<u32>() {
            return (n, String::new());
        }
    }
    (u32::MAX, key.to_string())
}

fn row_label(key: &str) -> String {
    // the empty-pool configuration is a degenerate boundary case; mark it so
    // its all-zero row is not misread as a governance result
    if key == "B8" {
        format!("{key} (boundary)")
    } else {
        key.to_string()
    }
}

pub fn render_text_table(title: &str, rows: &[GroupRow]) -> String {
    let mut sorted: Vec<&GroupRow> = rows.iter().collect();
    sorted.sort_by_key(|r| row_sort_key(&r.key));
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!(
        "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
        "key", "SRI", "FE", "GD", "QDV", "ASR", "runs"
    ));
    for row in sorted {
        out.push_str(&format!(
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            row_label(&row.key),
            fmt3(row.sri),
            fmt3(row.fe),
            fmt3(row.gd),
            fmt3(row.qdv),
            fmt_asr(row.asr),
            row.n_runs
        ));
    }
    out
}

pub fn render_csv_table(rows: &[GroupRow]) -> String {
    let mut sorted: Vec<&GroupRow> = rows.iter().collect();
    sorted.sort_by_key(|r| row_sort_key(&r.key));
    let mut out = String::from("key,sri,fe,gd,qdv,asr,n_runs\n");
    for row in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.key,
            fmt3(row.sri),
            fmt3(row.fe),
            fmt3(row.gd),
            fmt3(row.qdv),
            fmt_asr(row.asr),
            row.n_runs
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReportTable {
    /// File stem, e.g. "fraud_detection_by_ablation" or "global_by_attack".
    pub name: String,
    pub title: String,
    pub rows: Vec<GroupRow>,
}

/// Builds the eight standard tables from per-cell aggregates.
pub fn build_tables(cells: &[CellAggregate]) -> Vec<ReportTable> {
    let mut scenarios: Vec<String> = cells.iter().map(|c| c.scenario.clone()).collect();
    scenarios.sort();
    scenarios.dedup();

    let mut tables = Vec::new();
    for scenario in &scenarios {
        let scoped: Vec<CellAggregate> =
            cells.iter().filter(|c| &c.scenario == scenario).cloned().collect();
        tables.push(ReportTable {
            name: format!("{scenario}_by_ablation"),
            title: format!("Mean metrics by ablation — {scenario}"),
            rows: group_rows(&scoped, |c| c.ablation.clone()),
        });
        tables.push(ReportTable {
            name: format!("{scenario}_by_attack"),
            title: format!("Mean metrics by attack — {scenario}"),
            rows: group_rows(&scoped, |c| c.attack.clone()),
        });
    }
    tables.push(ReportTable {
        name: "global_by_ablation".to_string(),
        title: "Global mean metrics by ablation across all scenarios".to_string(),
        rows: group_rows(cells, |c| c.ablation.clone()),
    });
    tables.push(ReportTable {
        name: "global_by_attack".to_string(),
        title: "Global mean metrics by attack across all scenarios".to_string(),
        rows: group_rows(cells, |c| c.attack.clone()),
    });
    tables
}

/// Writes report.txt plus one CSV per table into `out_dir`.
pub fn write_report(cells: &[CellAggregate], out_dir: &Path) -> Result<Vec<String>, ReportError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|source| ReportError::Io { path: out_dir.display().to_string(), source })?;
    let tables = build_tables(cells);
    let mut text = String::new();
    let mut written = Vec::new();
    for table in &tables {
        text.push_str(&render_text_table(&table.title, &table.rows));
        text.push('\n');
        let csv_path = out_dir.join(format!("{}.csv", table.name));
        std::fs::write(&csv_path, render_csv_table(&table.rows))
            .map_err(|source| ReportError::Io { path: csv_path.display().to_string(), source })?;
        written.push(csv_path.display().to_string());
    }
    let text_path = out_dir.join("report.txt");
    std::fs::write(&text_path, text)
        .map_err(|source| ReportError::Io { path: text_path.display().to_string(), source })?;
    written.push(text_path.display().to_string());
    Ok(written)
}
