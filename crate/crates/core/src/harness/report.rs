//! Report emission: a machine-readable CSV and a human-readable markdown
//! table mirroring the benchmark layout. Output is byte-stable for a given
//! table: rows are ordered by model, method, and a fixed metric order, and
//! floats are printed with Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{CellStats, Method, ReportTable};

const METRIC_ORDER: [&str; 6] = [
    "mse_mean",
    "mse_sd",
    "w1",
    "train_time_s",
    "sample_time_s",
    "epoch_time_s",
];

fn sorted_cells(table: &ReportTable) -> Vec<&CellStats> {
    let mut cells: Vec<&CellStats> = table.cells.iter().collect();
    cells.sort_by_key(|c| (c.model, c.method));
    cells
}

/// Renders the CSV body: meta comments, a header, then
/// `model,method,metric,mean,std,unit` rows.
pub fn render_csv(table: &ReportTable) -> String {
    let mut out = String::new();
    let m = &table.meta;
    let _ = writeln!(out, "# scale_factor={}", m.scale_factor);
    let _ = writeln!(
        out,
        "# n_train={} n_val={} n_test={} n_cond_samples={} runs={} n_proj={} base_seed={}",
        m.n_train, m.n_val, m.n_test, m.n_cond_samples, m.runs, m.n_proj, m.base_seed
    );
    out.push_str("model,method,metric,mean,std,unit\n");
    for cell in sorted_cells(table) {
        for name in METRIC_ORDER {
            if let Some((_, mean, std, unit)) = cell.metrics.iter().find(|m| m.0 == name) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    cell.model, cell.method, name, mean, std, unit
                );
            }
        }
    }
    out
}

pub fn emit_csv(table: &ReportTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table))?;
    Ok(())
}

/// One parsed CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub model: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub unit: String,
}

/// Parses a report CSV back into rows (comment lines skipped).
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("model,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Argument(format!(
                "line {}: expected 6 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Argument(format!("line {}: bad float `{s}`: {e}", lineno + 1)))
        };
        rows.push(CsvRow {
            model: fields[0].to_string(),
            method: fields[1].to_string(),
            metric: fields[2].to_string(),
            mean: parse(fields[3])?,
            std: parse(fields[4])?,
            unit: fields[5].to_string(),
        });
    }
    Ok(rows)
}

fn cell_text(cell: &CellStats, metric: &str) -> String {
    match cell.metrics.iter().find(|m| m.0 == metric) {
        Some((_, mean, std, _)) if mean.is_finite() => format!("{mean:.4} ({std:.4})"),
        _ => "--".to_string(),
    }
}

/// Renders the markdown report: one row per (model, method) with
/// mean (std) cells, followed by skip and warning notes.
pub fn render_markdown(table: &ReportTable) -> String {
    let mut out = String::new();
    let m = &table.meta;
    out.push_str("# Conditional distribution benchmark\n\n");
    let _ = writeln!(
        out,
        "scale_factor={} n_train={} n_val={} n_test={} n_cond_samples={} runs={} n_proj={} base_seed={}\n",
        m.scale_factor, m.n_train, m.n_val, m.n_test, m.n_cond_samples, m.runs, m.n_proj, m.base_seed
    );
    out.push_str(
        "| Model | Method | Runs | MSE Mean | MSE Std | W-1 | Training Time (s) | Sampling Time (s) |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for cell in sorted_cells(table) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            cell.model,
            cell.method,
            cell.completed_runs,
            cell_text(cell, "mse_mean"),
            cell_text(cell, "mse_sd"),
            cell_text(cell, "w1"),
            cell_text(cell, "train_time_s"),
            cell_text(cell, "sample_time_s"),
        );
    }
    let epoch_cells: Vec<&CellStats> = sorted_cells(table)
        .into_iter()
        .filter(|c| c.metrics.iter().any(|m| m.0 == "epoch_time_s"))
        .collect();
    if !epoch_cells.is_empty() {
        out.push_str("\n## Epoch times\n\n| Model | Method | Epoch Time (s) |\n|---|---|---|\n");
        for cell in epoch_cells {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                cell.model,
                cell.method,
                cell_text(cell, "epoch_time_s")
            );
        }
    }
    if !table.skipped.is_empty() {
        out.push_str("\n## Skipped\n\n");
        let mut skipped = table.skipped.clone();
        skipped.sort_by_key(|s| (s.model, s.method));
        for s in skipped {
            let _ = writeln!(out, "- {} / {}: {}", s.model, s.method, s.reason);
        }
    }
    let failures: Vec<String> = {
        let mut rows: Vec<_> = table
            .rows
            .iter()
            .filter_map(|r| {
                r.outcome
                    .as_ref()
                    .err()
                    .map(|e| (r.model, r.method, r.run, e.clone()))
            })
            .collect();
        rows.sort_by_key(|r| (r.0, r.1, r.2));
        rows.iter()
            .map(|(model, method, run, e)| format!("- {model} / {method} run {run}: {e}"))
            .collect()
    };
    if !failures.is_empty() {
        out.push_str("\n## Failed runs\n\n");
        for f in failures {
            out.push_str(&f);
            out.push('\n');
        }
    }
    if !table.warnings.is_empty() {
        out.push_str("\n## Notes\n\n");
        for w in &table.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

pub fn emit_markdown(table: &ReportTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_markdown(table))?;
    Ok(())
}

/// Rebuilds a markdown report from a previously emitted CSV.
pub fn markdown_from_csv(text: &str) -> Result<String> {
    let rows = parse_csv(text)?;
    let mut out = String::new();
    out.push_str("# Conditional distribution benchmark\n\n");
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let _ = writeln!(out, "{}", line.trim_start_matches('#').trim());
    }
    out.push('\n');
    out.push_str("| Model | Method | MSE Mean | MSE Std | W-1 | Training Time (s) | Sampling Time (s) |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    let mut keys: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r.model.clone(), r.method.clone()))
        .collect();
    keys.dedup();
    let find = |model: &str, method: &str, metric: &str| -> String {
        rows.iter()
            .find(|r| r.model == model && r.method == method && r.metric == metric)
            .map_or("--".to_string(), |r| format!("{:.4} ({:.4})", r.mean, r.std))
    };
    for (model, method) in keys {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            model,
            method,
            find(&model, &method, "mse_mean"),
            find(&model, &method, "mse_sd"),
            find(&model, &method, "w1"),
            find(&model, &method, "train_time_s"),
            find(&model, &method, "sample_time_s"),
        );
    }
    Ok(out)
}

/// Canonical method ordering for reports.
pub fn method_order(m: Method) -> usize {
    Method::BENCH
        .iter()
        .position(|&b| b == m)
        .unwrap_or(Method::BENCH.len())
}
