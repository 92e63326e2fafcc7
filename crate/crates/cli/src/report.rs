//! Seed aggregation and comparison tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use synergy_core::learner::MethodKind;

use crate::run::{scalar_metrics, SeedMetrics};

/// Mean and population standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt(), values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: MethodKind,
    pub method_label: String,
    pub scenario: String,
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    /// Metrics present in every seed.
    pub metrics: BTreeMap<String, Stat>,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[&SeedMetrics]) -> Self {
        let first = seeds.first().expect("at least one seed");
        let mut metrics = BTreeMap::new();
        for name in scalar_metrics(first).keys() {
            let values: Option<Vec<f64>> = seeds.iter().map(|s| scalar_metrics(s)[name]).collect();
            if let Some(values) = values {
                metrics.insert(name.to_string(), Stat::of(values));
            }
        }
        Aggregate {
            method: first.method,
            method_label: first.method.label().to_string(),
            scenario: first.scenario.clone(),
            n_seeds: seeds.len(),
            seeds: seeds.iter().map(|s| s.seed).collect(),
            metrics,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.mean)
    }
}

/// Rows are methods, columns scenarios, both in first-seen order.
fn grid<'a>(reports: &'a [Aggregate], metric: &str) -> (Vec<&'a str>, Vec<&'a str>, Vec<Vec<String>>) {
    let mut rows: Vec<&str> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    for r in reports {
        if !rows.contains(&r.method_label.as_str()) {
            rows.push(&r.method_label);
        }
        if !cols.contains(&r.scenario.as_str()) {
            cols.push(&r.scenario);
        }
    }
    let mut cells = vec![vec!["-".to_string(); cols.len()]; rows.len()];
    for r in reports {
        let i = rows.iter().position(|m| *m == r.method_label).expect("collected");
        let j = cols.iter().position(|s| *s == r.scenario).expect("collected");
        if let Some(s) = r.metrics.get(metric) {
            cells[i][j] = format!("{:.2}±{:.2}", s.mean, s.std);
        }
    }
    (rows, cols, cells)
}

/// Markdown comparison table of `metric` (mean±std).
pub fn emit_markdown(reports: &[Aggregate], metric: &str) -> String {
    let (rows, cols, cells) = grid(reports, metric);
    let mut out = format!("| Method | {} |\n", cols.join(" | "));
    out.push_str(&format!("|---|{}\n", "---|".repeat(cols.len())));
    for (r, row) in rows.iter().zip(&cells) {
        out.push_str(&format!("| {r} | {} |\n", row.join(" | ")));
    }
    out
}

/// Same table as CSV.
pub fn emit_csv(reports: &[Aggregate], metric: &str) -> String {
    let (rows, cols, cells) = grid(reports, metric);
    let quote = |s: &str| if s.contains([',', '"']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
    let mut out = format!("method,{}\n", cols.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
    for (r, row) in rows.iter().zip(&cells) {
        out.push_str(&format!("{},{}\n", quote(r), row.join(",")));
    }
    out
}

fn find_aggregates(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_aggregates(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "aggregate.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Loads every `aggregate.json` under the given files or directories.
pub fn collect(paths: &[PathBuf]) -> Result<Vec<Aggregate>> {
    let mut files = Vec::new();
    for p in paths {
        find_aggregates(p, &mut files)?;
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))
        })
        .collect()
}
