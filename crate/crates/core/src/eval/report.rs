//! Run reports: per-seed values aggregated into `mean_{std}` table cells.
//!
//! Standard deviations are population deviations over the configured seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_CONVENTION: &str = "population";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Metric value, absent when the run was infeasible.
    pub value: Option<f64>,
    /// Error kind when `value` is absent (`context-overflow`, `unsupported`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub na: Option<String>,
    #[serde(default)]
    pub backend_calls: u64,
    #[serde(default)]
    pub cache_hits: u64,
    #[serde(default)]
    pub unparseable: usize,
}

impl SeedResult {
    pub fn ok(seed: u64, value: f64) -> Self {
        Self {
            seed,
            value: Some(value),
            na: None,
            backend_calls: 0,
            cache_hits: 0,
            unparseable: 0,
        }
    }

    pub fn na(seed: u64, kind: impl Into<String>) -> Self {
        Self {
            seed,
            value: None,
            na: Some(kind.into()),
            backend_calls: 0,
            cache_hits: 0,
            unparseable: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    /// Column label, e.g. `lampo/mixture` or `icl`.
    pub method: String,
    pub shots: Option<usize>,
    pub metric: String,
    pub seeds: Vec<SeedResult>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub std_convention: String,
    /// Every effective setting, for auditing.
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl MetricReport {
    pub fn new(dataset: impl Into<String>, method: impl Into<String>, shots: Option<usize>, metric: impl Into<String>, seeds: Vec<SeedResult>) -> Self {
        let mut report = Self {
            dataset: dataset.into(),
            method: method.into(),
            shots,
            metric: metric.into(),
            seeds,
            mean: None,
            std: None,
            std_convention: STD_CONVENTION.into(),
            settings: BTreeMap::new(),
        };
        report.recompute();
        report
    }

    /// Recomputes mean and std; any infeasible seed makes the cell NA.
    pub fn recompute(&mut self) {
        let values: Option<Vec<f64>> = self.seeds.iter().map(|s| s.value).collect();
        let stats = values.as_deref().and_then(mean_std);
        self.mean = stats.map(|s| s.0);
        self.std = stats.map(|s| s.1);
    }

    pub fn with_setting(mut self, key: &str, value: impl Serialize) -> Self {
        self.settings
            .insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }

    pub fn backend_calls(&self) -> u64 {
        self.seeds.iter().map(|s| s.backend_calls).sum()
    }

    pub fn cache_hits(&self) -> u64 {
        self.seeds.iter().map(|s| s.cache_hits).sum()
    }

    /// Table cell: percentages as `mean_{std}`, or `NA(kind)`.
    pub fn cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{:.2}_{{{:.2}}}", m * 100.0, s * 100.0),
            _ => {
                let kind = self
                    .seeds
                    .iter()
                    .find_map(|s| s.na.clone())
                    .unwrap_or_else(|| "missing".into());
                format!("NA({kind})")
            }
        }
    }

    fn row_key(&self) -> String {
        match self.shots {
            Some(k) => format!("{} ({}-shot)", self.dataset, k),
            None => self.dataset.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub std_convention: String,
    pub reports: Vec<MetricReport>,
}

/// Markdown table: one row per dataset and shot count, one column per method.
pub fn render_table(reports: &[MetricReport]) -> String {
    let mut columns: Vec<&str> = Vec::new();
    let mut rows: BTreeMap<String, (String, BTreeMap<&str, String>)> = BTreeMap::new();
    for r in reports {
        if !columns.contains(&r.method.as_str()) {
            columns.push(&r.method);
        }
        rows.entry(r.row_key())
            .or_insert_with(|| (r.metric.clone(), BTreeMap::new()))
            .1
            .insert(&r.method, r.cell());
    }
    let mut out = String::new();
    let _ = write!(out, "| dataset | metric |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push('\n');
    out.push_str("|---|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for (key, (metric, cells)) in &rows {
        let _ = write!(out, "| {key} | {metric} |");
        for c in &columns {
            let _ = write!(out, " {} |", cells.get(c).map(String::as_str).unwrap_or("-"));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\nmean_{{std}} in percent; std is the {STD_CONVENTION} standard deviation over seeds.");
    out
}

/// Writes `<stem>.json` and `<stem>.md` into `dir`, returning the JSON text.
pub fn emit_report(reports: &[MetricReport], dir: &Path, stem: &str) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let doc = ReportDocument {
        std_convention: STD_CONVENTION.into(),
        reports: reports.to_vec(),
    };
    let json = serde_json::to_string_pretty(&doc)? + "\n";
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, &json).map_err(|e| Error::io(&json_path, e))?;
    let md_path = dir.join(format!("{stem}.md"));
    std::fs::write(&md_path, render_table(reports)).map_err(|e| Error::io(&md_path, e))?;
    Ok(json)
}

pub fn load_report(path: &Path) -> Result<ReportDocument> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}
