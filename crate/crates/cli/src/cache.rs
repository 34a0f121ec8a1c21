//! `cache inspect` and `cache prune`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use lampo::oracle::cache::{load_entries, write_entries};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CacheSummary {
    pub entries: usize,
    pub unreadable_lines: usize,
    pub by_template: BTreeMap<String, usize>,
    pub by_outcome: BTreeMap<String, usize>,
}

pub fn inspect(path: &Path) -> Result<CacheSummary> {
    let (entries, skipped) = load_entries(path)?;
    let mut by_template = BTreeMap::new();
    let mut by_outcome = BTreeMap::new();
    for e in &entries {
        *by_template.entry(e.template.clone()).or_insert(0) += 1;
        *by_outcome.entry(e.parsed.as_text().to_string()).or_insert(0) += 1;
    }
    Ok(CacheSummary {
        entries: entries.len(),
        unreadable_lines: skipped,
        by_template,
        by_outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PruneOutcome {
    pub kept: usize,
    pub removed: usize,
    pub unreadable_lines: usize,
}

/// Rewrites the cache without duplicate or unreadable records, keeping only
/// entries whose template id is in `keep_templates` (all when empty).
pub fn prune(path: &Path, keep_templates: &[String]) -> Result<PruneOutcome> {
    let (entries, skipped) = load_entries(path)?;
    let before = entries.len();
    let kept: Vec<_> = entries
        .into_iter()
        .filter(|e| keep_templates.is_empty() || keep_templates.contains(&e.template))
        .collect();
    write_entries(path, &kept)?;
    Ok(PruneOutcome {
        kept: kept.len(),
        removed: before - kept.len(),
        unreadable_lines: skipped,
    })
}
