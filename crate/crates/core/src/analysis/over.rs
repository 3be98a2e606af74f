use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::PopulationTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverRepresentationRow {
    pub key: String,
    pub count_on_tor: u64,
    pub share_on_tor: f64,
    pub share_baseline: f64,
    /// share_on_tor / share_baseline; `None` when the baseline share is 0.
    pub over: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("baseline shares sum to {0}, expected 1")]
pub struct BaselineInvalid(pub f64);

/// Over-representation of each key among traced users relative to a
/// baseline. Rows are sorted by count (descending, then key) and cut to
/// `top_k`; shares are over all keys.
pub fn over_representation(
    counts: &BTreeMap<String, u64>,
    baseline: &BTreeMap<String, f64>,
    top_k: Option<usize>,
) -> Result<Vec<OverRepresentationRow>, BaselineInvalid> {
    let sum: f64 = baseline.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(BaselineInvalid(sum));
    }
    let total: u64 = counts.values().sum();
    let mut rows: Vec<OverRepresentationRow> = counts
        .iter()
        .map(|(key, &count)| {
            let share_on_tor = if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            };
            let share_baseline = baseline.get(key).copied().unwrap_or(0.0);
            OverRepresentationRow {
                key: key.clone(),
                count_on_tor: count,
                share_on_tor,
                share_baseline,
                over: (share_baseline > 0.0).then(|| share_on_tor / share_baseline),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.count_on_tor
            .cmp(&a.count_on_tor)
            .then_with(|| a.key.cmp(&b.key))
    });
    if let Some(k) = top_k {
        rows.truncate(k);
    }
    Ok(rows)
}

pub fn asn_key(asn: u32) -> String {
    format!("AS{asn}")
}

pub fn baseline_by_country(table: &PopulationTable) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for e in &table.entries {
        *out.entry(e.country.clone()).or_insert(0.0) += e.weight;
    }
    out
}

pub fn baseline_by_asn(table: &PopulationTable) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for e in &table.entries {
        *out.entry(asn_key(e.asn)).or_insert(0.0) += e.weight;
    }
    out
}
