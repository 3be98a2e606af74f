use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("rank stability needs at least two snapshots, got {0}")]
pub struct TooFewSnapshots(pub usize);

/// Ranks (1-based) by count descending, ties broken by key.
fn ranks(snapshot: &BTreeMap<String, u64>, keys: &BTreeSet<String>) -> BTreeMap<String, i64> {
    let mut order: Vec<(&String, u64)> = keys
        .iter()
        .map(|k| (k, snapshot.get(k).copied().unwrap_or(0)))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    order
        .iter()
        .enumerate()
        .map(|(i, (k, _))| ((*k).clone(), i as i64 + 1))
        .collect()
}

/// For every key seen in any snapshot, the series of its rank in each
/// snapshot minus its rank in the last one.
pub fn rank_stability(
    snapshots: &[BTreeMap<String, u64>],
) -> Result<BTreeMap<String, Vec<i64>>, TooFewSnapshots> {
    if snapshots.len() < 2 {
        return Err(TooFewSnapshots(snapshots.len()));
    }
    let keys: BTreeSet<String> = snapshots.iter().flat_map(|s| s.keys().cloned()).collect();
    let per_snapshot: Vec<BTreeMap<String, i64>> =
        snapshots.iter().map(|s| ranks(s, &keys)).collect();
    let last = per_snapshot.last().expect("at least two");
    Ok(keys
        .iter()
        .map(|k| {
            (
                k.clone(),
                per_snapshot.iter().map(|r| r[k] - last[k]).collect(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn single_key_is_flat() {
        let s = rank_stability(&[snap(&[("JP", 1)]), snap(&[("JP", 5)])]).unwrap();
        assert_eq!(s["JP"], vec![0, 0]);
        assert!(rank_stability(&[snap(&[])]).is_err());
    }
}
