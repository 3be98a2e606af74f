use serde::{Deserialize, Serialize};

use super::{analyze, AnalysisError, RunReport};
use crate::scenario::{run, PolicyName, RunError, ScenarioConfig};

/// Headline numbers of one (policy, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub policy: PolicyName,
    pub seed: u64,
    pub total_streams: u64,
    pub traced_streams: u64,
    pub traced_fraction_all: f64,
    pub traced_http_fraction: Option<f64>,
    pub additional_traced_streams: u64,
    pub same_circuit_streams: u64,
    pub tor_bt_users_traced: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl DefenseRow {
    pub fn from_report(r: &RunReport) -> Self {
        let s = &r.scorecard;
        Self {
            policy: r.policy,
            seed: r.seed,
            total_streams: s.metrics.total_streams,
            traced_streams: s.metrics.traced_streams,
            traced_fraction_all: s.metrics.traced_fraction_all,
            traced_http_fraction: s.metrics.traced_http_fraction,
            additional_traced_streams: s.metrics.additional_traced_streams,
            same_circuit_streams: s.metrics.same_circuit_streams,
            tor_bt_users_traced: s.tor_bt_users_traced,
            precision: s.precision,
            recall: s.recall,
        }
    }
}

/// Mean and sample standard deviation across seeds for one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseSummary {
    pub policy: PolicyName,
    pub runs: usize,
    pub traced_fraction_mean: f64,
    pub traced_fraction_sd: f64,
    pub traced_http_fraction_mean: Option<f64>,
    pub additional_traced_mean: f64,
    pub same_circuit_mean: f64,
    pub recall_mean: Option<f64>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn mean_some(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean_sd(&v).0)
}

/// Summarises already computed rows, one summary per policy in the order
/// policies first appear.
pub fn compare_defenses_from(rows: &[DefenseRow]) -> Vec<DefenseSummary> {
    let mut policies: Vec<PolicyName> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
    }
    policies
        .into_iter()
        .map(|p| {
            let group: Vec<&DefenseRow> = rows.iter().filter(|r| r.policy == p).collect();
            let fr: Vec<f64> = group.iter().map(|r| r.traced_fraction_all).collect();
            let (traced_fraction_mean, traced_fraction_sd) = mean_sd(&fr);
            let add: Vec<f64> = group
                .iter()
                .map(|r| r.additional_traced_streams as f64)
                .collect();
            let same: Vec<f64> = group
                .iter()
                .map(|r| r.same_circuit_streams as f64)
                .collect();
            DefenseSummary {
                policy: p,
                runs: group.len(),
                traced_fraction_mean,
                traced_fraction_sd,
                traced_http_fraction_mean: mean_some(group.iter().map(|r| r.traced_http_fraction)),
                additional_traced_mean: mean_sd(&add).0,
                same_circuit_mean: mean_sd(&same).0,
                recall_mean: mean_some(group.iter().map(|r| r.recall)),
            }
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DefenseError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Runs every (policy, seed) pair of `cfg` sequentially. Seeds are shared
/// across policies so comparisons are paired.
pub fn compare_defenses(
    cfg: &ScenarioConfig,
    policies: &[PolicyName],
    seeds: &[u64],
) -> Result<(Vec<DefenseRow>, Vec<DefenseSummary>), DefenseError> {
    let mut rows = Vec::new();
    for &p in policies {
        for &seed in seeds {
            let c = cfg.clone().with_policy(p).with_seed(seed);
            let out = run(&c)?;
            rows.push(DefenseRow::from_report(&analyze(&out)?));
        }
    }
    let summary = compare_defenses_from(&rows);
    Ok((rows, summary))
}
