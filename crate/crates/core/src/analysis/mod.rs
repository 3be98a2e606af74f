//! Scoring a run against ground truth, plus the aggregate views built from
//! traced users and their content.

mod defense;
mod ecosystem;
mod metrics;
mod over;
mod rank;
mod report;
mod truth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use defense::{
    compare_defenses, compare_defenses_from, DefenseError, DefenseRow, DefenseSummary,
};
pub use ecosystem::{ecosystem_breakdown, EcosystemBreakdown, EcosystemError, EcosystemLabel};
pub use metrics::{
    score_run, GroundTruthMissing, HijackGroup, HijackScore, MethodScore, RunMetrics, Scorecard,
};
pub use over::{
    asn_key, baseline_by_asn, baseline_by_country, over_representation, BaselineInvalid,
    OverRepresentationRow,
};
pub use rank::{rank_stability, TooFewSnapshots};
pub use report::{write_defense_report, write_run_report, ReportError};
pub use truth::{GroundTruth, StreamTruth, UserTruth};

use crate::scenario::{PolicyName, RunOutput, RunStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    GroundTruth(#[from] GroundTruthMissing),
    #[error(transparent)]
    Baseline(#[from] BaselineInvalid),
    #[error(transparent)]
    Ecosystem(#[from] EcosystemError),
}

/// Everything reported for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub policy: PolicyName,
    pub scorecard: Scorecard,
    pub over_country: Vec<OverRepresentationRow>,
    pub over_asn: Vec<OverRepresentationRow>,
    /// `None` when nothing was traced.
    pub ecosystem: Option<EcosystemBreakdown>,
    /// Rank deltas of countries across snapshots; empty with fewer than two.
    pub rank_stability: BTreeMap<String, Vec<i64>>,
    pub stats: RunStats,
}

pub fn analyze(run: &RunOutput) -> Result<RunReport, AnalysisError> {
    let cfg = &run.config;
    let scorecard = score_run(&run.truth, Some(&run.adversary))?;
    let (by_country, by_asn) = run.traced_counts();
    let top_k = Some(cfg.analysis.top_k);
    let over_country = over_representation(
        &by_country,
        &baseline_by_country(&cfg.population.baseline),
        top_k,
    )?;
    let over_asn = over_representation(&by_asn, &baseline_by_asn(&cfg.population.baseline), top_k)?;
    let ecosystem = match ecosystem_breakdown(&run.traced_downloads(), &run.catalog) {
        Ok(b) => Some(b),
        Err(EcosystemError::EmptyInput) => None,
        Err(e) => return Err(e.into()),
    };
    let series: Vec<BTreeMap<String, u64>> =
        run.snapshots.iter().map(|s| s.by_country.clone()).collect();
    let rank_stability = rank_stability(&series).unwrap_or_default();
    Ok(RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        policy: cfg.tor.policy,
        scorecard,
        over_country,
        over_asn,
        ecosystem,
        rank_stability,
        stats: run.stats.clone(),
    })
}
