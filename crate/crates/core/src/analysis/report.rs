//! Report files: per metric family one `.jsonl` and one `.csv`, named after
//! the scenario and seed. Only aggregates are written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{DefenseRow, DefenseSummary, RunReport};
use crate::adversary::trace_log_ndjson;
use crate::scenario::RunOutput;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `rows` as `{stem}.jsonl` and `{stem}.csv` under `dir`.
fn write_family<T: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[T],
    out: &mut Vec<PathBuf>,
) -> Result<(), ReportError> {
    let jsonl = dir.join(format!("{stem}.jsonl"));
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(|e| encode_err(&jsonl, e))?);
        text.push('\n');
    }
    write_bytes(&jsonl, text.as_bytes())?;
    out.push(jsonl);

    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| encode_err(&csv_path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| encode_err(&csv_path, e))?;
    write_bytes(&csv_path, &bytes)?;
    out.push(csv_path);
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    name: &'a str,
    seed: u64,
    policy: &'a str,
    total_streams: u64,
    bt_streams: u64,
    traced_streams: u64,
    traced_bt_streams: u64,
    additional_traced_streams: u64,
    traced_fraction_all: f64,
    http_streams: u64,
    traced_http_streams: u64,
    traced_http_fraction: Option<f64>,
    additional_multiplier: Option<f64>,
    same_circuit_streams: u64,
    same_circuit_http_streams: u64,
    precision: Option<f64>,
    recall: Option<f64>,
    tor_bt_users_observed: u64,
    tor_bt_users_traced: u64,
    direct_traces: u64,
    conflicted_components: u64,
    ambiguous_correlations: u64,
    events: u64,
}

#[derive(Serialize)]
struct MethodRow {
    method: &'static str,
    traces: u64,
    correct: u64,
    precision: Option<f64>,
    users_traced: u64,
    recall: Option<f64>,
    streams: u64,
}

#[derive(Serialize)]
struct HijackRow {
    group: String,
    targeted: u64,
    traced: u64,
    traced_correct: u64,
}

#[derive(Serialize)]
struct EcosystemRow {
    label: String,
    count: u64,
    share: f64,
}

#[derive(Serialize)]
struct RankRow<'a> {
    key: &'a str,
    snapshot: usize,
    rank_delta: i64,
}

#[derive(Serialize)]
struct PortRow {
    port: u16,
    additional_traced_streams: u64,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Writes the report families for one run, the endpoint-free trace log and,
/// when recorded, the event log. Returns the paths written.
pub fn write_run_report(
    dir: &Path,
    report: &RunReport,
    run: &RunOutput,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let prefix = format!("{}-seed{}", report.name, report.seed);
    let mut out = Vec::new();
    let s = &report.scorecard;
    let m = &s.metrics;

    let metrics = MetricsRow {
        name: &report.name,
        seed: report.seed,
        policy: report.policy.as_str(),
        total_streams: m.total_streams,
        bt_streams: m.bt_streams,
        traced_streams: m.traced_streams,
        traced_bt_streams: m.traced_bt_streams,
        additional_traced_streams: m.additional_traced_streams,
        traced_fraction_all: m.traced_fraction_all,
        http_streams: m.http_streams,
        traced_http_streams: m.traced_http_streams,
        traced_http_fraction: m.traced_http_fraction,
        additional_multiplier: m.additional_multiplier,
        same_circuit_streams: m.same_circuit_streams,
        same_circuit_http_streams: m.same_circuit_http_streams,
        precision: s.precision,
        recall: s.recall,
        tor_bt_users_observed: s.tor_bt_users_observed,
        tor_bt_users_traced: s.tor_bt_users_traced,
        direct_traces: s.direct_traces,
        conflicted_components: s.conflicted_components,
        ambiguous_correlations: s.ambiguous_correlations,
        events: report.stats.events,
    };
    write_family(dir, &format!("{prefix}-metrics"), &[metrics], &mut out)?;

    let methods: Vec<MethodRow> = s
        .methods
        .iter()
        .map(|x| MethodRow {
            method: x.method.name(),
            traces: x.traces,
            correct: x.correct,
            precision: x.precision,
            users_traced: x.users_traced,
            recall: x.recall,
            streams: x.streams,
        })
        .collect();
    write_family(dir, &format!("{prefix}-methods"), &methods, &mut out)?;

    let hijack: Vec<HijackRow> = std::iter::once(("all".to_string(), &s.hijack.all))
        .chain(s.hijack.by_behavior.iter().map(|(b, g)| (label(b), g)))
        .map(|(group, g)| HijackRow {
            group,
            targeted: g.targeted,
            traced: g.traced,
            traced_correct: g.traced_correct,
        })
        .collect();
    write_family(dir, &format!("{prefix}-hijack"), &hijack, &mut out)?;

    write_family(
        dir,
        &format!("{prefix}-over_country"),
        &report.over_country,
        &mut out,
    )?;
    write_family(
        dir,
        &format!("{prefix}-over_asn"),
        &report.over_asn,
        &mut out,
    )?;

    let eco: Vec<EcosystemRow> = report
        .ecosystem
        .iter()
        .flat_map(|b| {
            b.counts.iter().map(|(l, &count)| EcosystemRow {
                label: label(l),
                count,
                share: b.shares[l],
            })
        })
        .collect();
    write_family(dir, &format!("{prefix}-ecosystem"), &eco, &mut out)?;

    let ranks: Vec<RankRow> = report
        .rank_stability
        .iter()
        .flat_map(|(k, series)| {
            series.iter().enumerate().map(move |(i, &d)| RankRow {
                key: k,
                snapshot: i,
                rank_delta: d,
            })
        })
        .collect();
    write_family(dir, &format!("{prefix}-rank_stability"), &ranks, &mut out)?;

    let ports: Vec<PortRow> = m
        .additional_by_port
        .iter()
        .map(|(&port, &n)| PortRow {
            port,
            additional_traced_streams: n,
        })
        .collect();
    write_family(
        dir,
        &format!("{prefix}-additional_by_port"),
        &ports,
        &mut out,
    )?;

    let trace = dir.join(format!("{prefix}-trace.ndjson"));
    write_bytes(
        &trace,
        trace_log_ndjson(&run.adversary.trace_log).as_bytes(),
    )?;
    out.push(trace);
    if let Some(log) = &run.event_log {
        let p = dir.join(format!("{prefix}-events.ndjson"));
        write_bytes(&p, log.to_ndjson().as_bytes())?;
        out.push(p);
    }
    Ok(out)
}

/// Writes the per-run rows and per-policy summary of a defense sweep.
pub fn write_defense_report(
    dir: &Path,
    name: &str,
    rows: &[DefenseRow],
    summary: &[DefenseSummary],
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    let flat: Vec<DefenseCsvRow> = rows.iter().map(DefenseCsvRow::from).collect();
    write_family(dir, &format!("{name}-defense_runs"), &flat, &mut out)?;
    let flat: Vec<SummaryCsvRow> = summary.iter().map(SummaryCsvRow::from).collect();
    write_family(dir, &format!("{name}-defense_summary"), &flat, &mut out)?;
    Ok(out)
}

// Policies as plain strings so the csv writer accepts the rows.
#[derive(Serialize)]
struct DefenseCsvRow {
    policy: &'static str,
    seed: u64,
    total_streams: u64,
    traced_streams: u64,
    traced_fraction_all: f64,
    traced_http_fraction: Option<f64>,
    additional_traced_streams: u64,
    same_circuit_streams: u64,
    tor_bt_users_traced: u64,
    precision: Option<f64>,
    recall: Option<f64>,
}

impl From<&DefenseRow> for DefenseCsvRow {
    fn from(r: &DefenseRow) -> Self {
        Self {
            policy: r.policy.as_str(),
            seed: r.seed,
            total_streams: r.total_streams,
            traced_streams: r.traced_streams,
            traced_fraction_all: r.traced_fraction_all,
            traced_http_fraction: r.traced_http_fraction,
            additional_traced_streams: r.additional_traced_streams,
            same_circuit_streams: r.same_circuit_streams,
            tor_bt_users_traced: r.tor_bt_users_traced,
            precision: r.precision,
            recall: r.recall,
        }
    }
}

#[derive(Serialize)]
struct SummaryCsvRow {
    policy: &'static str,
    runs: usize,
    traced_fraction_mean: f64,
    traced_fraction_sd: f64,
    traced_http_fraction_mean: Option<f64>,
    additional_traced_mean: f64,
    same_circuit_mean: f64,
    recall_mean: Option<f64>,
}

impl From<&DefenseSummary> for SummaryCsvRow {
    fn from(s: &DefenseSummary) -> Self {
        Self {
            policy: s.policy.as_str(),
            runs: s.runs,
            traced_fraction_mean: s.traced_fraction_mean,
            traced_fraction_sd: s.traced_fraction_sd,
            traced_http_fraction_mean: s.traced_http_fraction_mean,
            additional_traced_mean: s.additional_traced_mean,
            same_circuit_mean: s.same_circuit_mean,
            recall_mean: s.recall_mean,
        }
    }
}
