use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GroundTruth;
use crate::adversary::{AdversaryOutput, TraceMethod};
use crate::bt::Behavior;
use crate::sim::HostId;
use crate::tor::{AppTag, CircuitId, StreamId};
use crate::wire::StreamClass;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundTruthMissing {
    #[error("no ground truth for circuit {0:?}")]
    Circuit(CircuitId),
    #[error("no ground truth for stream {0:?}")]
    Stream(StreamId),
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_streams: u64,
    pub bt_streams: u64,
    pub traced_streams: u64,
    pub traced_bt_streams: u64,
    /// Traced streams that are not BitTorrent.
    pub additional_traced_streams: u64,
    pub additional_by_port: BTreeMap<u16, u64>,
    pub traced_fraction_all: f64,
    pub http_streams: u64,
    pub traced_http_streams: u64,
    pub traced_http_fraction: Option<f64>,
    /// additional_traced_streams / traced_bt_streams.
    pub additional_multiplier: Option<f64>,
    /// Streams traced only because they shared a directly traced circuit.
    pub same_circuit_streams: u64,
    pub same_circuit_http_streams: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: TraceMethod,
    /// Trace results for direct methods; circuits reached for linkage.
    pub traces: u64,
    pub correct: u64,
    pub precision: Option<f64>,
    /// Tor BitTorrent users correctly traced by this method.
    pub users_traced: u64,
    pub recall: Option<f64>,
    pub streams: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HijackGroup {
    /// Users with at least one rewritten tracker answer.
    pub targeted: u64,
    /// Targeted users with a hijack trace on one of their circuits.
    pub traced: u64,
    /// Of those, traced to their own endpoint.
    pub traced_correct: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HijackScore {
    pub all: HijackGroup,
    pub by_behavior: BTreeMap<Behavior, HijackGroup>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub metrics: RunMetrics,
    pub methods: Vec<MethodScore>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tor_bt_users_observed: u64,
    pub tor_bt_users_traced: u64,
    pub direct_traces: u64,
    pub conflicted_components: u64,
    pub ambiguous_correlations: u64,
    pub hijack: HijackScore,
}

/// Scores one run. Streams count only if they left through an instrumented
/// exit; BitTorrent means the stream's true application.
pub fn score_run(
    truth: &GroundTruth,
    adversary: Option<&AdversaryOutput>,
) -> Result<Scorecard, GroundTruthMissing> {
    let empty = AdversaryOutput::default();
    let adv = adversary.unwrap_or(&empty);
    let by_stream: HashMap<StreamId, &super::StreamTruth> =
        truth.streams.iter().map(|s| (s.stream, s)).collect();

    let mut m = RunMetrics::default();
    let mut observed_users: BTreeSet<HostId> = BTreeSet::new();
    for s in truth.streams.iter().filter(|s| s.instrumented) {
        m.total_streams += 1;
        if s.app == AppTag::BitTorrent {
            m.bt_streams += 1;
        }
        if s.class == StreamClass::Http {
            m.http_streams += 1;
        }
        if truth
            .users
            .get(&s.owner)
            .is_some_and(|u| u.is_tor_bt_user())
        {
            observed_users.insert(s.owner);
        }
    }

    let mut method_streams: BTreeMap<TraceMethod, u64> = BTreeMap::new();
    for t in &adv.propagation.streams {
        let s = by_stream
            .get(&t.stream)
            .ok_or(GroundTruthMissing::Stream(t.stream))?;
        m.traced_streams += 1;
        *method_streams.entry(t.method).or_default() += 1;
        let http = s.class == StreamClass::Http;
        if http {
            m.traced_http_streams += 1;
        }
        if s.app == AppTag::BitTorrent {
            m.traced_bt_streams += 1;
        } else {
            m.additional_traced_streams += 1;
            *m.additional_by_port.entry(s.dst_port).or_default() += 1;
        }
        if t.method == TraceMethod::LinkSameCircuit {
            m.same_circuit_streams += 1;
            if http {
                m.same_circuit_http_streams += 1;
            }
        }
    }
    m.traced_fraction_all = ratio(m.traced_streams, m.total_streams).unwrap_or(0.0);
    m.traced_http_fraction = ratio(m.traced_http_streams, m.http_streams);
    m.additional_multiplier = ratio(m.additional_traced_streams, m.traced_bt_streams);

    let n_observed = observed_users.len() as u64;
    let owner = |c: CircuitId| truth.owner_of(c).ok_or(GroundTruthMissing::Circuit(c));

    // Per method: (traces, correct, users traced correctly).
    let mut tally: BTreeMap<TraceMethod, (u64, u64, BTreeSet<HostId>)> = BTreeMap::new();
    for r in &adv.results {
        let u = owner(r.circuit)?;
        let e = tally.entry(r.method).or_default();
        e.0 += 1;
        if u.endpoint == r.traced_endpoint {
            e.1 += 1;
            if u.is_tor_bt_user() {
                e.2.insert(u.host);
            }
        }
    }
    let mut all_correct = 0u64;
    let mut traced_users: BTreeSet<HostId> = BTreeSet::new();
    for (&c, &(ep, method)) in &adv.propagation.circuits {
        let u = owner(c)?;
        let correct = u.endpoint == ep;
        if correct {
            all_correct += 1;
            if u.is_tor_bt_user() {
                traced_users.insert(u.host);
            }
        }
        if !method.is_direct() {
            let e = tally.entry(method).or_default();
            e.0 += 1;
            if correct {
                e.1 += 1;
                if u.is_tor_bt_user() {
                    e.2.insert(u.host);
                }
            }
        }
    }
    // Circuits that carry other streams of a directly traced circuit.
    let same_circuit: BTreeSet<CircuitId> = adv
        .propagation
        .streams
        .iter()
        .filter(|t| t.method == TraceMethod::LinkSameCircuit)
        .map(|t| t.circuit)
        .collect();
    for c in same_circuit {
        let (ep, _) = adv.propagation.circuits[&c];
        let u = owner(c)?;
        let e = tally.entry(TraceMethod::LinkSameCircuit).or_default();
        e.0 += 1;
        if u.endpoint == ep {
            e.1 += 1;
            if u.is_tor_bt_user() {
                e.2.insert(u.host);
            }
        }
    }

    let methods = TraceMethod::ALL
        .iter()
        .map(|&method| {
            let (traces, correct, users) = tally.remove(&method).unwrap_or_default();
            MethodScore {
                method,
                traces,
                correct,
                precision: ratio(correct, traces),
                users_traced: users.len() as u64,
                recall: ratio(users.len() as u64, n_observed),
                streams: method_streams.get(&method).copied().unwrap_or(0),
            }
        })
        .collect();

    let mut hijack = HijackScore::default();
    let mut targeted: BTreeSet<HostId> = BTreeSet::new();
    for &c in &adv.hijacked_circuits {
        targeted.insert(owner(c)?.host);
    }
    let mut hijack_traced: BTreeMap<HostId, bool> = BTreeMap::new();
    for r in adv
        .results
        .iter()
        .filter(|r| r.method == TraceMethod::Hijack)
    {
        let u = owner(r.circuit)?;
        let ok = hijack_traced.entry(u.host).or_default();
        *ok |= u.endpoint == r.traced_endpoint;
    }
    for h in &targeted {
        let u = &truth.users[h];
        let bump = |g: &mut HijackGroup| {
            g.targeted += 1;
            if let Some(&ok) = hijack_traced.get(h) {
                g.traced += 1;
                g.traced_correct += u64::from(ok);
            }
        };
        bump(&mut hijack.all);
        if let Some(b) = u.behavior {
            bump(hijack.by_behavior.entry(b).or_default());
        }
    }

    let n_circuits = adv.propagation.circuits.len() as u64;
    Ok(Scorecard {
        metrics: m,
        methods,
        precision: ratio(all_correct, n_circuits),
        recall: ratio(traced_users.len() as u64, n_observed),
        tor_bt_users_observed: n_observed,
        tor_bt_users_traced: traced_users.len() as u64,
        direct_traces: adv.results.len() as u64,
        conflicted_components: adv.propagation.conflicted() as u64,
        ambiguous_correlations: adv.ambiguous_correlations as u64,
        hijack,
    })
}
