use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::sim::SimTime;
use crate::tor::{CircuitId, StreamId};
use crate::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    Hijack,
    DhtPortMatch,
    LinkSameCircuit,
    LinkPeerId,
    LinkFreshEndpoint,
}

impl TraceMethod {
    pub const ALL: [TraceMethod; 5] = [
        TraceMethod::Hijack,
        TraceMethod::DhtPortMatch,
        TraceMethod::LinkSameCircuit,
        TraceMethod::LinkPeerId,
        TraceMethod::LinkFreshEndpoint,
    ];

    pub fn is_direct(self) -> bool {
        matches!(self, TraceMethod::Hijack | TraceMethod::DhtPortMatch)
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceMethod::Hijack => "hijack",
            TraceMethod::DhtPortMatch => "dht_port_match",
            TraceMethod::LinkSameCircuit => "link_same_circuit",
            TraceMethod::LinkPeerId => "link_peer_id",
            TraceMethod::LinkFreshEndpoint => "link_fresh_endpoint",
        }
    }
}

/// A circuit tied to a public endpoint by direct evidence. `stream` is the
/// stream that carried the evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceResult {
    pub circuit: CircuitId,
    pub stream: StreamId,
    pub traced_endpoint: Endpoint,
    pub method: TraceMethod,
    pub at: SimTime,
}

/// One line of the trace log. Endpoints are left out on purpose.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceLogRecord {
    Trace {
        tick: u64,
        circuit: u32,
        stream: u32,
        method: TraceMethod,
    },
    Union {
        tick: u64,
        a: u32,
        b: u32,
        provenance: Provenance,
        merged: bool,
    },
    Ambiguous {
        tick: u64,
        candidates: usize,
    },
}

pub fn trace_log_ndjson(records: &[TraceLogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}
