use crate::sim::SimTime;
use crate::tor::{CircuitId, ExitView, RelayId, StreamId};
use crate::wire::{extract_identifiers, Extracted, StreamClass};
use crate::Endpoint;

/// What the adversary keeps about one stream seen at an instrumented exit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExitObservation {
    /// Position in the adversary's input order.
    pub seq: u64,
    pub circuit: CircuitId,
    pub stream: StreamId,
    pub exit: RelayId,
    pub destination: Endpoint,
    pub class: StreamClass,
    pub extracted: Option<Extracted>,
    pub at: SimTime,
    /// Peers listed in the tracker's answer on this stream, as it left the
    /// tracker (before any rewriting).
    pub announce_peers: Vec<Endpoint>,
    /// Input position and time of that answer.
    pub response: Option<(u64, SimTime)>,
}

impl ExitObservation {
    pub fn from_view(view: &ExitView, seq: u64) -> Self {
        let ids = extract_identifiers(&view.payload_prefix, view.class);
        Self {
            seq,
            circuit: view.circuit,
            stream: view.stream,
            exit: view.exit,
            destination: view.destination,
            class: view.class,
            extracted: (!ids.is_empty()).then_some(ids),
            at: view.at,
            announce_peers: Vec::new(),
            response: None,
        }
    }

    pub fn info_hash(&self) -> Option<crate::InfoHash> {
        self.extracted.as_ref().and_then(|e| e.info_hash)
    }

    pub fn peer_id(&self) -> Option<crate::PeerId> {
        self.extracted.as_ref().and_then(|e| e.peer_id)
    }

    pub fn listening_port(&self) -> Option<u16> {
        self.extracted.as_ref().and_then(|e| e.listening_port)
    }
}
