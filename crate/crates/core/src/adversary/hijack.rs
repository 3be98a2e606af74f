use std::collections::{HashMap, HashSet};
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{TraceMethod, TraceResult};
use crate::sim::SimTime;
use crate::tor::{CircuitId, StreamId};
use crate::wire::{AnnounceResponse, BtHandshake};
use crate::{Endpoint, InfoHash};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{} circuits received a rewritten answer for {info_hash:?} within the window", circuits.len())]
pub struct AmbiguousCorrelation {
    pub info_hash: InfoHash,
    pub circuits: Vec<CircuitId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HijackRecord {
    pub circuit: CircuitId,
    pub stream: StreamId,
    pub at: SimTime,
}

/// Puts `malicious` at the head of `peers` and keeps the original length.
/// An empty list becomes `[malicious]`.
pub fn hijack_peers(malicious: Endpoint, peers: &[Endpoint]) -> Vec<Endpoint> {
    let keep = peers.len().max(1);
    std::iter::once(malicious)
        .chain(peers.iter().copied().filter(|&p| p != malicious))
        .take(keep)
        .collect()
}

/// Tracker-response rewriting at one exit, plus the malicious peer that
/// waits for the resulting connections.
#[derive(Clone, Debug)]
pub struct Hijacker {
    malicious: Endpoint,
    window: SimTime,
    records: HashMap<InfoHash, Vec<HijackRecord>>,
}

impl Hijacker {
    pub fn new(malicious: Endpoint, window: SimTime) -> Self {
        Self {
            malicious,
            window,
            records: HashMap::new(),
        }
    }

    pub fn malicious(&self) -> Endpoint {
        self.malicious
    }

    pub fn all_records(&self) -> impl Iterator<Item = &HijackRecord> {
        self.records.values().flatten()
    }

    pub fn records(&self, info_hash: &InfoHash) -> &[HijackRecord] {
        self.records.get(info_hash).map_or(&[], Vec::as_slice)
    }

    pub fn hijack_announce(
        &mut self,
        info_hash: InfoHash,
        circuit: CircuitId,
        stream: StreamId,
        response: &AnnounceResponse,
        at: SimTime,
    ) -> AnnounceResponse {
        self.records
            .entry(info_hash)
            .or_default()
            .push(HijackRecord {
                circuit,
                stream,
                at,
            });
        AnnounceResponse {
            interval: response.interval,
            peers: hijack_peers(self.malicious, &response.peers),
        }
    }

    /// Handles a connection to the malicious peer. Connections from exit
    /// relays are ignored; otherwise the source is bound to the single
    /// circuit that got a rewritten answer for the same content within the
    /// window.
    pub fn malicious_peer_accept(
        &self,
        source: Endpoint,
        handshake: &BtHandshake,
        exit_list: &HashSet<Ipv4Addr>,
        now: SimTime,
    ) -> Result<Option<TraceResult>, AmbiguousCorrelation> {
        if exit_list.contains(&source.ip) {
            return Ok(None);
        }
        let recent: Vec<&HijackRecord> = self
            .records(&handshake.info_hash)
            .iter()
            .filter(|r| r.at <= now && now.saturating_sub(r.at) <= self.window)
            .collect();
        let mut circuits: Vec<CircuitId> = recent.iter().map(|r| r.circuit).collect();
        circuits.sort();
        circuits.dedup();
        match circuits.len() {
            0 => Ok(None),
            1 => {
                let last = recent.iter().max_by_key(|r| r.at).expect("non-empty");
                Ok(Some(TraceResult {
                    circuit: last.circuit,
                    stream: last.stream,
                    traced_endpoint: source,
                    method: TraceMethod::Hijack,
                    at: now,
                }))
            }
            _ => Err(AmbiguousCorrelation {
                info_hash: handshake.info_hash,
                circuits,
            }),
        }
    }
}
