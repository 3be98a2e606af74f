use std::collections::{HashMap, HashSet};

use super::{
    select_path, AppTag, Circuit, CircuitId, CircuitPolicy, Directory, InsufficientRelays,
    IsolationKey,
};
use super::{RelayId, Stream, StreamId};
use crate::sim::{HostId, SimRng, SimTime};
use crate::wire::{classify_stream, StreamClass, TAP_WINDOW};
use crate::Endpoint;

/// What an instrumented exit learns about a stream's first payload. There is
/// deliberately no field through which the circuit owner could leak.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExitView {
    pub circuit: CircuitId,
    pub stream: StreamId,
    pub exit: RelayId,
    pub destination: Endpoint,
    pub payload_prefix: Vec<u8>,
    pub class: StreamClass,
    pub at: SimTime,
}

pub struct TorOverlay {
    directory: Directory,
    n_hops: usize,
    circuit_lifetime: SimTime,
    policy: CircuitPolicy,
    instrumented: HashSet<RelayId>,
    rng: SimRng,
    circuits: Vec<Circuit>,
    streams: Vec<Stream>,
    newest: HashMap<(HostId, IsolationKey), CircuitId>,
}

impl TorOverlay {
    pub fn new(
        directory: Directory,
        n_hops: usize,
        circuit_lifetime: SimTime,
        policy: CircuitPolicy,
        instrumented: impl IntoIterator<Item = RelayId>,
        rng: SimRng,
    ) -> Self {
        Self {
            directory,
            n_hops,
            circuit_lifetime,
            policy,
            instrumented: instrumented.into_iter().collect(),
            rng,
            circuits: Vec::new(),
            streams: Vec::new(),
            newest: HashMap::new(),
        }
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn policy(&self) -> &CircuitPolicy {
        &self.policy
    }

    pub fn circuit_lifetime(&self) -> SimTime {
        self.circuit_lifetime
    }

    pub fn circuit(&self, id: CircuitId) -> &Circuit {
        &self.circuits[id.0 as usize]
    }

    pub fn circuits(&self) -> &[Circuit] {
        &self.circuits
    }

    pub fn stream(&self, id: StreamId) -> &Stream {
        &self.streams[id.0 as usize]
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn is_instrumented(&self, relay: RelayId) -> bool {
        self.instrumented.contains(&relay)
    }

    pub fn exit_of(&self, stream: StreamId) -> RelayId {
        self.circuit(self.stream(stream).circuit).exit()
    }

    /// Hosts a cell crosses from the client to the exit.
    pub fn path_hosts(&self, circuit: CircuitId) -> Vec<HostId> {
        let c = self.circuit(circuit);
        std::iter::once(c.owner)
            .chain(c.hops.iter().map(|r| self.directory.get(*r).host))
            .collect()
    }

    pub fn build_circuit(
        &mut self,
        client: HostId,
        now: SimTime,
        isolation: Option<IsolationKey>,
    ) -> Result<CircuitId, InsufficientRelays> {
        let hops = select_path(&self.directory, self.n_hops, &mut self.rng)?;
        let id = CircuitId(self.circuits.len() as u32);
        self.circuits.push(Circuit {
            id,
            hops,
            owner: client,
            streams: Vec::new(),
            created_at: now,
            isolation,
        });
        if let Some(key) = isolation {
            self.newest.insert((client, key), id);
        }
        Ok(id)
    }

    /// Attaches a new stream to a circuit chosen by the policy: the client's
    /// newest circuit with the same isolation key if it is younger than the
    /// circuit lifetime, otherwise a freshly built one.
    pub fn open_stream(
        &mut self,
        client: HostId,
        destination: Endpoint,
        app: AppTag,
        now: SimTime,
        encrypted_payload: bool,
    ) -> Result<StreamId, InsufficientRelays> {
        let key = self.policy.isolation_key(destination.port, app);
        let reusable = key
            .and_then(|k| self.newest.get(&(client, k)).copied())
            .filter(|&c| now.saturating_sub(self.circuit(c).created_at) < self.circuit_lifetime);
        let circuit = match reusable {
            Some(c) => c,
            None => self.build_circuit(client, now, key)?,
        };
        let id = StreamId(self.streams.len() as u32);
        self.streams.push(Stream {
            id,
            circuit,
            destination,
            opened_at: now,
            app,
            class: None,
            encrypted_payload,
        });
        self.circuits[circuit.0 as usize].streams.push(id);
        Ok(id)
    }

    /// Relays the first payload of `stream` out of its exit. The stream's
    /// class is recorded either way; a view is returned only when the exit is
    /// instrumented.
    pub fn exit_deliver(
        &mut self,
        stream: StreamId,
        payload: &[u8],
        at: SimTime,
    ) -> Option<ExitView> {
        let s = &self.streams[stream.0 as usize];
        let class = classify_stream(payload, s.destination.port);
        let circuit = s.circuit;
        let destination = s.destination;
        self.streams[stream.0 as usize].class = Some(class);
        let exit = self.circuit(circuit).exit();
        if !self.is_instrumented(exit) {
            return None;
        }
        Some(ExitView {
            circuit,
            stream,
            exit,
            destination,
            payload_prefix: payload[..payload.len().min(TAP_WINDOW)].to_vec(),
            class,
            at,
        })
    }
}
