use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AppTag;

/// Explicit destination-port groups; every port not listed falls into one
/// shared remainder group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortGroups {
    pub groups: Vec<Vec<u16>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("port {0} is listed in more than one port group")]
pub struct PortGroupError(pub u16);

impl PortGroups {
    pub fn new(groups: Vec<Vec<u16>>) -> Result<Self, PortGroupError> {
        let g = Self { groups };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PortGroupError> {
        let mut seen = std::collections::HashSet::new();
        for port in self.groups.iter().flatten() {
            if !seen.insert(*port) {
                return Err(PortGroupError(*port));
            }
        }
        Ok(())
    }

    pub fn group_of(&self, port: u16) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&port))
            .unwrap_or(self.groups.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitPolicy {
    MultiplexAll,
    OneStreamPerCircuit,
    PortGroupIsolation(PortGroups),
    PerApplicationIsolation,
}

impl CircuitPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            CircuitPolicy::MultiplexAll => "multiplex_all",
            CircuitPolicy::OneStreamPerCircuit => "one_stream_per_circuit",
            CircuitPolicy::PortGroupIsolation(_) => "port_group_isolation",
            CircuitPolicy::PerApplicationIsolation => "per_application_isolation",
        }
    }

    /// The reuse key of a new stream, or `None` when it always gets a fresh
    /// circuit.
    pub fn isolation_key(&self, dst_port: u16, app: AppTag) -> Option<IsolationKey> {
        match self {
            CircuitPolicy::MultiplexAll => Some(IsolationKey::Shared),
            CircuitPolicy::OneStreamPerCircuit => None,
            CircuitPolicy::PortGroupIsolation(g) => {
                Some(IsolationKey::PortGroup(g.group_of(dst_port)))
            }
            CircuitPolicy::PerApplicationIsolation => Some(IsolationKey::App(app)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IsolationKey {
    Shared,
    PortGroup(usize),
    App(AppTag),
}
