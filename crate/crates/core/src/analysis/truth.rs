use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bt::Behavior;
use crate::sim::{HostId, SimTime};
use crate::tor::{AppTag, CircuitId, StreamId};
use crate::wire::StreamClass;
use crate::Endpoint;

/// One delivered stream as it really was.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamTruth {
    pub stream: StreamId,
    pub circuit: CircuitId,
    pub owner: HostId,
    pub app: AppTag,
    pub class: StreamClass,
    pub dst_port: u16,
    pub opened_at: SimTime,
    /// Whether the stream left through an instrumented exit.
    pub instrumented: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTruth {
    pub host: HostId,
    /// Public IP and, for BitTorrent users, the listening port.
    pub endpoint: Endpoint,
    pub country: String,
    pub asn: u32,
    /// `None` for users that only browse.
    pub behavior: Option<Behavior>,
}

impl UserTruth {
    pub fn is_tor_bt_user(&self) -> bool {
        self.behavior.is_some_and(|b| b != Behavior::NoTor)
    }
}

/// Everything the adversary is not supposed to know.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Indexed by stream id; undelivered streams are left out.
    pub streams: Vec<StreamTruth>,
    /// Indexed by circuit id.
    pub circuit_owners: Vec<HostId>,
    pub users: BTreeMap<HostId, UserTruth>,
}

impl GroundTruth {
    pub fn owner_of(&self, c: CircuitId) -> Option<&UserTruth> {
        self.circuit_owners
            .get(c.0 as usize)
            .and_then(|h| self.users.get(h))
    }
}
