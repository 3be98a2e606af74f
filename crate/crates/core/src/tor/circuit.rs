use serde::{Deserialize, Serialize};

use super::{IsolationKey, RelayId};
use crate::sim::{HostId, SimTime};
use crate::wire::StreamClass;
use crate::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CircuitId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId(pub u32);

/// Which client application opened a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppTag {
    BitTorrent,
    Browser,
}

#[derive(Clone, Debug)]
pub struct Circuit {
    pub id: CircuitId,
    /// Entry first, exit last.
    pub hops: Vec<RelayId>,
    /// Ground truth; never part of what the exit tap hands out.
    pub owner: HostId,
    pub streams: Vec<StreamId>,
    pub created_at: SimTime,
    pub isolation: Option<IsolationKey>,
}

impl Circuit {
    pub fn exit(&self) -> RelayId {
        *self.hops.last().expect("circuits have at least one hop")
    }
}

#[derive(Clone, Debug)]
pub struct Stream {
    pub id: StreamId,
    pub circuit: CircuitId,
    pub destination: Endpoint,
    pub opened_at: SimTime,
    pub app: AppTag,
    /// Filled in when the first payload reaches the exit.
    pub class: Option<StreamClass>,
    pub encrypted_payload: bool,
}
