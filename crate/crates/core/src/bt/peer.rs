use serde::{Deserialize, Serialize};

use crate::sim::HostId;
use crate::{Endpoint, InfoHash, PeerId};

/// How a peer uses the anonymity overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    NoTor,
    /// Announces to trackers through the overlay, connects to peers directly.
    TrackerOnlyViaTor,
    /// Tracker announces and peer connections both go through the overlay.
    AllViaTor,
}

impl Behavior {
    pub fn tracker_via_tor(self) -> bool {
        !matches!(self, Behavior::NoTor)
    }

    pub fn p2p_via_tor(self) -> bool {
        matches!(self, Behavior::AllViaTor)
    }
}

/// Split of overlay-using peers between the two overlay behaviors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorMix {
    pub tracker_only_via_tor: f64,
    pub all_via_tor: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        Self {
            tracker_only_via_tor: 0.72,
            all_via_tor: 0.28,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeerAgent {
    pub host: HostId,
    /// Public IP and listening port.
    pub public: Endpoint,
    /// Regenerated every session.
    pub peer_id: PeerId,
    pub behavior: Behavior,
    pub downloads: Vec<InfoHash>,
    pub dht_enabled: bool,
}

impl PeerAgent {
    pub fn listening_port(&self) -> u16 {
        self.public.port
    }
}

/// The address a connection target sees for a connection from `initiator`:
/// the exit relay's when the connection is onion-routed, the initiator's
/// own otherwise.
pub fn connect_source(initiator: &PeerAgent, exit: Option<Endpoint>) -> Endpoint {
    if initiator.behavior.p2p_via_tor() {
        exit.expect("onion-routed connections leave through an exit")
    } else {
        initiator.public
    }
}
