use std::collections::HashMap;

use thiserror::Error;

use super::{SubscriptionSource, SwarmState};
use crate::sim::SimTime;
use crate::wire::AnnounceResponse;
use crate::{Endpoint, InfoHash};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("tracker does not know {0:?}")]
pub struct UnknownInfoHash(pub InfoHash);

/// A centralized tracker serving a fixed set of content items.
#[derive(Clone, Debug)]
pub struct Tracker {
    pub endpoint: Endpoint,
    swarms: HashMap<InfoHash, SwarmState>,
    interval: SimTime,
    max_peers: usize,
}

impl Tracker {
    pub fn new(
        endpoint: Endpoint,
        known: impl IntoIterator<Item = InfoHash>,
        interval: SimTime,
        max_peers: usize,
    ) -> Self {
        Self {
            endpoint,
            swarms: known.into_iter().map(|h| (h, SwarmState::new(h))).collect(),
            interval,
            max_peers,
        }
    }

    pub fn swarm(&self, info_hash: &InfoHash) -> Option<&SwarmState> {
        self.swarms.get(info_hash)
    }

    pub fn swarms(&self) -> impl Iterator<Item = &SwarmState> {
        self.swarms.values()
    }

    /// Drops `endpoint` from the swarm, as on a `stopped` announce.
    pub fn remove(
        &mut self,
        info_hash: &InfoHash,
        endpoint: Endpoint,
    ) -> Result<(), UnknownInfoHash> {
        self.swarms
            .get_mut(info_hash)
            .ok_or(UnknownInfoHash(*info_hash))?
            .unsubscribe(endpoint);
        Ok(())
    }

    /// Registers `declared` (the announcing peer's public IP and listening
    /// port) and answers with the most recent other subscribers.
    pub fn announce(
        &mut self,
        info_hash: InfoHash,
        declared: Endpoint,
        via: SubscriptionSource,
        now: SimTime,
    ) -> Result<AnnounceResponse, UnknownInfoHash> {
        let swarm = self
            .swarms
            .get_mut(&info_hash)
            .ok_or(UnknownInfoHash(info_hash))?;
        swarm.expire(now, SimTime(self.interval.ticks() * 2));
        let peers = swarm.most_recent(self.max_peers, declared);
        swarm.subscribe(declared, now, via);
        Ok(AnnounceResponse {
            interval: (self.interval.ticks() / 1000) as u32,
            peers,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use super::*;

    #[test]
    fn announce_sequence() {
        let h = InfoHash([1; 20]);
        let mut t = Tracker::new(
            Endpoint::new(Ipv4Addr::new(1, 1, 1, 1), 6969),
            [h],
            SimTime::from_secs(600),
            50,
        );
        let a = Endpoint::new(Ipv4Addr::new(2, 2, 2, 2), 6881);
        let b = Endpoint::new(Ipv4Addr::new(3, 3, 3, 3), 6882);
        let c = Endpoint::new(Ipv4Addr::new(4, 4, 4, 4), 6883);
        let r = t
            .announce(h, a, SubscriptionSource::Direct, SimTime(0))
            .unwrap();
        assert!(r.peers.is_empty());
        assert_eq!(r.interval, 600);
        t.announce(h, b, SubscriptionSource::TorExit, SimTime(1))
            .unwrap();
        let r = t
            .announce(h, c, SubscriptionSource::Direct, SimTime(2))
            .unwrap();
        assert_eq!(r.peers, vec![b, a]);
        let sub = t.swarm(&h).unwrap().subscribers()[1];
        assert_eq!((sub.endpoint, sub.via), (b, SubscriptionSource::TorExit));
        assert_eq!(
            t.announce(InfoHash([2; 20]), a, SubscriptionSource::Direct, SimTime(3)),
            Err(UnknownInfoHash(InfoHash([2; 20])))
        );
    }
}
