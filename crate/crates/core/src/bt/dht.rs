//! The DHT tracking service, modeled as a single logical key-value store
//! reached with KRPC messages over direct (never onion-routed) datagrams.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::{SubscriptionSource, SwarmState};
use crate::sim::SimTime;
use crate::wire::krpc::KrpcError;
use crate::wire::{KrpcBody, KrpcKind, KrpcMessage};
use crate::{Endpoint, InfoHash};

/// One datagram the DHT received, with the source address it saw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DhtMessageRecord {
    pub kind: KrpcKind,
    pub from: Endpoint,
    pub at: SimTime,
}

#[derive(Clone, Debug)]
pub struct DhtTracker {
    node_id: [u8; 20],
    swarms: HashMap<InfoHash, SwarmState>,
    ttl: SimTime,
    token_secret: u64,
    log: Vec<DhtMessageRecord>,
    next_txn: u16,
}

impl DhtTracker {
    pub fn new(node_id: [u8; 20], ttl: SimTime, token_secret: u64) -> Self {
        Self {
            node_id,
            swarms: HashMap::new(),
            ttl,
            token_secret,
            log: Vec::new(),
            next_txn: 0,
        }
    }

    pub fn messages(&self) -> &[DhtMessageRecord] {
        &self.log
    }

    pub fn swarms(&self) -> impl Iterator<Item = &SwarmState> {
        self.swarms.values()
    }

    fn token_for(&self, ip: Ipv4Addr) -> Vec<u8> {
        let x = (u64::from(u32::from(ip)) ^ self.token_secret).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        x.to_be_bytes().to_vec()
    }

    /// Handles one query datagram from `from` and returns the encoded reply.
    pub fn handle(
        &mut self,
        datagram: &[u8],
        from: Endpoint,
        now: SimTime,
    ) -> Result<Vec<u8>, KrpcError> {
        let msg = KrpcMessage::decode(datagram)?;
        self.log.push(DhtMessageRecord {
            kind: msg.kind(),
            from,
            at: now,
        });
        let body = match &msg.body {
            KrpcBody::GetPeersQuery { info_hash, .. } => KrpcBody::GetPeersResponse {
                node_id: self.node_id,
                token: self.token_for(from.ip),
                peers: self.current(info_hash, now),
            },
            KrpcBody::AnnouncePeerQuery {
                info_hash,
                port,
                token,
                implied_port,
                ..
            } => {
                if *token != self.token_for(from.ip) {
                    return Err(KrpcError::Malformed("bad token"));
                }
                let port = if implied_port.unwrap_or(false) {
                    from.port
                } else {
                    *port
                };
                self.swarms
                    .entry(*info_hash)
                    .or_insert_with(|| SwarmState::new(*info_hash))
                    .subscribe(
                        Endpoint::new(from.ip, port),
                        now,
                        SubscriptionSource::Direct,
                    );
                KrpcBody::AnnouncePeerResponse {
                    node_id: self.node_id,
                }
            }
            _ => return Err(KrpcError::Malformed("not a query")),
        };
        Ok(msg.reply(body).encode())
    }

    fn current(&mut self, info_hash: &InfoHash, now: SimTime) -> Vec<Endpoint> {
        match self.swarms.get_mut(info_hash) {
            Some(s) => {
                s.expire(now, self.ttl);
                s.subscribers().iter().map(|s| s.endpoint).collect()
            }
            None => Vec::new(),
        }
    }

    fn txn(&mut self) -> Vec<u8> {
        self.next_txn = self.next_txn.wrapping_add(1);
        self.next_txn.to_be_bytes().to_vec()
    }

    /// Sends a `get_peers` from `from` and returns every current subscriber.
    pub fn lookup(&mut self, info_hash: InfoHash, from: Endpoint, now: SimTime) -> Vec<Endpoint> {
        self.get_peers(info_hash, from, now).0
    }

    fn get_peers(
        &mut self,
        info_hash: InfoHash,
        from: Endpoint,
        now: SimTime,
    ) -> (Vec<Endpoint>, Vec<u8>) {
        let query = KrpcMessage {
            txn_id: self.txn(),
            body: KrpcBody::GetPeersQuery {
                node_id: client_node_id(from),
                info_hash,
            },
        };
        let reply = self
            .handle(&query.encode(), from, now)
            .and_then(|b| KrpcMessage::decode(&b))
            .expect("well-formed get_peers round trip");
        debug_assert_eq!(reply.txn_id, query.txn_id);
        match reply.body {
            KrpcBody::GetPeersResponse { peers, token, .. } => (peers, token),
            _ => unreachable!("get_peers is answered with values"),
        }
    }

    /// `get_peers` followed by `announce_peer`, both sent from the peer's
    /// public address. Returns the subscribers seen before announcing.
    pub fn announce_and_lookup(
        &mut self,
        info_hash: InfoHash,
        public: Endpoint,
        now: SimTime,
    ) -> Vec<Endpoint> {
        let (peers, token) = self.get_peers(info_hash, public, now);
        let announce = KrpcMessage {
            txn_id: self.txn(),
            body: KrpcBody::AnnouncePeerQuery {
                node_id: client_node_id(public),
                info_hash,
                port: public.port,
                token,
                implied_port: None,
            },
        };
        self.handle(&announce.encode(), public, now)
            .expect("announce with a fresh token is accepted");
        peers
    }
}

fn client_node_id(from: Endpoint) -> [u8; 20] {
    let mut id = [0u8; 20];
    id[..4].copy_from_slice(&from.ip.octets());
    id[4..6].copy_from_slice(&from.port.to_be_bytes());
    id
}
