//! KRPC messages for DHT `get_peers` and `announce_peer`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::bencode::{bdecode, bencode, BValue, MalformedBencoding};
use super::compact::{compact_peer, decode_compact_peers, COMPACT_PEER_LEN};
use crate::{Endpoint, InfoHash};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KrpcError {
    #[error("malformed KRPC message: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Bencode(#[from] MalformedBencoding),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KrpcKind {
    GetPeersQuery,
    GetPeersResponse,
    AnnouncePeerQuery,
    AnnouncePeerResponse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KrpcBody {
    GetPeersQuery {
        node_id: [u8; 20],
        info_hash: InfoHash,
    },
    GetPeersResponse {
        node_id: [u8; 20],
        token: Vec<u8>,
        peers: Vec<Endpoint>,
    },
    AnnouncePeerQuery {
        node_id: [u8; 20],
        info_hash: InfoHash,
        port: u16,
        token: Vec<u8>,
        implied_port: Option<bool>,
    },
    AnnouncePeerResponse {
        node_id: [u8; 20],
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KrpcMessage {
    pub txn_id: Vec<u8>,
    pub body: KrpcBody,
}

impl KrpcMessage {
    pub fn kind(&self) -> KrpcKind {
        match self.body {
            KrpcBody::GetPeersQuery { .. } => KrpcKind::GetPeersQuery,
            KrpcBody::GetPeersResponse { .. } => KrpcKind::GetPeersResponse,
            KrpcBody::AnnouncePeerQuery { .. } => KrpcKind::AnnouncePeerQuery,
            KrpcBody::AnnouncePeerResponse { .. } => KrpcKind::AnnouncePeerResponse,
        }
    }

    pub fn is_query(&self) -> bool {
        matches!(
            self.kind(),
            KrpcKind::GetPeersQuery | KrpcKind::AnnouncePeerQuery
        )
    }

    /// Builds a response that echoes this query's transaction id.
    pub fn reply(&self, body: KrpcBody) -> KrpcMessage {
        KrpcMessage {
            txn_id: self.txn_id.clone(),
            body,
        }
    }

    pub fn to_bvalue(&self) -> BValue {
        let mut top = BTreeMap::new();
        top.insert(b"t".to_vec(), BValue::Bytes(self.txn_id.clone()));
        let (kind, args) = match &self.body {
            KrpcBody::GetPeersQuery { node_id, info_hash } => (
                Some("get_peers"),
                BValue::dict([
                    ("id", BValue::bytes(node_id)),
                    ("info_hash", BValue::bytes(info_hash.as_bytes())),
                ]),
            ),
            KrpcBody::AnnouncePeerQuery {
                node_id,
                info_hash,
                port,
                token,
                implied_port,
            } => {
                let mut a = vec![
                    ("id", BValue::bytes(node_id)),
                    ("info_hash", BValue::bytes(info_hash.as_bytes())),
                    ("port", BValue::Int(i64::from(*port))),
                    ("token", BValue::bytes(token)),
                ];
                if let Some(implied) = implied_port {
                    a.push(("implied_port", BValue::Int(i64::from(*implied))));
                }
                (Some("announce_peer"), BValue::dict(a))
            }
            KrpcBody::GetPeersResponse {
                node_id,
                token,
                peers,
            } => (
                None,
                BValue::dict([
                    ("id", BValue::bytes(node_id)),
                    ("token", BValue::bytes(token)),
                    (
                        "values",
                        BValue::List(
                            peers
                                .iter()
                                .map(|p| BValue::bytes(compact_peer(p)))
                                .collect(),
                        ),
                    ),
                ]),
            ),
            KrpcBody::AnnouncePeerResponse { node_id } => {
                (None, BValue::dict([("id", BValue::bytes(node_id))]))
            }
        };
        match kind {
            Some(q) => {
                top.insert(b"y".to_vec(), BValue::bytes("q"));
                top.insert(b"q".to_vec(), BValue::bytes(q));
                top.insert(b"a".to_vec(), args);
            }
            None => {
                top.insert(b"y".to_vec(), BValue::bytes("r"));
                top.insert(b"r".to_vec(), args);
            }
        }
        BValue::Dict(top)
    }

    pub fn encode(&self) -> Vec<u8> {
        bencode(&self.to_bvalue())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, KrpcError> {
        use KrpcError::Malformed;
        let v = bdecode(bytes)?;
        let top = v.as_dict().ok_or(Malformed("not a dict"))?;
        let txn_id = v
            .get("t")
            .and_then(BValue::as_bytes)
            .ok_or(Malformed("t"))?
            .to_vec();
        let y = v
            .get("y")
            .and_then(BValue::as_bytes)
            .ok_or(Malformed("y"))?;
        let body = match y {
            b"q" => {
                if top.len() != 4 {
                    return Err(Malformed("unexpected top-level keys"));
                }
                let a = v.get("a").ok_or(Malformed("a"))?;
                let ad = a.as_dict().ok_or(Malformed("a"))?;
                let node_id = id20(a, "id")?;
                let info_hash = InfoHash(id20(a, "info_hash")?);
                match v
                    .get("q")
                    .and_then(BValue::as_bytes)
                    .ok_or(Malformed("q"))?
                {
                    b"get_peers" => {
                        if ad.len() != 2 {
                            return Err(Malformed("unexpected get_peers args"));
                        }
                        KrpcBody::GetPeersQuery { node_id, info_hash }
                    }
                    b"announce_peer" => {
                        let port = a
                            .get("port")
                            .and_then(BValue::as_int)
                            .and_then(|p| u16::try_from(p).ok())
                            .ok_or(Malformed("port"))?;
                        let token = a
                            .get("token")
                            .and_then(BValue::as_bytes)
                            .ok_or(Malformed("token"))?
                            .to_vec();
                        let implied_port = match a.get("implied_port") {
                            None => None,
                            Some(BValue::Int(0)) => Some(false),
                            Some(BValue::Int(1)) => Some(true),
                            Some(_) => return Err(Malformed("implied_port")),
                        };
                        if ad.len() != 4 + usize::from(implied_port.is_some()) {
                            return Err(Malformed("unexpected announce_peer args"));
                        }
                        KrpcBody::AnnouncePeerQuery {
                            node_id,
                            info_hash,
                            port,
                            token,
                            implied_port,
                        }
                    }
                    _ => return Err(Malformed("unsupported query")),
                }
            }
            b"r" => {
                if top.len() != 3 {
                    return Err(Malformed("unexpected top-level keys"));
                }
                let r = v.get("r").ok_or(Malformed("r"))?;
                let rd = r.as_dict().ok_or(Malformed("r"))?;
                let node_id = id20(r, "id")?;
                match r.get("token") {
                    Some(token) => {
                        let token = token.as_bytes().ok_or(Malformed("token"))?.to_vec();
                        let values = r
                            .get("values")
                            .and_then(BValue::as_list)
                            .ok_or(Malformed("values"))?;
                        if rd.len() != 3 {
                            return Err(Malformed("unexpected response keys"));
                        }
                        let mut peers = Vec::with_capacity(values.len());
                        for value in values {
                            let raw = value
                                .as_bytes()
                                .filter(|b| b.len() == COMPACT_PEER_LEN)
                                .ok_or(Malformed("values entry"))?;
                            peers.extend(
                                decode_compact_peers(raw).map_err(|_| Malformed("values entry"))?,
                            );
                        }
                        KrpcBody::GetPeersResponse {
                            node_id,
                            token,
                            peers,
                        }
                    }
                    None => {
                        if rd.len() != 1 {
                            return Err(Malformed("unexpected response keys"));
                        }
                        KrpcBody::AnnouncePeerResponse { node_id }
                    }
                }
            }
            _ => return Err(Malformed("y")),
        };
        Ok(KrpcMessage { txn_id, body })
    }
}

fn id20(dict: &BValue, key: &'static str) -> Result<[u8; 20], KrpcError> {
    dict.get(key)
        .and_then(BValue::as_bytes)
        .and_then(|b| <[u8; 20]>::try_from(b).ok())
        .ok_or(KrpcError::Malformed(key))
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use super::*;

    const ID: [u8; 20] = *b"abcdefghij0123456789";
    const HASH: [u8; 20] = *b"mnopqrstuvwxyz123456";

    #[test]
    fn get_peers_query_matches_reference_bytes() {
        let q = KrpcMessage {
            txn_id: b"aa".to_vec(),
            body: KrpcBody::GetPeersQuery {
                node_id: ID,
                info_hash: InfoHash(HASH),
            },
        };
        assert_eq!(
            q.encode(),
            b"d1:ad2:id20:abcdefghij01234567899:info_hash20:mnopqrstuvwxyz123456e1:q9:get_peers1:t2:aa1:y1:qe"
        );
        assert_eq!(KrpcMessage::decode(&q.encode()).unwrap(), q);
    }

    #[test]
    fn response_echoes_txn() {
        let q = KrpcMessage {
            txn_id: b"zz".to_vec(),
            body: KrpcBody::AnnouncePeerQuery {
                node_id: ID,
                info_hash: InfoHash(HASH),
                port: 6881,
                token: b"tok".to_vec(),
                implied_port: None,
            },
        };
        let r = q.reply(KrpcBody::AnnouncePeerResponse { node_id: HASH });
        assert_eq!(r.txn_id, q.txn_id);
        assert_eq!(r.kind(), KrpcKind::AnnouncePeerResponse);
        assert_eq!(KrpcMessage::decode(&r.encode()).unwrap(), r);
        assert_eq!(KrpcMessage::decode(&q.encode()).unwrap(), q);
    }

    #[test]
    fn get_peers_response_values() {
        let r = KrpcMessage {
            txn_id: b"aa".to_vec(),
            body: KrpcBody::GetPeersResponse {
                node_id: ID,
                token: b"aoeusnth".to_vec(),
                peers: vec![
                    Endpoint::new(Ipv4Addr::new(97, 120, 106, 101), 11893),
                    Endpoint::new(Ipv4Addr::new(105, 100, 104, 116), 28269),
                ],
            },
        };
        assert_eq!(
            r.encode(),
            b"d1:rd2:id20:abcdefghij01234567895:token8:aoeusnth6:valuesl6:axje.u6:idhtnmee1:t2:aa1:y1:re"
        );
        assert_eq!(KrpcMessage::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn rejects_unknown_query() {
        assert!(
            KrpcMessage::decode(b"d1:ad2:id20:abcdefghij0123456789e1:q4:ping1:t2:aa1:y1:qe")
                .is_err()
        );
    }
}
