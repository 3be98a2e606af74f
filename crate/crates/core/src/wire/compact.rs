use std::net::Ipv4Addr;

use thiserror::Error;

use crate::Endpoint;

pub const COMPACT_PEER_LEN: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("compact peer list length {0} is not a multiple of 6")]
pub struct BadCompactLength(pub usize);

/// 4-byte big-endian IPv4 followed by a 2-byte big-endian port, per peer.
pub fn encode_compact_peers(peers: &[Endpoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(peers.len() * COMPACT_PEER_LEN);
    for p in peers {
        out.extend_from_slice(&compact_peer(p));
    }
    out
}

pub fn compact_peer(p: &Endpoint) -> [u8; COMPACT_PEER_LEN] {
    let ip = p.ip.octets();
    let port = p.port.to_be_bytes();
    [ip[0], ip[1], ip[2], ip[3], port[0], port[1]]
}

pub fn decode_compact_peers(bytes: &[u8]) -> Result<Vec<Endpoint>, BadCompactLength> {
    if !bytes.len().is_multiple_of(COMPACT_PEER_LEN) {
        return Err(BadCompactLength(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(COMPACT_PEER_LEN)
        .map(|c| {
            Endpoint::new(
                Ipv4Addr::new(c[0], c[1], c[2], c[3]),
                u16::from_be_bytes([c[4], c[5]]),
            )
        })
        .collect())
}
