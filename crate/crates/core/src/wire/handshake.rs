//! BitTorrent peer handshake, optionally followed by the extension-protocol
//! handshake that carries the listening port.

use thiserror::Error;

use super::bencode::{bdecode, bencode, BValue, MalformedBencoding};
use crate::{InfoHash, PeerId};

pub const PROTOCOL: &[u8; 19] = b"BitTorrent protocol";
pub const HANDSHAKE_LEN: usize = 68;
/// Length byte plus protocol string: the prefix the classifier keys on.
pub const HEADER_PREFIX_LEN: usize = 20;
const EXTENSION_BIT_BYTE: usize = 5;
const EXTENSION_BIT: u8 = 0x10;
const EXTENDED_MESSAGE_ID: u8 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("handshake truncated: {0} bytes")]
    Truncated(usize),
    #[error("bad protocol header")]
    BadHeader,
    #[error("malformed extended handshake: {0}")]
    BadExtended(&'static str),
    #[error(transparent)]
    Bencode(#[from] MalformedBencoding),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtendedHandshake {
    pub listening_port: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BtHandshake {
    pub reserved: [u8; 8],
    pub info_hash: InfoHash,
    pub peer_id: PeerId,
    pub extended: Option<ExtendedHandshake>,
}

impl BtHandshake {
    pub fn new(info_hash: InfoHash, peer_id: PeerId, listening_port: Option<u16>) -> Self {
        let mut reserved = [0u8; 8];
        if listening_port.is_some() {
            reserved[EXTENSION_BIT_BYTE] |= EXTENSION_BIT;
        }
        Self {
            reserved,
            info_hash,
            peer_id,
            extended: listening_port.map(|listening_port| ExtendedHandshake { listening_port }),
        }
    }

    pub fn supports_extensions(&self) -> bool {
        self.reserved[EXTENSION_BIT_BYTE] & EXTENSION_BIT != 0
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HANDSHAKE_LEN + 16);
        out.push(PROTOCOL.len() as u8);
        out.extend_from_slice(PROTOCOL);
        out.extend_from_slice(&self.reserved);
        out.extend_from_slice(self.info_hash.as_bytes());
        out.extend_from_slice(self.peer_id.as_bytes());
        if let Some(ext) = &self.extended {
            let payload = bencode(&BValue::dict([(
                "p",
                BValue::Int(i64::from(ext.listening_port)),
            )]));
            let len = (payload.len() + 2) as u32;
            out.extend_from_slice(&len.to_be_bytes());
            out.push(EXTENDED_MESSAGE_ID);
            out.push(0);
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, HandshakeError> {
        if !has_header(bytes) {
            return if bytes.len() < HEADER_PREFIX_LEN {
                Err(HandshakeError::Truncated(bytes.len()))
            } else {
                Err(HandshakeError::BadHeader)
            };
        }
        if bytes.len() < HANDSHAKE_LEN {
            return Err(HandshakeError::Truncated(bytes.len()));
        }
        let mut reserved = [0u8; 8];
        reserved.copy_from_slice(&bytes[20..28]);
        let info_hash = InfoHash::from_slice(&bytes[28..48]).ok_or(HandshakeError::BadHeader)?;
        let peer_id = PeerId::from_slice(&bytes[48..68]).ok_or(HandshakeError::BadHeader)?;
        let mut hs = BtHandshake {
            reserved,
            info_hash,
            peer_id,
            extended: None,
        };
        let rest = &bytes[HANDSHAKE_LEN..];
        if !rest.is_empty() {
            if !hs.supports_extensions() {
                return Err(HandshakeError::BadExtended("extension bit not set"));
            }
            hs.extended = Some(decode_extended(rest)?);
        }
        Ok(hs)
    }
}

/// The 20-byte header rule: length byte 19 followed by the protocol string.
pub fn has_header(bytes: &[u8]) -> bool {
    bytes.len() >= HEADER_PREFIX_LEN
        && bytes[0] == PROTOCOL.len() as u8
        && &bytes[1..20] == PROTOCOL
}

fn decode_extended(bytes: &[u8]) -> Result<ExtendedHandshake, HandshakeError> {
    if bytes.len() < 6 {
        return Err(HandshakeError::BadExtended("truncated"));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len != bytes.len() - 4 {
        return Err(HandshakeError::BadExtended("length prefix mismatch"));
    }
    if bytes[4] != EXTENDED_MESSAGE_ID || bytes[5] != 0 {
        return Err(HandshakeError::BadExtended("not an extended handshake"));
    }
    let dict = bdecode(&bytes[6..])?;
    let d = dict
        .as_dict()
        .ok_or(HandshakeError::BadExtended("payload is not a dict"))?;
    if d.len() != 1 {
        return Err(HandshakeError::BadExtended("unexpected keys"));
    }
    let port = dict
        .get("p")
        .and_then(BValue::as_int)
        .and_then(|p| u16::try_from(p).ok())
        .filter(|&p| p != 0)
        .ok_or(HandshakeError::BadExtended("listening port"))?;
    Ok(ExtendedHandshake {
        listening_port: port,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_layout() {
        let hs = BtHandshake::new(InfoHash([1; 20]), PeerId([2; 20]), None);
        let bytes = hs.encode();
        assert_eq!(bytes.len(), HANDSHAKE_LEN);
        assert_eq!(bytes[0], 19);
        assert_eq!(&bytes[1..20], b"BitTorrent protocol");
        assert_eq!(&bytes[20..28], &[0; 8]);
        assert_eq!(&bytes[28..48], &[1; 20]);
        assert_eq!(&bytes[48..68], &[2; 20]);
        assert_eq!(BtHandshake::decode(&bytes).unwrap(), hs);
    }

    #[test]
    fn extended_carries_port() {
        let hs = BtHandshake::new(InfoHash([1; 20]), PeerId([2; 20]), Some(51413));
        let bytes = hs.encode();
        assert_eq!(bytes[25], 0x10);
        assert_eq!(&bytes[68..74], &[0, 0, 0, 14, 20, 0]);
        assert_eq!(&bytes[74..], b"d1:pi51413ee");
        let back = BtHandshake::decode(&bytes).unwrap();
        assert_eq!(back.extended.unwrap().listening_port, 51413);
    }

    #[test]
    fn rejects_damage() {
        let bytes = BtHandshake::new(InfoHash([1; 20]), PeerId([2; 20]), Some(6881)).encode();
        assert!(BtHandshake::decode(&bytes[..67]).is_err());
        assert!(BtHandshake::decode(&bytes[..70]).is_err());
        let mut bad = bytes.clone();
        bad[3] = b'x';
        assert_eq!(BtHandshake::decode(&bad), Err(HandshakeError::BadHeader));
        let mut no_bit = bytes;
        no_bit[25] = 0;
        assert!(BtHandshake::decode(&no_bit).is_err());
    }
}
