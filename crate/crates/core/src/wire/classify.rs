//! Exit-side stream classification and identifier extraction.

use serde::{Deserialize, Serialize};

use super::handshake::{has_header, BtHandshake, HANDSHAKE_LEN};
use super::tracker::announce_query;
use crate::{InfoHash, PeerId};

/// Bytes of a new stream the exit tap looks at.
pub const TAP_WINDOW: usize = 512;

const HTTP_METHODS: [&[u8]; 9] = [
    b"GET", b"POST", b"HEAD", b"PUT", b"DELETE", b"OPTIONS", b"CONNECT", b"PATCH", b"TRACE",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamClass {
    BtHandshake,
    TrackerAnnounce,
    Http,
    Other,
}

/// Identifiers recovered from a classified stream prefix.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extracted {
    pub info_hash: Option<InfoHash>,
    pub peer_id: Option<PeerId>,
    pub listening_port: Option<u16>,
}

impl Extracted {
    pub fn is_empty(&self) -> bool {
        self.info_hash.is_none() && self.peer_id.is_none() && self.listening_port.is_none()
    }
}

/// Classifies a stream from its first bytes. Only the first [`TAP_WINDOW`]
/// bytes are inspected; the destination port plays no part in the decision.
pub fn classify_stream(payload_prefix: &[u8], _dst_port: u16) -> StreamClass {
    let window = &payload_prefix[..payload_prefix.len().min(TAP_WINDOW)];
    if has_header(window) {
        return StreamClass::BtHandshake;
    }
    let Some(line) = request_line(window) else {
        return StreamClass::Other;
    };
    match announce_query(line) {
        Some(query) if has_key(query, b"info_hash") && has_key(query, b"port") => {
            StreamClass::TrackerAnnounce
        }
        _ => StreamClass::Http,
    }
}

/// Returns the first line if it is a well-formed HTTP/1.x request line.
fn request_line(window: &[u8]) -> Option<&[u8]> {
    let end = window
        .windows(2)
        .position(|w| w == b"\r\n")
        .unwrap_or(window.len());
    let line = &window[..end];
    let sp = line.iter().position(|&b| b == b' ')?;
    if !HTTP_METHODS.contains(&&line[..sp]) {
        return None;
    }
    let rest = &line[sp + 1..];
    let sp2 = rest.iter().position(|&b| b == b' ')?;
    if sp2 == 0 {
        return None;
    }
    let version = &rest[sp2 + 1..];
    let ok = version.len() == 8 && version.starts_with(b"HTTP/1.") && version[7].is_ascii_digit();
    ok.then_some(line)
}

fn has_key(query: &[u8], key: &[u8]) -> bool {
    query
        .split(|&b| b == b'&')
        .any(|pair| pair.split(|&b| b == b'=').next() == Some(key))
}

/// Recovers content/peer identifiers and the listening port for the classes
/// that carry them.
pub fn extract_identifiers(payload_prefix: &[u8], class: StreamClass) -> Extracted {
    let window = &payload_prefix[..payload_prefix.len().min(TAP_WINDOW)];
    match class {
        StreamClass::BtHandshake => {
            if window.len() < HANDSHAKE_LEN {
                return Extracted::default();
            }
            // Prefer the full parse so the extended port is picked up; fall
            // back to the fixed 68-byte header if the extension is cut off.
            let hs = BtHandshake::decode(window)
                .or_else(|_| BtHandshake::decode(&window[..HANDSHAKE_LEN]));
            match hs {
                Ok(hs) => Extracted {
                    info_hash: Some(hs.info_hash),
                    peer_id: Some(hs.peer_id),
                    listening_port: hs.extended.map(|e| e.listening_port),
                },
                Err(_) => Extracted::default(),
            }
        }
        StreamClass::TrackerAnnounce => {
            let Some(query) = request_line(window).and_then(announce_query) else {
                return Extracted::default();
            };
            let mut out = Extracted::default();
            for pair in query.split(|&b| b == b'&') {
                let mut kv = pair.splitn(2, |&b| b == b'=');
                let (Some(k), Some(v)) = (kv.next(), kv.next()) else {
                    continue;
                };
                match k {
                    b"info_hash" => {
                        out.info_hash = lenient_decode(v).and_then(|b| InfoHash::from_slice(&b))
                    }
                    b"peer_id" => {
                        out.peer_id = lenient_decode(v).and_then(|b| PeerId::from_slice(&b))
                    }
                    b"port" => {
                        out.listening_port = std::str::from_utf8(v)
                            .ok()
                            .and_then(|s| s.parse::<u16>().ok())
                            .filter(|&p| p != 0)
                    }
                    _ => {}
                }
            }
            out
        }
        StreamClass::Http | StreamClass::Other => Extracted::default(),
    }
}

fn lenient_decode(v: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(v.len());
    let mut i = 0;
    while i < v.len() {
        if v[i] == b'%' {
            let hex = std::str::from_utf8(v.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(v[i]);
            i += 1;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::tracker::{AnnounceEvent, AnnounceRequest};

    #[test]
    fn handshake_is_recognised() {
        let hs = BtHandshake::new(InfoHash([7; 20]), PeerId([9; 20]), Some(6881)).encode();
        assert_eq!(classify_stream(&hs, 6881), StreamClass::BtHandshake);
        let ex = extract_identifiers(&hs, StreamClass::BtHandshake);
        assert_eq!(ex.info_hash, Some(InfoHash([7; 20])));
        assert_eq!(ex.peer_id, Some(PeerId([9; 20])));
        assert_eq!(ex.listening_port, Some(6881));
    }

    #[test]
    fn announce_vs_plain_http() {
        assert_eq!(
            classify_stream(b"GET /announce?info_hash=abc&port=6881 HTTP/1.1\r\n", 80),
            StreamClass::TrackerAnnounce
        );
        assert_eq!(
            classify_stream(b"GET /index.html HTTP/1.1\r\n", 80),
            StreamClass::Http
        );
        assert_eq!(
            classify_stream(b"GET /announce?info_hash=abc HTTP/1.1\r\n", 80),
            StreamClass::Http
        );
        assert_eq!(
            classify_stream(b"GET /search?q=info_hash%3Dx&portal=1 HTTP/1.1\r\n", 80),
            StreamClass::Http
        );
        assert_eq!(
            classify_stream(b"POST /form HTTP/1.0\r\n", 8080),
            StreamClass::Http
        );
    }

    #[test]
    fn everything_else_is_other() {
        assert_eq!(classify_stream(b"", 443), StreamClass::Other);
        assert_eq!(
            classify_stream(&[0x16, 0x03, 0x01, 0x02, 0x00], 443),
            StreamClass::Other
        );
        assert_eq!(
            classify_stream(b"SSH-2.0-OpenSSH_9.0\r\n", 22),
            StreamClass::Other
        );
        assert_eq!(classify_stream(b"GET /x", 80), StreamClass::Other);
        assert_eq!(
            classify_stream(b"\x13BitTorrent protoco", 6881),
            StreamClass::Other
        );
    }

    #[test]
    fn only_the_tap_window_is_inspected() {
        let mut long = b"GET /".to_vec();
        long.extend(std::iter::repeat_n(b'a', TAP_WINDOW));
        long.extend_from_slice(b" HTTP/1.1\r\n");
        assert_eq!(classify_stream(&long, 80), StreamClass::Other);
    }

    #[test]
    fn announce_extraction() {
        let req = AnnounceRequest {
            info_hash: InfoHash([0xFE; 20]),
            peer_id: PeerId([0x2D; 20]),
            port: 41000,
            event: AnnounceEvent::Periodic,
        };
        let bytes = req.encode_http("10.1.1.1:6969");
        assert_eq!(classify_stream(&bytes, 6969), StreamClass::TrackerAnnounce);
        let ex = extract_identifiers(&bytes, StreamClass::TrackerAnnounce);
        assert_eq!(ex.info_hash, Some(req.info_hash));
        assert_eq!(ex.peer_id, Some(req.peer_id));
        assert_eq!(ex.listening_port, Some(41000));
    }
}
