//! HTTP tracker announces and their bencoded responses.

use thiserror::Error;

use super::bencode::{bdecode, bencode, BValue, MalformedBencoding};
use super::compact::{decode_compact_peers, encode_compact_peers, BadCompactLength};
use crate::{Endpoint, InfoHash, PeerId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackerCodecError {
    #[error("not an HTTP announce request: {0}")]
    NotAnnounce(&'static str),
    #[error("missing or invalid announce parameter `{0}`")]
    BadParam(&'static str),
    #[error("invalid percent-encoding")]
    BadPercentEncoding,
    #[error("malformed HTTP response: {0}")]
    BadResponse(&'static str),
    #[error("tracker failure: {0}")]
    Failure(String),
    #[error(transparent)]
    Bencode(#[from] MalformedBencoding),
    #[error(transparent)]
    Compact(#[from] BadCompactLength),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnnounceEvent {
    Started,
    Stopped,
    Completed,
    /// Regular re-announce; sent without an `event` parameter.
    Periodic,
}

impl AnnounceEvent {
    fn as_param(self) -> Option<&'static str> {
        match self {
            AnnounceEvent::Started => Some("started"),
            AnnounceEvent::Stopped => Some("stopped"),
            AnnounceEvent::Completed => Some("completed"),
            AnnounceEvent::Periodic => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnounceRequest {
    pub info_hash: InfoHash,
    pub peer_id: PeerId,
    pub port: u16,
    pub event: AnnounceEvent,
}

impl AnnounceRequest {
    /// Renders the announce as an HTTP/1.1 GET. Binary parameters are
    /// percent-encoded byte by byte.
    pub fn encode_http(&self, host: &str) -> Vec<u8> {
        let mut target = String::from("/announce?info_hash=");
        percent_encode_all(self.info_hash.as_bytes(), &mut target);
        target.push_str("&peer_id=");
        percent_encode_all(self.peer_id.as_bytes(), &mut target);
        target.push_str(&format!("&port={}", self.port));
        if let Some(ev) = self.event.as_param() {
            target.push_str("&event=");
            target.push_str(ev);
        }
        format!("GET {target} HTTP/1.1\r\nHost: {host}\r\n\r\n").into_bytes()
    }

    pub fn parse_http(bytes: &[u8]) -> Result<Self, TrackerCodecError> {
        Self::parse_http_with_host(bytes).map(|(req, _)| req)
    }

    /// Parses a full request and also returns its `Host` header.
    pub fn parse_http_with_host(bytes: &[u8]) -> Result<(Self, String), TrackerCodecError> {
        let text =
            std::str::from_utf8(bytes).map_err(|_| TrackerCodecError::NotAnnounce("not ASCII"))?;
        let (head, rest) = text
            .split_once("\r\n\r\n")
            .ok_or(TrackerCodecError::NotAnnounce("unterminated header"))?;
        if !rest.is_empty() {
            return Err(TrackerCodecError::NotAnnounce("unexpected body"));
        }
        let mut lines = head.split("\r\n");
        let request_line = lines.next().unwrap_or_default();
        let query = announce_query(request_line.as_bytes())
            .ok_or(TrackerCodecError::NotAnnounce("request line"))?;
        let query =
            std::str::from_utf8(query).map_err(|_| TrackerCodecError::NotAnnounce("query"))?;
        let mut host = None;
        for line in lines {
            if let Some(v) = line.strip_prefix("Host: ") {
                host = Some(v.to_string());
            } else {
                return Err(TrackerCodecError::NotAnnounce("unexpected header"));
            }
        }
        let host = host.ok_or(TrackerCodecError::NotAnnounce("missing Host header"))?;

        let mut info_hash = None;
        let mut peer_id = None;
        let mut port = None;
        let mut event = AnnounceEvent::Periodic;
        for pair in query.split('&') {
            let (k, v) = pair
                .split_once('=')
                .ok_or(TrackerCodecError::BadParam("query"))?;
            match k {
                "info_hash" => {
                    info_hash = Some(
                        InfoHash::from_slice(&percent_decode(v)?)
                            .ok_or(TrackerCodecError::BadParam("info_hash"))?,
                    )
                }
                "peer_id" => {
                    peer_id = Some(
                        PeerId::from_slice(&percent_decode(v)?)
                            .ok_or(TrackerCodecError::BadParam("peer_id"))?,
                    )
                }
                "port" => {
                    let p: u16 = v.parse().map_err(|_| TrackerCodecError::BadParam("port"))?;
                    if p == 0 || v.starts_with('0') {
                        return Err(TrackerCodecError::BadParam("port"));
                    }
                    port = Some(p);
                }
                "event" => {
                    event = match v {
                        "started" => AnnounceEvent::Started,
                        "stopped" => AnnounceEvent::Stopped,
                        "completed" => AnnounceEvent::Completed,
                        _ => return Err(TrackerCodecError::BadParam("event")),
                    }
                }
                _ => return Err(TrackerCodecError::BadParam("unknown key")),
            }
        }
        Ok((
            AnnounceRequest {
                info_hash: info_hash.ok_or(TrackerCodecError::BadParam("info_hash"))?,
                peer_id: peer_id.ok_or(TrackerCodecError::BadParam("peer_id"))?,
                port: port.ok_or(TrackerCodecError::BadParam("port"))?,
                event,
            },
            host,
        ))
    }
}

/// Returns the query string of an announce request line
/// (`GET /announce?... HTTP/1.x`), if the line is one.
pub(crate) fn announce_query(request_line: &[u8]) -> Option<&[u8]> {
    let rest = request_line.strip_prefix(b"GET ")?;
    let sp = rest.iter().position(|&b| b == b' ')?;
    let (target, version) = rest.split_at(sp);
    if !version.starts_with(b" HTTP/1.") {
        return None;
    }
    let q = target.iter().position(|&b| b == b'?')?;
    Some(&target[q + 1..])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnounceResponse {
    pub interval: u32,
    pub peers: Vec<Endpoint>,
}

impl AnnounceResponse {
    pub fn to_bvalue(&self) -> BValue {
        BValue::dict([
            ("interval", BValue::Int(i64::from(self.interval))),
            ("peers", BValue::Bytes(encode_compact_peers(&self.peers))),
        ])
    }

    pub fn encode_body(&self) -> Vec<u8> {
        bencode(&self.to_bvalue())
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, TrackerCodecError> {
        let v = bdecode(body)?;
        if let Some(reason) = v.get("failure reason").and_then(BValue::as_bytes) {
            return Err(TrackerCodecError::Failure(
                String::from_utf8_lossy(reason).into_owned(),
            ));
        }
        let dict = v
            .as_dict()
            .ok_or(TrackerCodecError::BadResponse("body is not a dict"))?;
        if dict.len() != 2 {
            return Err(TrackerCodecError::BadResponse("unexpected keys"));
        }
        let interval = v
            .get("interval")
            .and_then(BValue::as_int)
            .and_then(|i| u32::try_from(i).ok())
            .ok_or(TrackerCodecError::BadResponse("interval"))?;
        let peers = v
            .get("peers")
            .and_then(BValue::as_bytes)
            .ok_or(TrackerCodecError::BadResponse("peers"))?;
        Ok(AnnounceResponse {
            interval,
            peers: decode_compact_peers(peers)?,
        })
    }

    pub fn encode_http(&self) -> Vec<u8> {
        let body = self.encode_body();
        let mut out = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\nContent-Length: {}\r\n\r\n",
            body.len()
        )
        .into_bytes();
        out.extend_from_slice(&body);
        out
    }

    pub fn parse_http(bytes: &[u8]) -> Result<Self, TrackerCodecError> {
        let split = bytes
            .windows(4)
            .position(|w| w == b"\r\n\r\n")
            .ok_or(TrackerCodecError::BadResponse("unterminated header"))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|_| TrackerCodecError::BadResponse("header not ASCII"))?;
        let body = &bytes[split + 4..];
        let mut lines = head.split("\r\n");
        if lines.next() != Some("HTTP/1.1 200 OK") {
            return Err(TrackerCodecError::BadResponse("status line"));
        }
        let mut length = None;
        for line in lines {
            if let Some(v) = line.strip_prefix("Content-Length: ") {
                length = v.parse::<usize>().ok();
            }
        }
        if length != Some(body.len()) {
            return Err(TrackerCodecError::BadResponse("content length"));
        }
        let resp = Self::decode_body(body)?;
        if resp.encode_http() != bytes {
            return Err(TrackerCodecError::BadResponse("non-canonical framing"));
        }
        Ok(resp)
    }
}

fn percent_encode_all(bytes: &[u8], out: &mut String) {
    const HEX: &[u8; 16] = b"0123456789ABCDEF";
    for &b in bytes {
        out.push('%');
        out.push(HEX[(b >> 4) as usize] as char);
        out.push(HEX[(b & 0xF) as usize] as char);
    }
}

fn percent_decode(s: &str) -> Result<Vec<u8>, TrackerCodecError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len() / 3);
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or(TrackerCodecError::BadPercentEncoding)?;
            let hex =
                std::str::from_utf8(hex).map_err(|_| TrackerCodecError::BadPercentEncoding)?;
            out.push(
                u8::from_str_radix(hex, 16).map_err(|_| TrackerCodecError::BadPercentEncoding)?,
            );
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Ok(out)
}
