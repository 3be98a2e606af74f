//! Golden-fixture round-tripping.
//!
//! Each fixture is a binary file whose name prefix selects the codec:
//! `bencode*`, `compact_peers*`, `handshake*`, `krpc*`, `announce_request*`
//! or `announce_response*`. A fixture passes when decoding succeeds and
//! re-encoding reproduces the file byte for byte.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::{bdecode, bencode, decode_compact_peers, encode_compact_peers};
use super::{AnnounceRequest, AnnounceResponse, BtHandshake, KrpcMessage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FixtureKind {
    Bencode,
    CompactPeers,
    Handshake,
    Krpc,
    AnnounceRequest,
    AnnounceResponse,
}

impl FixtureKind {
    pub fn from_file_name(name: &str) -> Option<Self> {
        // Longest prefixes first: `announce_request` before a bare `announce`.
        const PREFIXES: [(&str, FixtureKind); 6] = [
            ("announce_response", FixtureKind::AnnounceResponse),
            ("announce_request", FixtureKind::AnnounceRequest),
            ("compact_peers", FixtureKind::CompactPeers),
            ("handshake", FixtureKind::Handshake),
            ("bencode", FixtureKind::Bencode),
            ("krpc", FixtureKind::Krpc),
        ];
        PREFIXES
            .iter()
            .find(|(p, _)| name.starts_with(p))
            .map(|&(_, k)| k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub kind: Option<FixtureKind>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FixtureReport {
    pub outcomes: Vec<FixtureOutcome>,
    pub warnings: Vec<String>,
}

impl FixtureReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &FixtureOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }
}

/// Round-trips one buffer through the codec for `kind`.
pub fn round_trip(kind: FixtureKind, bytes: &[u8]) -> Result<(), String> {
    let again = match kind {
        FixtureKind::Bencode => bdecode(bytes)
            .map(|v| bencode(&v))
            .map_err(|e| e.to_string())?,
        FixtureKind::CompactPeers => decode_compact_peers(bytes)
            .map(|p| encode_compact_peers(&p))
            .map_err(|e| e.to_string())?,
        FixtureKind::Handshake => BtHandshake::decode(bytes)
            .map(|h| h.encode())
            .map_err(|e| e.to_string())?,
        FixtureKind::Krpc => KrpcMessage::decode(bytes)
            .map(|m| m.encode())
            .map_err(|e| e.to_string())?,
        FixtureKind::AnnounceRequest => AnnounceRequest::parse_http_with_host(bytes)
            .map(|(r, host)| r.encode_http(&host))
            .map_err(|e| e.to_string())?,
        FixtureKind::AnnounceResponse => AnnounceResponse::parse_http(bytes)
            .map(|r| r.encode_http())
            .map_err(|e| e.to_string())?,
    };
    if again == bytes {
        Ok(())
    } else {
        Err(format!(
            "re-encoding differs ({} vs {} bytes)",
            again.len(),
            bytes.len()
        ))
    }
}

/// Validates every regular file in `dir`, in file-name order.
pub fn validate_dir(dir: &Path) -> io::Result<FixtureReport> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();

    let mut report = FixtureReport::default();
    if names.is_empty() {
        report
            .warnings
            .push(format!("no fixtures found in {}", dir.display()));
    }
    for name in names {
        let bytes = fs::read(dir.join(&name))?;
        let kind = FixtureKind::from_file_name(&name);
        let (passed, detail) = match kind {
            None => (false, "unrecognised fixture name".to_string()),
            Some(k) => match round_trip(k, &bytes) {
                Ok(()) => (true, "ok".to_string()),
                Err(e) => (false, e),
            },
        };
        report.outcomes.push(FixtureOutcome {
            name,
            kind,
            passed,
            detail,
        });
    }
    Ok(report)
}
