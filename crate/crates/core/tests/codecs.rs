use std::collections::BTreeMap;
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use proptest::prelude::*;

use onion_trace::wire::fixtures::{validate_dir, FixtureKind};
use onion_trace::wire::{
    bdecode, bencode, classify_stream, decode_compact_peers, encode_compact_peers, AnnounceEvent,
    AnnounceRequest, BValue, BtHandshake, StreamClass,
};
use onion_trace::{Endpoint, InfoHash, PeerId};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/codecs");

fn bvalue() -> impl Strategy<Value = BValue> {
    let leaf = prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..24).prop_map(BValue::Bytes),
        any::<i64>().prop_map(BValue::Int),
    ];
    // Six levels of nesting at most.
    leaf.prop_recursive(6, 64, 5, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..5).prop_map(BValue::List),
            proptest::collection::btree_map(
                proptest::collection::vec(any::<u8>(), 0..8),
                inner,
                0..5
            )
            .prop_map(BValue::Dict),
        ]
    })
}

fn endpoint() -> impl Strategy<Value = Endpoint> {
    (any::<u32>(), any::<u16>()).prop_map(|(ip, port)| Endpoint::new(Ipv4Addr::from(ip), port))
}

#[derive(Clone, Debug)]
enum Mutation {
    Flip(usize, u8),
    Truncate(usize),
    Insert(usize, u8),
}

fn mutate(bytes: &[u8], m: &Mutation) -> Vec<u8> {
    let mut out = bytes.to_vec();
    match *m {
        Mutation::Flip(i, mask) if !out.is_empty() => {
            let i = i % out.len();
            out[i] ^= mask.max(1);
        }
        Mutation::Truncate(n) if !out.is_empty() => out.truncate(n % out.len()),
        Mutation::Insert(i, b) => out.insert(i % (out.len() + 1), b),
        _ => {}
    }
    out
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), any::<u8>()).prop_map(|(i, m)| Mutation::Flip(i, m)),
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Insert(i, b)),
    ]
}

proptest! {
    #[test]
    fn bencode_round_trips(v in bvalue()) {
        prop_assert_eq!(bdecode(&bencode(&v)).unwrap(), v);
    }

    #[test]
    fn mutated_encodings_decode_only_when_canonical(v in bvalue(), ms in proptest::collection::vec(mutation(), 1..4)) {
        let mut bytes = bencode(&v);
        for m in &ms {
            bytes = mutate(&bytes, m);
        }
        // Acceptance implies the input is exactly the canonical encoding.
        if let Ok(decoded) = bdecode(&bytes) {
            prop_assert_eq!(bencode(&decoded), bytes);
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        if let Ok(v) = bdecode(&bytes) {
            prop_assert_eq!(bencode(&v), bytes.clone());
        }
        let _ = classify_stream(&bytes, 6881);
        let _ = BtHandshake::decode(&bytes);
    }

    #[test]
    fn handshakes_are_never_http(ih in any::<[u8; 20]>(), pid in any::<[u8; 20]>(), port in proptest::option::of(any::<u16>()), dst in any::<u16>()) {
        let hs = BtHandshake::new(InfoHash(ih), PeerId(pid), port);
        let bytes = hs.encode();
        prop_assert_eq!(classify_stream(&bytes, dst), StreamClass::BtHandshake);
        prop_assert_eq!(BtHandshake::decode(&bytes).unwrap(), hs);
    }

    #[test]
    fn announces_classify_as_tracker(ih in any::<[u8; 20]>(), pid in any::<[u8; 20]>(), port in any::<u16>()) {
        let req = AnnounceRequest { info_hash: InfoHash(ih), peer_id: PeerId(pid), port, event: AnnounceEvent::Started };
        prop_assert_eq!(classify_stream(&req.encode_http("tracker.example"), 80), StreamClass::TrackerAnnounce);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn compact_peers_round_trip(peers in proptest::collection::vec(endpoint(), 0..=10_000)) {
        let bytes = encode_compact_peers(&peers);
        prop_assert_eq!(bytes.len(), 6 * peers.len());
        prop_assert_eq!(decode_compact_peers(&bytes).unwrap(), peers);
    }
}

#[test]
fn bencode_examples() {
    assert_eq!(bencode(&BValue::bytes("spam")), b"4:spam");
    assert_eq!(bencode(&BValue::Int(0)), b"i0e");
    assert_eq!(bencode(&BValue::dict([("a", BValue::Int(1))])), b"d1:ai1ee");
    assert_eq!(bdecode(b"i-3e").unwrap(), BValue::Int(-3));
    assert_eq!(bdecode(b"le").unwrap(), BValue::List(vec![]));
    for bad in [
        &b"i03e"[..],
        b"i-0e",
        b"d1:bi1e1:ai2ee",
        b"d1:ai1e1:ai2ee",
        b"4:spa",
        b"i1ei2e",
        b"",
    ] {
        assert!(bdecode(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
    }
    let mut d = BTreeMap::new();
    d.insert(
        b"k".to_vec(),
        BValue::List(vec![BValue::Int(-1), BValue::bytes("")]),
    );
    assert_eq!(bencode(&BValue::Dict(d)), b"d1:kli-1e0:ee");
}

#[test]
fn compact_examples() {
    let one = [Endpoint::new(Ipv4Addr::new(10, 0, 0, 1), 6881)];
    assert_eq!(
        encode_compact_peers(&one),
        [0x0A, 0x00, 0x00, 0x01, 0x1A, 0xE1]
    );
    assert!(encode_compact_peers(&[]).is_empty());
    let two = [
        Endpoint::new(Ipv4Addr::new(1, 2, 3, 4), 80),
        Endpoint::new(Ipv4Addr::new(5, 6, 7, 8), 443),
    ];
    let b = encode_compact_peers(&two);
    assert_eq!(b.len(), 12);
    assert_eq!(b[..6], [1, 2, 3, 4, 0, 0x50]);
    assert!(decode_compact_peers(&b[..11]).is_err());
}

#[test]
fn classify_examples() {
    let hs = BtHandshake::new(InfoHash([7; 20]), PeerId([9; 20]), None).encode();
    assert_eq!(classify_stream(&hs, 51413), StreamClass::BtHandshake);
    assert_eq!(
        classify_stream(
            b"GET /announce?info_hash=%01%02&port=6881 HTTP/1.1\r\n\r\n",
            80
        ),
        StreamClass::TrackerAnnounce
    );
    assert_eq!(
        classify_stream(b"GET /index.html HTTP/1.1\r\n\r\n", 80),
        StreamClass::Http
    );
    assert_eq!(classify_stream(b"", 80), StreamClass::Other);
    assert_eq!(
        classify_stream(&[0x16, 0x03, 0x01, 0x00], 443),
        StreamClass::Other
    );
    // Past the tap window nothing is seen.
    let mut late = vec![b'x'; 600];
    late.extend_from_slice(&hs);
    assert_eq!(classify_stream(&late, 6881), StreamClass::Other);
}

fn copy_fixtures(to: &Path) {
    for entry in fs::read_dir(FIXTURES).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
    }
}

#[test]
fn bundled_fixtures_pass_one_per_kind() {
    let report = validate_dir(Path::new(FIXTURES)).unwrap();
    assert!(
        report.all_passed(),
        "{:?}",
        report.failures().collect::<Vec<_>>()
    );
    assert!(report.warnings.is_empty());
    for kind in [
        FixtureKind::Bencode,
        FixtureKind::CompactPeers,
        FixtureKind::Handshake,
        FixtureKind::Krpc,
        FixtureKind::AnnounceRequest,
        FixtureKind::AnnounceResponse,
    ] {
        assert!(
            report.outcomes.iter().any(|o| o.kind == Some(kind)),
            "{kind:?}"
        );
    }
}

#[test]
fn corrupted_fixture_is_named() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path());
    let victim = dir.path().join("bencode_nested.bin");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[0] = b'x';
    fs::write(&victim, bytes).unwrap();
    let report = validate_dir(dir.path()).unwrap();
    let failed: Vec<&str> = report.failures().map(|o| o.name.as_str()).collect();
    assert_eq!(failed, ["bencode_nested.bin"]);
}

#[test]
fn empty_fixture_dir_warns() {
    let dir = tempfile::tempdir().unwrap();
    let report = validate_dir(dir.path()).unwrap();
    assert!(report.outcomes.is_empty());
    assert_eq!(report.warnings.len(), 1);
}
