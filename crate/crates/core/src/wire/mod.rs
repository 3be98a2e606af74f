//! Bit-exact encoders and decoders for the BitTorrent artifacts that cross an
//! exit relay.

pub mod bencode;
pub mod classify;
pub mod compact;
pub mod fixtures;
pub mod handshake;
pub mod krpc;
pub mod tracker;

pub use bencode::{bdecode, bencode, BValue, MalformedBencoding};
pub use classify::{classify_stream, extract_identifiers, Extracted, StreamClass, TAP_WINDOW};
pub use compact::{decode_compact_peers, encode_compact_peers};
pub use handshake::{BtHandshake, ExtendedHandshake};
pub use krpc::{KrpcBody, KrpcKind, KrpcMessage};
pub use tracker::{AnnounceEvent, AnnounceRequest, AnnounceResponse};
