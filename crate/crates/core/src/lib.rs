//! Deterministic simulation of BitTorrent users on an onion-routing overlay,
//! observed by an adversarial exit node.
//!
//! The crate is layered bottom-up:
//!
//! * [`wire`]: bit-exact codecs for the BitTorrent artifacts an exit relay sees
//!   (bencoding, tracker announces, compact peer lists, handshakes, KRPC) and
//!   the exit-side stream classifier.
//! * [`sim`]: the discrete-event engine, seeded randomness and host sampling.
//! * [`tor`]: relay directory, circuits and the stream-to-circuit policies.
//! * [`bt`]: content catalog, trackers, the DHT service, PEX and peer agents.
//! * [`adversary`]: tracker-response hijacking, DHT port matching and the
//!   cross-circuit linkage graph.
//! * [`analysis`]: scoring against ground truth and aggregate-only reports.
//! * [`scenario`]: configuration and the world that wires everything together.

pub mod adversary;
pub mod analysis;
pub mod bt;
pub mod scenario;
pub mod sim;
pub mod tor;
pub mod types;
pub mod wire;

pub use types::{Endpoint, InfoHash, PeerId};
