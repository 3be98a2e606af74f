//! The anonymity overlay: relay directory, circuit construction,
//! stream-to-circuit policies and delivery of exit-side views.

mod circuit;
mod directory;
mod overlay;
mod policy;

pub use circuit::{AppTag, Circuit, CircuitId, Stream, StreamId};
pub use directory::{select_path, Directory, InsufficientRelays, Relay, RelayId, Roles};
pub use overlay::{ExitView, TorOverlay};
pub use policy::{CircuitPolicy, IsolationKey, PortGroupError, PortGroups};
