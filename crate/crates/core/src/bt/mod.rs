//! Synthetic BitTorrent ecosystem: content catalog, centralized trackers, the
//! DHT tracking service, peer exchange and peer agents.

mod catalog;
mod dht;
mod peer;
mod pex;
mod swarm;
mod tracker;

pub use catalog::{
    Catalog, CatalogConfig, ContentItem, Ecosystem, EcosystemShares, SwarmSizeWeight, TagWeight,
};
pub use dht::{DhtMessageRecord, DhtTracker};
pub use peer::{connect_source, Behavior, BehaviorMix, PeerAgent};
pub use pex::{pex_exchange, PexView};
pub use swarm::{Subscription, SubscriptionSource, SwarmState};
pub use tracker::{Tracker, UnknownInfoHash};
