use serde::{Deserialize, Serialize};

use crate::sim::SimTime;
use crate::{Endpoint, InfoHash};

/// How a subscription reached the tracker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubscriptionSource {
    Direct,
    TorExit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subscription {
    pub endpoint: Endpoint,
    pub subscribed_at: SimTime,
    pub via: SubscriptionSource,
}

/// Subscribers of one content item, one live entry per endpoint.
#[derive(Clone, Debug)]
pub struct SwarmState {
    pub info_hash: InfoHash,
    subscribers: Vec<Subscription>,
}

impl SwarmState {
    pub fn new(info_hash: InfoHash) -> Self {
        Self {
            info_hash,
            subscribers: Vec::new(),
        }
    }

    /// Adds or refreshes the subscription of `endpoint`.
    pub fn subscribe(&mut self, endpoint: Endpoint, now: SimTime, via: SubscriptionSource) {
        match self.subscribers.iter_mut().find(|s| s.endpoint == endpoint) {
            Some(s) => {
                s.subscribed_at = now;
                s.via = via;
            }
            None => self.subscribers.push(Subscription {
                endpoint,
                subscribed_at: now,
                via,
            }),
        }
    }

    pub fn unsubscribe(&mut self, endpoint: Endpoint) {
        self.subscribers.retain(|s| s.endpoint != endpoint);
    }

    /// Drops subscriptions last refreshed more than `ttl` before `now`.
    pub fn expire(&mut self, now: SimTime, ttl: SimTime) {
        self.subscribers
            .retain(|s| now.saturating_sub(s.subscribed_at) <= ttl);
    }

    pub fn subscribers(&self) -> &[Subscription] {
        &self.subscribers
    }

    pub fn len(&self) -> usize {
        self.subscribers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subscribers.is_empty()
    }

    /// Up to `max` subscribers other than `exclude`, most recent first.
    pub fn most_recent(&self, max: usize, exclude: Endpoint) -> Vec<Endpoint> {
        let mut subs: Vec<&Subscription> = self
            .subscribers
            .iter()
            .filter(|s| s.endpoint != exclude)
            .collect();
        subs.sort_by(|a, b| {
            b.subscribed_at
                .cmp(&a.subscribed_at)
                .then(a.endpoint.cmp(&b.endpoint))
        });
        subs.into_iter().take(max).map(|s| s.endpoint).collect()
    }
}
