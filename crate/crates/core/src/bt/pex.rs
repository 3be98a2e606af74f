use std::collections::BTreeSet;

use crate::Endpoint;

/// One peer's view of a swarm for peer exchange.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PexView {
    pub own: Option<Endpoint>,
    pub connected: BTreeSet<Endpoint>,
    pub candidates: BTreeSet<Endpoint>,
}

impl PexView {
    pub fn new(own: Endpoint) -> Self {
        Self {
            own: Some(own),
            ..Self::default()
        }
    }

    /// Everything this peer has heard of.
    pub fn known(&self) -> BTreeSet<Endpoint> {
        self.connected.union(&self.candidates).copied().collect()
    }

    fn learn(&mut self, from: impl IntoIterator<Item = Endpoint>) -> usize {
        let mut added = 0;
        for e in from {
            if Some(e) != self.own && !self.connected.contains(&e) && self.candidates.insert(e) {
                added += 1;
            }
        }
        added
    }
}

/// Each side adds the other's connection list, and the other itself, to its
/// candidates. Returns how many endpoints each side learned.
pub fn pex_exchange(a: &mut PexView, b: &mut PexView) -> (usize, usize) {
    let from_b: Vec<Endpoint> = b.connected.iter().copied().chain(b.own).collect();
    let from_a: Vec<Endpoint> = a.connected.iter().copied().chain(a.own).collect();
    (a.learn(from_b), b.learn(from_a))
}
