use std::collections::HashSet;
use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::HostId;
use crate::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelayId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub entry: bool,
    pub middle: bool,
    pub exit: bool,
}

impl Roles {
    pub const ENTRY: Roles = Roles {
        entry: true,
        middle: false,
        exit: false,
    };
    pub const MIDDLE: Roles = Roles {
        entry: false,
        middle: true,
        exit: false,
    };
    pub const EXIT: Roles = Roles {
        entry: false,
        middle: false,
        exit: true,
    };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relay {
    pub id: RelayId,
    pub host: HostId,
    pub endpoint: Endpoint,
    pub roles: Roles,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("cannot build a {hops}-hop circuit from the directory")]
pub struct InsufficientRelays {
    pub hops: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Directory {
    relays: Vec<Relay>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, host: HostId, endpoint: Endpoint, roles: Roles) -> RelayId {
        let id = RelayId(self.relays.len() as u32);
        self.relays.push(Relay {
            id,
            host,
            endpoint,
            roles,
        });
        id
    }

    pub fn get(&self, id: RelayId) -> &Relay {
        &self.relays[id.0 as usize]
    }

    pub fn relays(&self) -> &[Relay] {
        &self.relays
    }

    pub fn exits(&self) -> impl Iterator<Item = &Relay> {
        self.relays.iter().filter(|r| r.roles.exit)
    }

    /// The published list of exit addresses.
    pub fn exit_addresses(&self) -> HashSet<Ipv4Addr> {
        self.exits().map(|r| r.endpoint.ip).collect()
    }
}

/// Picks `hops` distinct relays: an entry first, an exit last, middles in
/// between (a one-hop path is just an exit). The exit is drawn first,
/// uniformly over exit-capable relays.
pub fn select_path<R: Rng + ?Sized>(
    directory: &Directory,
    hops: usize,
    rng: &mut R,
) -> Result<Vec<RelayId>, InsufficientRelays> {
    let err = InsufficientRelays { hops };
    if hops == 0 {
        return Err(err);
    }
    let mut chosen: Vec<RelayId> = Vec::with_capacity(hops);
    let pick = |chosen: &mut Vec<RelayId>, want: fn(&Roles) -> bool, rng: &mut R| {
        let candidates: Vec<RelayId> = directory
            .relays
            .iter()
            .filter(|r| want(&r.roles) && !chosen.contains(&r.id))
            .map(|r| r.id)
            .collect();
        let id = *candidates.choose(rng).ok_or(err)?;
        chosen.push(id);
        Ok::<_, InsufficientRelays>(id)
    };

    let exit = pick(&mut chosen, |r| r.exit, rng)?;
    let entry = if hops >= 2 {
        Some(pick(&mut chosen, |r| r.entry, rng)?)
    } else {
        None
    };
    let mut middles = Vec::new();
    for _ in 0..hops.saturating_sub(2) {
        middles.push(pick(&mut chosen, |r| r.middle, rng)?);
    }

    let mut path = Vec::with_capacity(hops);
    path.extend(entry);
    path.extend(middles);
    path.push(exit);
    Ok(path)
}
