use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::ops::RangeInclusive;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Endpoint;

/// Listening ports for peers are drawn uniformly from the unprivileged range.
pub const PEER_PORT_RANGE: RangeInclusive<u16> = 1024..=65535;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HostId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub endpoint: Endpoint,
    /// ISO-3166 alpha-2.
    pub country: String,
    pub asn: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub country: String,
    pub asn: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationTable {
    pub entries: Vec<PopulationEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("population weights sum to {0}, expected 1")]
    WeightSumInvalid(f64),
    #[error("population table is empty")]
    Empty,
    #[error("invalid population entry `{0}`")]
    BadEntry(String),
}

impl PopulationTable {
    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.entries.is_empty() {
            return Err(PopulationError::Empty);
        }
        for e in &self.entries {
            let code_ok = e.country.len() == 2 && e.country.bytes().all(|b| b.is_ascii_uppercase());
            if !code_ok || !e.weight.is_finite() || e.weight < 0.0 {
                return Err(PopulationError::BadEntry(e.country.clone()));
            }
        }
        let sum: f64 = self.entries.iter().map(|e| e.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PopulationError::WeightSumInvalid(sum));
        }
        Ok(())
    }

    /// Share of the table held by `country`, summed over its ASNs.
    pub fn country_share(&self, country: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.country == country)
            .map(|e| e.weight)
            .sum()
    }

    pub fn asn_share(&self, asn: u32) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.asn == asn)
            .map(|e| e.weight)
            .sum()
    }
}

/// Owns every host of a run and guarantees unique endpoints by handing out
/// unique public IPv4 addresses.
#[derive(Clone, Debug, Default)]
pub struct HostRegistry {
    hosts: Vec<Host>,
    used_ips: HashSet<Ipv4Addr>,
}

impl HostRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: HostId) -> &Host {
        &self.hosts[id.0 as usize]
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    /// Adds a host with a fresh address and the given port.
    pub fn add<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        port: u16,
        country: &str,
        asn: u32,
    ) -> HostId {
        let ip = loop {
            let candidate = Ipv4Addr::from(rng.gen::<u32>());
            if is_public_unicast(candidate) && self.used_ips.insert(candidate) {
                break candidate;
            }
        };
        let id = HostId(u32::try_from(self.hosts.len()).expect("host count fits in u32"));
        self.hosts.push(Host {
            id,
            endpoint: Endpoint::new(ip, port),
            country: country.to_string(),
            asn,
        });
        id
    }

    /// Adds `n` peers whose country/ASN follow `table` and whose listening
    /// ports are uniform over [`PEER_PORT_RANGE`].
    pub fn sample_population<R: Rng + ?Sized>(
        &mut self,
        table: &PopulationTable,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<HostId>, PopulationError> {
        table.validate()?;
        let pick = WeightedIndex::new(table.entries.iter().map(|e| e.weight))
            .map_err(|_| PopulationError::WeightSumInvalid(0.0))?;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let entry = &table.entries[pick.sample(rng)];
            let port = rng.gen_range(PEER_PORT_RANGE);
            ids.push(self.add(rng, port, &entry.country, entry.asn));
        }
        Ok(ids)
    }
}

pub fn sample_population<R: Rng + ?Sized>(
    table: &PopulationTable,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Host>, PopulationError> {
    let mut reg = HostRegistry::new();
    reg.sample_population(table, n, rng)?;
    Ok(reg.hosts)
}

fn is_public_unicast(ip: Ipv4Addr) -> bool {
    let [a, b, ..] = ip.octets();
    !(a == 0
        || a == 10
        || a == 127
        || a >= 224
        || (a == 100 && (64..128).contains(&b))
        || (a == 169 && b == 254)
        || (a == 172 && (16..32).contains(&b))
        || (a == 192 && b == 168)
        || (a == 198 && (b == 18 || b == 19)))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::sim::rng_for;

    fn table(entries: &[(&str, u32, f64)]) -> PopulationTable {
        PopulationTable {
            entries: entries
                .iter()
                .map(|&(c, asn, weight)| PopulationEntry {
                    country: c.into(),
                    asn,
                    weight,
                })
                .collect(),
        }
    }

    #[test]
    fn degenerate_distribution() {
        let hosts =
            sample_population(&table(&[("JP", 4713, 1.0)]), 10, &mut rng_for(1, 0)).unwrap();
        assert_eq!(hosts.len(), 10);
        assert!(hosts.iter().all(|h| h.country == "JP" && h.asn == 4713));
    }

    #[test]
    fn two_way_split_within_two_percent() {
        let hosts = sample_population(
            &table(&[("US", 7132, 0.5), ("DE", 3320, 0.5)]),
            10_000,
            &mut rng_for(42, 0),
        )
        .unwrap();
        let us = hosts.iter().filter(|h| h.country == "US").count() as f64 / 10_000.0;
        assert!((us - 0.5).abs() <= 0.02, "US share {us}");
    }

    #[test]
    fn endpoints_unique_and_ports_in_range() {
        let hosts =
            sample_population(&table(&[("FR", 3215, 1.0)]), 5_000, &mut rng_for(3, 0)).unwrap();
        let eps: HashSet<_> = hosts.iter().map(|h| h.endpoint).collect();
        assert_eq!(eps.len(), hosts.len());
        assert!(hosts.iter().all(|h| h.endpoint.port >= 1024));
        assert!(hosts.iter().all(|h| is_public_unicast(h.endpoint.ip)));
    }

    #[test]
    fn bad_weights_rejected() {
        let err = sample_population(
            &table(&[("US", 1, 0.5), ("DE", 2, 0.4)]),
            1,
            &mut rng_for(0, 0),
        );
        assert!(matches!(err, Err(PopulationError::WeightSumInvalid(_))));
        let err = sample_population(&table(&[("usa", 1, 1.0)]), 1, &mut rng_for(0, 0));
        assert!(matches!(err, Err(PopulationError::BadEntry(_))));
        assert!(table(&[("US", 1, 0.5), ("DE", 2, 0.5 + 5e-10)])
            .validate()
            .is_ok());
    }
}
