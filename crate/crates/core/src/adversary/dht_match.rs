use rand::Rng;

use crate::sim::PEER_PORT_RANGE;
use crate::Endpoint;

/// Number of ports a listening port is drawn from.
pub const PORT_SPACE: u32 = 64512;

/// The only endpoint in `swarm` listening on `port`, if there is exactly one.
pub fn dht_port_match(port: u16, swarm: &[Endpoint]) -> Option<Endpoint> {
    let mut hits = swarm.iter().filter(|e| e.port == port);
    let first = *hits.next()?;
    // Duplicate records of the same endpoint are not a collision.
    hits.all(|&e| e == first).then_some(first)
}

/// Chance that a swarm member's port is unique among `s` uniform ports.
pub fn unique_port_probability(s: u32) -> f64 {
    (1.0 - 1.0 / f64::from(PORT_SPACE)).powi(s.saturating_sub(1) as i32)
}

/// Monte Carlo estimate of [`unique_port_probability`]: builds `trials`
/// swarms of `s` peers with uniform ports and counts how often the port
/// match returns the observed peer.
pub fn simulate_port_match<R: Rng + ?Sized>(s: u32, trials: u32, rng: &mut R) -> f64 {
    if trials == 0 || s == 0 {
        return 0.0;
    }
    let mut swarm = Vec::with_capacity(s as usize);
    let mut hits = 0u32;
    for _ in 0..trials {
        swarm.clear();
        for i in 0..s {
            let ip = std::net::Ipv4Addr::from(0x0A00_0000 + i);
            swarm.push(Endpoint::new(ip, rng.gen_range(PEER_PORT_RANGE)));
        }
        let target = swarm[0];
        if dht_port_match(target.port, &swarm) == Some(target) {
            hits += 1;
        }
    }
    f64::from(hits) / f64::from(trials)
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use super::*;

    #[test]
    fn unique_and_colliding() {
        let a = Endpoint::new(Ipv4Addr::new(1, 1, 1, 1), 6881);
        let b = Endpoint::new(Ipv4Addr::new(2, 2, 2, 2), 51413);
        assert_eq!(dht_port_match(6881, &[a, b]), Some(a));
        let b2 = Endpoint::new(Ipv4Addr::new(2, 2, 2, 2), 6881);
        assert_eq!(dht_port_match(6881, &[a, b2]), None);
        assert_eq!(dht_port_match(7000, &[a, b]), None);
    }

    #[test]
    fn space_matches_range() {
        assert_eq!(PORT_SPACE as usize, PEER_PORT_RANGE.count());
        assert_eq!(unique_port_probability(1), 1.0);
    }
}
