use serde::{Deserialize, Serialize};

use super::{HostId, SimTime};

/// Constant per-link latency, drawn once per unordered host pair.
///
/// The draw is a hash of the seed and the pair, so it needs no storage and
/// does not consume any random stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub seed: u64,
    pub min_ms: u64,
    pub max_ms: u64,
}

impl LatencyModel {
    pub fn new(seed: u64, min_ms: u64, max_ms: u64) -> Self {
        assert!(min_ms <= max_ms, "latency range is empty");
        Self {
            seed,
            min_ms,
            max_ms,
        }
    }

    pub fn between(&self, a: HostId, b: HostId) -> SimTime {
        let (lo, hi) = if a <= b { (a.0, b.0) } else { (b.0, a.0) };
        let h = splitmix64(self.seed ^ splitmix64((u64::from(lo) << 32) | u64::from(hi)));
        let span = self.max_ms - self.min_ms + 1;
        SimTime::from_millis(self.min_ms + h % span)
    }

    /// Sum of link latencies along `path`.
    pub fn along(&self, path: &[HostId]) -> SimTime {
        path.windows(2)
            .fold(SimTime::ZERO, |acc, w| acc + self.between(w[0], w[1]))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_in_range() {
        let m = LatencyModel::new(3, 20, 200);
        for a in 0..50u32 {
            for b in 0..50u32 {
                let l = m.between(HostId(a), HostId(b));
                assert_eq!(l, m.between(HostId(b), HostId(a)));
                assert!((20..=200).contains(&l.ticks()));
            }
        }
    }
}
