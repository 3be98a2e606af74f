use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// ChaCha with 8 rounds. Stable across platforms and `rand` releases, which is
/// what replayable traces need.
pub type SimRng = ChaCha8Rng;

/// An independent generator for one consumer (`stream`) of a run seeded with
/// `seed`. Separate streams keep, say, circuit path selection from shifting
/// the workload when a policy builds more circuits.
pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
