//! Seed-derived random streams.
//!
//! Every stochastic stage of a run (noise draw, parameter init, batch
//! partitioning, reference sampling, ...) pulls from its own ChaCha stream so
//! that changing how one stage consumes randomness never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream ids for the stages of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// The run's single Laplace noise draw.
    Noise,
    /// Parameter initialization.
    Init,
    /// Batch partitioning for one task (carries the task index).
    Partition(u64),
    /// Per-step reference batch selection from episodic memory.
    Reference,
    /// End-of-task selection of the batch stored in memory.
    MemoryPick,
    /// Dataset generation.
    Data,
    /// Gaussian gradient noise for the baseline mechanism.
    GradientNoise,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Noise => 1,
            Stream::Init => 2,
            Stream::Partition(task) => 1000 + task,
            Stream::Reference => 3,
            Stream::MemoryPick => 4,
            Stream::Data => 5,
            Stream::GradientNoise => 6,
        }
    }
}

/// A deterministic generator for one stage of a seeded run.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Order-insensitive 64-bit digest of a float slice sequence.
///
/// Used to fingerprint noise vectors and datasets; this is an audit hash,
/// not a cryptographic one.
pub fn hash_f64s<'a, I: IntoIterator<Item = &'a [f64]>>(parts: I) -> u64 {
    // FNV-1a over the IEEE-754 bit patterns.
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for v in part {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_independent_and_deterministic() {
        let mut a1 = stream_rng(42, Stream::Noise);
        let mut a2 = stream_rng(42, Stream::Noise);
        let mut b = stream_rng(42, Stream::Init);
        let xs: Vec<u64> = (0..4).map(|_| a1.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        let zs: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn hash_distinguishes_values() {
        let a = hash_f64s([&[1.0, 2.0][..]]);
        let b = hash_f64s([&[1.0, 2.5][..]]);
        assert_ne!(a, b);
        assert_eq!(a, hash_f64s([&[1.0, 2.0][..]]));
    }
}
