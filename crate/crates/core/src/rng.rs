//! Seeded pseudo-random numbers with a fully pinned algorithm.
//!
//! Partitions must reproduce across implementations, so the generator, the
//! bounded sampler and the shuffle are all spelled out here instead of
//! delegating to a crate whose stream may change between versions:
//!
//! * state seeding: one round of SplitMix64 applied to the user seed
//!   (a zero result is replaced by `0x9E37_79B9_7F4A_7C15`);
//! * generator: xorshift64* (shifts 12/25/27, multiplier `0x2545_F491_4F6C_DD1D`);
//! * `below(n)`: rejection sampling on `next_u64() % n`, rejecting draws
//!   `>= n * floor(2^64-1 / n)`;
//! * shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`.

/// Identifier written into partition files.
pub const PRNG_NAME: &str = "xorshift64star-splitmix64seed-fisheryates-desc";

#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        Self {
            state: if s == 0 { 0x9E37_79B9_7F4A_7C15 } else { s },
        }
    }

    /// Independent stream derived from `seed` and a stream label.
    pub fn derived(seed: u64, stream: u64) -> Self {
        Self::new(splitmix64(seed) ^ splitmix64(stream.wrapping_add(0xA5A5_A5A5)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let limit = n * (u64::MAX / n);
        loop {
            let r = self.next_u64();
            if r < limit {
                return r % n;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Exponential(1) draw by inversion.
    pub fn exponential(&mut self) -> f64 {
        -libm::log(1.0 - self.next_f64())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn stream_is_pinned() {
        // Frozen from an independent Python transcription of the algorithm;
        // a change here breaks every partition file ever written.
        let mut r = Xorshift64Star::new(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(first, vec![0x7bbc_b40d_5506_82d0, 0xde7f_e413_d00c_c9fd, 0xb3c6_3835_3c66_8c91]);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Xorshift64Star::new(42);
        for n in 1..50u64 {
            for _ in 0..20 {
                assert!(r.below(n) < n);
            }
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = Xorshift64Star::new(7);
        let mut v: Vec<u32> = (0..100).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn exponential_mean_near_one() {
        let mut r = Xorshift64Star::new(3);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| r.exponential()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }
}
