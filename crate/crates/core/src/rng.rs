//! Seeded random streams with deterministic substreams.
//!
//! A handle is identified by a 64-bit key. [`RngHandle::substream`] derives a
//! child key from the parent key (never from the parent's consumed state), so
//! a sample indexed by `(seed, i)` or a tree node indexed by its child number
//! reproduces identically regardless of how much randomness its siblings
//! drew or in which order workers ran.

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngHandle {
    key: u64,
    rng: Xoshiro256PlusPlus,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::from_key(splitmix64(seed))
    }

    fn from_key(key: u64) -> Self {
        // seeding is cheap, which matters because every tree node owns a stream
        let mut seed = [0u8; 32];
        let mut z = key;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        RngHandle {
            key,
            rng: Xoshiro256PlusPlus::from_seed(seed),
        }
    }

    /// Independent child stream number `id`.
    pub fn substream(&self, id: u64) -> RngHandle {
        Self::from_key(splitmix64(self.key ^ splitmix64(id.wrapping_mul(0xD1B5_4A32_D192_ED03))))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take a logarithm of.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// `P(X = l) = 2^{-l}` for `l ≥ 1`, from the trailing zeros of fair bits.
    pub fn half_geometric(&mut self) -> u32 {
        let mut total = 0;
        loop {
            let bits = self.rng.next_u64();
            if bits != 0 {
                return total + bits.trailing_zeros() + 1;
            }
            total += 64;
        }
    }

    /// Number of failures before the first success-with-probability `1 - p`,
    /// i.e. `P(= j) = p^j (1 - p)`, from a single uniform by inversion.
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p <= 0.0 {
            return 0;
        }
        let u = self.uniform_open0();
        (u.ln() / p.ln()).floor() as u64
    }

    /// Fisher-Yates shuffle.
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

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngHandle::new(42);
        let mut b = RngHandle::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_ignore_parent_consumption() {
        let a = RngHandle::new(7);
        let mut b = RngHandle::new(7);
        for _ in 0..10 {
            b.uniform();
        }
        let mut sa = a.substream(3);
        let mut sb = b.substream(3);
        assert_eq!(sa.next_u64(), sb.next_u64());
        let mut other = a.substream(4);
        assert_ne!(a.substream(3).next_u64(), other.next_u64());
    }

    #[test]
    fn half_geometric_mean_is_two() {
        let mut rng = RngHandle::new(1);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.half_geometric() as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // Var(X) = 2, so σ of the mean is sqrt(2/n)
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "mean {mean}");
        let ones = xs.iter().filter(|&&x| x == 1.0).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn geometric_tail_matches() {
        let mut rng = RngHandle::new(2);
        let n = 100_000;
        let p = 0.3;
        let at_least_two = (0..n).filter(|_| rng.geometric(p) >= 2).count() as f64 / n as f64;
        let expect = p * p;
        assert!((at_least_two - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }
}
