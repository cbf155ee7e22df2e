//! Seeded, portable random streams.
//!
//! Every random draw in the simulator comes from ChaCha8 (the `rand_chacha`
//! implementation, whose output is stable across platforms and releases).
//! A stream is addressed by `(seed, label, key)`:
//!
//! * the ChaCha key is expanded from the 64-bit run seed with
//!   `SeedableRng::seed_from_u64` (PCG32 expansion, documented by `rand_core`);
//! * the ChaCha stream id is the 64-bit FNV-1a hash of `label`, a `0x1f`
//!   separator, and `key`;
//! * the word position selects the draw index inside the stream.
//!
//! Continuous distributions are computed here rather than taken from
//! `rand_distr`, so the exact algorithm is part of this crate's contract:
//! uniforms use the top 53 bits of a `u64`, normals use Box-Muller (cosine
//! branch only), Poisson counts use Knuth's product method in chunks of at
//! most 256 for large means.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// A single addressable random stream.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn stream(seed: u64, label: &str, key: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(&[label.as_bytes(), key.as_bytes()]));
        Self { inner }
    }

    /// Positions the stream at draw `index` (each draw slot is 4 words, enough
    /// for one normal variate).
    pub fn at(mut self, index: u64) -> Self {
        self.inner.set_word_pos(u128::from(index) * 4);
        self
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on (0, 1].
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (1.0 - self.uniform())
    }

    /// Uniform integer in [0, n). `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform_range(0.0, 1.0) * n as f64) as usize).min(n - 1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        p > 0.0 && self.uniform() <= p
    }

    /// Standard normal via Box-Muller.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        if stddev == 0.0 {
            return mean;
        }
        mean + stddev * self.standard_normal()
    }

    /// Log-normal multiplier with mean exactly 1: `exp(s*Z - s^2/2)`.
    pub fn unit_lognormal(&mut self, sigma: f64) -> f64 {
        (sigma * self.standard_normal() - sigma * sigma / 2.0).exp()
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        let mut remaining = mean.max(0.0);
        let mut total = 0;
        while remaining > 0.0 {
            let chunk = remaining.min(256.0);
            remaining -= chunk;
            total += self.knuth_poisson(chunk);
        }
        total
    }

    fn knuth_poisson(&mut self, mean: f64) -> u64 {
        let limit = (-mean).exp();
        let mut k = 0;
        let mut p = self.uniform();
        while p > limit {
            k += 1;
            p *= self.uniform();
        }
        k
    }

    pub fn hex_id(&mut self, bytes: usize) -> String {
        let mut out = String::with_capacity(bytes * 2);
        while out.len() < bytes * 2 {
            out.push_str(&format!("{:016x}", self.next_u64()));
        }
        out.truncate(bytes * 2);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(&[b""]), 0xcbf29ce484222325);
        assert_eq!(fnv1a(&[b"a"]), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(&[b"foobar"]), 0x85944171f73967e8);
    }

    #[test]
    fn streams_are_addressable() {
        let a: Vec<u64> = {
            let mut r = SimRng::stream(7, "x", "y").at(10);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SimRng::stream(7, "x", "y").at(10);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other = SimRng::stream(7, "x", "z").at(10);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn uniform_bounds() {
        let mut r = SimRng::stream(1, "u", "");
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u <= 1.0);
            assert!(r.below(3) < 3);
        }
    }

    #[test]
    fn poisson_mean_is_close() {
        let mut r = SimRng::stream(3, "p", "");
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| r.poisson(4.0) as f64).sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 0.1, "{mean}");
        let big: f64 = (0..500).map(|_| r.poisson(600.0) as f64).sum::<f64>() / 500.0;
        assert!((big - 600.0).abs() < 5.0, "{big}");
    }

    #[test]
    fn unit_lognormal_has_unit_mean() {
        let mut r = SimRng::stream(5, "ln", "");
        let n = 50_000;
        let mean: f64 = (0..n).map(|_| r.unit_lognormal(0.25)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
