//! Seed derivation and the simulator's random source.
//!
//! Every random draw is keyed by `(master seed, stream, indices...)`, so a
//! device's channel in round `t` does not depend on evaluation order and
//! serial and parallel runs agree bit-for-bit.

use crate::math;
use crate::C64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent random streams. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    DownlinkChannel = 1,
    DownlinkNoise = 2,
    UplinkChannel = 3,
    UplinkPilotNoise = 4,
    UplinkNoise = 5,
    Sgd = 6,
    TaskData = 7,
    Init = 8,
    MonteCarlo = 9,
    Probe = 10,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed, a stream tag and any number of indices into a sub-seed.
pub fn derive_seed(master: u64, stream: Stream, parts: &[u64]) -> u64 {
    let mut h = splitmix(master ^ splitmix(stream as u64));
    for &p in parts {
        h = splitmix(h ^ p.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    h
}

/// ChaCha8 generator with Gaussian helpers (Box–Muller, spare cached).
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn derived(master: u64, stream: Stream, parts: &[u64]) -> Self {
        Self::new(derive_seed(master, stream, parts))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n` (`n > 0`), by rejection to avoid modulo bias.
    pub fn index(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal N(0, 1).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = math::sqrt(-2.0 * math::ln(u1));
        let phi = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * math::sin(phi));
        r * math::cos(phi)
    }

    /// Circularly-symmetric complex Gaussian with total variance `var`.
    pub fn complex_normal(&mut self, var: f64) -> C64 {
        let s = math::sqrt(var / 2.0);
        let re = self.normal();
        let im = self.normal();
        C64::new(s * re, s * im)
    }

    /// Exponential with unit mean.
    pub fn exponential(&mut self) -> f64 {
        -math::ln(1.0 - self.uniform())
    }

    /// Bernoulli(p).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
