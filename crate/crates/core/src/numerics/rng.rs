//! Seeded, splittable random streams.
//!
//! Each stream is a ChaCha8 keystream addressed by `(seed, stream)`, so draws
//! depend only on those two numbers and the position in the stream, never on
//! platform or evaluation order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner, spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Child stream `index`, a pure function of this stream's identity and `index`.
    pub fn fork(&self, index: u64) -> Rng {
        let child_seed = mix64(self.seed ^ mix64(self.stream.wrapping_add(1).wrapping_mul(GOLDEN)));
        Rng::with_stream(child_seed, index)
    }

    /// `k` independent child streams.
    pub fn split(&self, k: usize) -> Vec<Rng> {
        (0..k as u64).map(|i| self.fork(i)).collect()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with a full 53-bit mantissa.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw by Box-Muller; the second variate of each pair is
    /// returned by the following call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
