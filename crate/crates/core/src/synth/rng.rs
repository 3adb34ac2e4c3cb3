use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Seedable, platform-stable generator for synthetic data.
///
/// The stream is ChaCha20 keyed with the little-endian seed in the first
/// eight key bytes (the rest zero). Uniforms take the top 53 bits of each
/// 64-bit word; normals use the Box-Muller transform on consecutive uniform
/// pairs, returning the cosine branch first and the sine branch on the next
/// call.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Rng {
            inner: ChaCha20Rng::from_seed(key),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform in `(0, 1]`.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}
