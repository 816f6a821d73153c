//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator seeded from the configuration seed and
//! positioned on its own stream id `(replicate << 8) | tag`, so draws do not
//! depend on how replicates are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Tag {
    Design = 1,
    Support = 2,
    Noise = 3,
}

pub(crate) fn stream(seed: u64, replicate: u64, tag: Tag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replicate << 8) | tag as u64);
    rng
}

/// Uniform on `(0, 1]`, never zero so logarithms stay finite.
pub(crate) fn open_unit(rng: &mut impl RngCore) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws by the Box–Muller transform.
pub(crate) struct Gaussian<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Gaussian { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = open_unit(&mut self.rng);
        let u2 = open_unit(&mut self.rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }
}
