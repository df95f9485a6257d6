//! Reproducible per-trial random streams.
//!
//! Every trial owns an independent ChaCha8 stream: the key is derived from
//! the campaign's master seed and the 64-bit stream id packs
//! `(grid_index, trial_index)`. A trial's instance therefore depends only on
//! those three numbers, never on scheduling.
//!
//! Uniforms take the top 53 bits of each `u64` output. Gaussians use the
//! Marsaglia polar method and consume uniforms in pairs; both members of an
//! accepted pair are used, in order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Identifies the stream that produced an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub master_seed: u64,
    pub grid_index: u32,
    pub trial_index: u32,
}

impl SeedTrace {
    pub fn new(master_seed: u64, grid_index: u32, trial_index: u32) -> Self {
        Self {
            master_seed,
            grid_index,
            trial_index,
        }
    }

    pub fn stream_id(&self) -> u64 {
        (u64::from(self.grid_index) << 32) | u64::from(self.trial_index)
    }
}

/// Random source for one trial.
pub struct TrialRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl TrialRng {
    pub fn new(trace: SeedTrace) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(trace.master_seed);
        inner.set_stream(trace.stream_id());
        Self { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fair random sign.
    pub fn sign(&mut self) -> f64 {
        if self.inner.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Standard normal draw, Marsaglia polar method.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], scale: f64) {
        for v in out {
            *v = scale * self.gaussian();
        }
    }
}
