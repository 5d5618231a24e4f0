//! Reproducible i.i.d. sampling.
//!
//! Generator family: ChaCha8 (`rand_chacha`). The 256-bit key is four
//! SplitMix64 outputs seeded from `seed ^ rotl(stream, 32)` chained with
//! `stream`; the ChaCha stream number selects an independent block of draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{Distribution, TypeDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededSource {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Generator for sub-block `block` of this source.
    pub fn rng(&self, block: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ self.stream.rotate_left(32);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            let word = splitmix64(&mut state) ^ self.stream;
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(block);
        rng
    }

    /// A child source with its own stream id, derived deterministically.
    pub fn derive(&self, tag: u64) -> SeededSource {
        let mut state = self.stream ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        SeededSource {
            seed: self.seed,
            stream: splitmix64(&mut state),
        }
    }
}

/// Inverse-CDF categorical draw.
#[inline]
pub(crate) fn draw_symbol<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let u: f64 = rng.random();
    let k = cumulative.len();
    // the last bucket absorbs any rounding shortfall of the cumulative sum
    cumulative[..k - 1].partition_point(|&c| c <= u)
}

pub(crate) fn sample_counts<R: Rng>(rng: &mut R, cumulative: &[f64], n: u64, counts: &mut [u32]) {
    counts.iter_mut().for_each(|c| *c = 0);
    for _ in 0..n {
        counts[draw_symbol(rng, cumulative)] += 1;
    }
}

/// Type of `n` i.i.d. draws from `p`, using block 0 of `src`.
pub fn sample_type(p: &Distribution, n: u64, src: SeededSource) -> Result<TypeDistribution> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size n must be >= 1".into()));
    }
    let mut rng = src.rng(0);
    let mut counts = vec![0u32; p.k()];
    sample_counts(&mut rng, &p.cumulative(), n, &mut counts);
    TypeDistribution::from_counts(counts)
}
