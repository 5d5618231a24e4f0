#![allow(dead_code)]

use divtest_core::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random interior distribution with every entry at least `floor`.
pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Distribution {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    let free = 1.0 - floor * k as f64;
    let mut p: Vec<f64> = w.iter().map(|x| floor + free * x / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    Distribution::new(p).expect("valid by construction")
}

/// Uniformly random composition of `n` into `k` parts (stars and bars).
pub fn random_counts(rng: &mut ChaCha8Rng, k: usize, n: u32) -> Vec<u32> {
    let mut bars: Vec<u32> = (0..k - 1).map(|_| rng.random_range(0..=n)).collect();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut prev = 0;
    for b in bars {
        out.push(b - prev);
        prev = b;
    }
    out.push(n - prev);
    out
}
