//! Finite-alphabet distributions, empirical types and their enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::LnFactorials;

/// Normalization tolerance for [`Distribution`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A strictly positive probability vector on `k >= 2` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates `weights` without renormalizing them.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewSymbols(weights.len()));
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(Error::NonPositiveEntry { index, value });
        }
        let sum: f64 = weights.iter().sum();
        if !((sum - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { probs: weights })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewSymbols(k));
        }
        let mut probs = vec![1.0 / k as f64; k];
        // push rounding residue into the last entry
        let head: f64 = probs[..k - 1].iter().sum();
        probs[k - 1] = 1.0 - head;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn ln_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    /// Sup-norm distance to `other`.
    pub fn max_gap(&self, other: &Distribution) -> Result<f64> {
        check_dims(self.k(), other.k())?;
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Validates `weights` as a [`Distribution`].
pub fn make_distribution(weights: &[f64]) -> Result<Distribution> {
    Distribution::new(weights.to_vec())
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}

/// Symbol counts of a length-`n` sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeDistribution {
    counts: Vec<u32>,
    n: u64,
}

impl TypeDistribution {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::TooFewSymbols(counts.len()));
        }
        let n = counts.iter().map(|&c| c as u64).sum();
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// `counts / n`; all zeros when `n == 0`.
    pub fn probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        fill_probs(&self.counts, &mut out);
        out
    }
}

#[inline]
pub(crate) fn fill_probs(counts: &[u32], out: &mut [f64]) {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let n = n as f64;
    for (o, &c) in out.iter_mut().zip(counts) {
        *o = c as f64 / n;
    }
}

/// Counts each symbol of `symbols` over an alphabet of size `k`.
pub fn empirical_type(symbols: &[usize], k: usize) -> Result<TypeDistribution> {
    if k < 2 {
        return Err(Error::TooFewSymbols(k));
    }
    let mut counts = vec![0u32; k];
    for &s in symbols {
        if s >= k {
            return Err(Error::SymbolOutOfRange { symbol: s, k });
        }
        counts[s] += 1;
    }
    TypeDistribution::from_counts(counts)
}

/// `C(n + k - 1, k - 1)` as a float (exact up to 2^53).
pub fn type_count(k: usize, n: u64) -> f64 {
    let r = (k - 1) as u64;
    let mut acc = 1.0_f64;
    for i in 1..=r {
        acc = acc * (n + i) as f64 / i as f64;
    }
    acc.round()
}

/// Advances `counts` to the lexicographically next composition with the same
/// sum, keeping `counts[..fixed]` untouched. Returns `false` when exhausted.
fn next_composition(counts: &mut [u32], fixed: usize) -> bool {
    let k = counts.len();
    let mut suffix = counts[k - 1];
    let mut j = k - 1;
    while j > fixed {
        j -= 1;
        if suffix > 0 {
            counts[j] += 1;
            for c in &mut counts[j + 1..k - 1] {
                *c = 0;
            }
            counts[k - 1] = suffix - 1;
            return true;
        }
        suffix += counts[j];
    }
    false
}

/// Streams every composition of `n` into `k` parts in lexicographic order.
#[derive(Debug, Clone)]
pub struct TypeIter {
    counts: Vec<u32>,
    done: bool,
}

impl Iterator for TypeIter {
    type Item = TypeDistribution;

    fn next(&mut self) -> Option<TypeDistribution> {
        if self.done {
            return None;
        }
        let out = TypeDistribution::from_counts(self.counts.clone()).ok();
        self.done = !next_composition(&mut self.counts, 0);
        out
    }
}

/// All types with denominator `n` on `k` symbols, lexicographically ordered.
pub fn enumerate_types(k: usize, n: u64) -> Result<TypeIter> {
    if k < 2 {
        return Err(Error::TooFewSymbols(k));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("enumeration needs n >= 1".into()));
    }
    let mut counts = vec![0u32; k];
    counts[k - 1] = n as u32;
    Ok(TypeIter {
        counts,
        done: false,
    })
}

/// Visits every type whose first count equals `first`, in lexicographic
/// order, reusing one buffer. This is the unit of work for parallel sweeps.
pub fn for_each_type_in_slab(k: usize, n: u32, first: u32, mut f: impl FnMut(&[u32])) {
    debug_assert!(k >= 2 && first <= n);
    let mut counts = vec![0u32; k];
    counts[0] = first;
    counts[k - 1] += n - first;
    if k == 2 {
        f(&counts);
        return;
    }
    loop {
        f(&counts);
        if !next_composition(&mut counts, 1) {
            break;
        }
    }
}

/// Precomputed pieces for `ln Q^n(T(t))` over many types with the same `n`.
#[derive(Debug, Clone)]
pub struct TypeClassLogProb {
    ln_fact: LnFactorials,
    ln_q: Vec<f64>,
    n: usize,
}

impl TypeClassLogProb {
    pub fn new(q: &Distribution, n: usize) -> Self {
        Self {
            ln_fact: LnFactorials::new(n),
            ln_q: q.ln_probs(),
            n,
        }
    }

    /// `ln Q^n(T(counts))`; `counts` must sum to the `n` given at construction.
    #[inline]
    pub fn eval(&self, counts: &[u32]) -> f64 {
        let mut acc = self.ln_fact.get(self.n);
        for (&c, &lq) in counts.iter().zip(&self.ln_q) {
            if c > 0 {
                acc += c as f64 * lq - self.ln_fact.get(c as usize);
            }
        }
        acc
    }
}

/// `ln Q^n(T(t)) = ln(n! / ∏ c_i!) + Σ c_i ln Q_i`.
pub fn log_type_class_prob(t: &TypeDistribution, q: &Distribution) -> Result<f64> {
    check_dims(t.k(), q.k())?;
    Ok(TypeClassLogProb::new(q, t.n() as usize).eval(t.counts()))
}
