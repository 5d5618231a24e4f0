//! Rounding the KKT minimizer to a type with denominator `n` that stays in
//! the chi-squared ball and moves ℓ by at most a constant.

use serde::{Deserialize, Serialize};

use crate::divergence::chi_sq;
use crate::error::{Error, Result};
use crate::optimizer::{ell, kkt_minimize};
use crate::simplex::{Distribution, TypeDistribution};

/// Tolerance for classifying `(D - α_i) P_i` as zero.
pub const ZERO_COEF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundingCase {
    /// `γ <= 0`: the second-to-last coordinate is rounded, the last absorbs.
    One,
    /// `γ > 0`: the last coordinate is rounded, the second-to-last absorbs.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedType {
    pub t_star: TypeDistribution,
    pub kappa_bound: f64,
    /// `|n ℓ(Γ*) - n ℓ(T*)|`.
    pub ell_gap: f64,
    /// `permutation[j]` is the original index at canonical position `j`.
    pub permutation: Vec<usize>,
    pub case: RoundingCase,
    pub m: usize,
    pub c_prime: f64,
    pub chi_sq: f64,
    pub r_bar: f64,
}

/// The `κ` constant in canonical (permuted) coordinates.
pub fn kappa_of(p: &[f64], alphas: &[f64], c_prime: f64, case: RoundingCase) -> f64 {
    let k = p.len();
    let head: f64 = alphas[..k - 2].iter().map(|a| a.abs()).sum();
    let (a1, a2) = (alphas[k - 2].abs(), alphas[k - 1].abs());
    let kf = k as f64;
    match case {
        RoundingCase::One => {
            head + a1 * (c_prime * p[k - 2] + 1.0) + a2 * (c_prime * p[k - 2] + kf - 1.0)
        }
        RoundingCase::Two => {
            head + a1 * (c_prime * p[k - 1] + kf - 1.0) + a2 * (c_prime * p[k - 1] + 1.0)
        }
    }
}

/// Canonical order: zero-coefficient indices, then the rest, then the most
/// negative coefficient, then the most positive one.
fn canonical_permutation(coef: &[f64]) -> Result<(Vec<usize>, usize)> {
    let zero: Vec<usize> = (0..coef.len())
        .filter(|&i| coef[i].abs() <= ZERO_COEF_TOL)
        .collect();
    let pick = |sign: f64| {
        (0..coef.len())
            .filter(|&i| coef[i].abs() > ZERO_COEF_TOL && coef[i] * sign > 0.0)
            .max_by(|&a, &b| coef[a].abs().total_cmp(&coef[b].abs()).then(b.cmp(&a)))
    };
    let (neg, pos) = match (pick(-1.0), pick(1.0)) {
        (Some(n), Some(p)) => (n, p),
        _ => return Err(Error::EqualDistributions),
    };
    let mut perm = zero.clone();
    perm.extend((0..coef.len()).filter(|i| !zero.contains(i) && *i != neg && *i != pos));
    perm.push(neg);
    perm.push(pos);
    Ok((perm, zero.len()))
}

/// Builds `T*_n` from the minimizer over the ball of radius `r_bar`.
pub fn round_to_type(
    p: &Distribution,
    q: &Distribution,
    n: u64,
    r_bar: f64,
) -> Result<RoundedType> {
    let sol = kkt_minimize(p, q, r_bar)?;
    let k = p.k();
    let d = sol.stats.d;
    let coef: Vec<f64> = p
        .probs()
        .iter()
        .zip(&sol.stats.alphas)
        .map(|(pi, a)| (d - a) * pi)
        .collect();
    let (perm, m) = canonical_permutation(&coef)?;

    let pp: Vec<f64> = perm.iter().map(|&i| p.probs()[i]).collect();
    let gp: Vec<f64> = perm.iter().map(|&i| sol.gamma_star.probs()[i]).collect();
    let ap: Vec<f64> = perm.iter().map(|&i| sol.stats.alphas[i]).collect();
    let c_prime: f64 = pp[..m].iter().map(|pi| 1.0 / pi).sum();

    let need = c_prime + k as f64;
    let min_gap = (m..k)
        .map(|i| (gp[i] - pp[i]).abs())
        .fold(f64::INFINITY, f64::min);
    let nf = n as f64;
    let too_small = || Error::NTooSmall {
        n,
        min_n: (need / min_gap).ceil() as u64,
    };
    if nf * min_gap < need {
        return Err(too_small());
    }

    let mut counts = vec![0i64; k];
    for i in 0..m {
        counts[i] = (nf * pp[i]).floor() as i64;
    }
    for i in m..k - 2 {
        let x = nf * gp[i];
        counts[i] = if gp[i] < pp[i] { x.ceil() } else { x.floor() } as i64;
    }
    let gamma: f64 = (0..k - 2).map(|i| nf * gp[i] - counts[i] as f64).sum();
    let head: i64 = counts[..k - 2].iter().sum();
    let case = if gamma <= 0.0 {
        counts[k - 2] = (nf * gp[k - 2] + c_prime * pp[k - 2]).ceil() as i64;
        counts[k - 1] = n as i64 - head - counts[k - 2];
        RoundingCase::One
    } else {
        counts[k - 1] = (nf * gp[k - 1] - c_prime * pp[k - 1]).floor() as i64;
        counts[k - 2] = n as i64 - head - counts[k - 1];
        RoundingCase::Two
    };
    if counts.iter().any(|&c| c < 0) {
        return Err(too_small());
    }

    let mut original = vec![0u32; k];
    for (j, &i) in perm.iter().enumerate() {
        original[i] = counts[j] as u32;
    }
    let t_star = TypeDistribution::from_counts(original)?;
    let t = t_star.probs();
    let ell_gap = nf * (sol.min_value - ell(&t, p, &sol.stats.alphas)?).abs();
    Ok(RoundedType {
        chi_sq: chi_sq(&t, p)?,
        kappa_bound: kappa_of(&pp, &ap, c_prime, case),
        ell_gap,
        t_star,
        permutation: perm,
        case,
        m,
        c_prime,
        r_bar,
    })
}
