//! Minimization of the linear functional `ℓ(Γ) = Σ (Γ_i - P_i) ln(P_i/Q_i)`
//! over the chi-squared ball `{Γ : chi_sq(Γ, P) <= r}`.

use serde::{Deserialize, Serialize};

use crate::divergence::{pq_statistics, PqStatistics};
use crate::error::{Error, Result};
use crate::hypothesis::DEFAULT_BUDGET;
use crate::par::{self, Exec};
use crate::simplex::{check_dims, Distribution};

/// `Σ (γ_i - P_i) α_i`.
pub fn ell(gamma: &[f64], p: &Distribution, alphas: &[f64]) -> Result<f64> {
    check_dims(gamma.len(), p.k())?;
    check_dims(alphas.len(), p.k())?;
    Ok(ell_raw(gamma, p.probs(), alphas))
}

#[inline]
fn ell_raw(gamma: &[f64], p: &[f64], alphas: &[f64]) -> f64 {
    gamma
        .iter()
        .zip(p)
        .zip(alphas)
        .map(|((g, pi), a)| (g - pi) * a)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityData {
    pub tau: f64,
    /// Indices with `α_i - D > 0` (0-based).
    pub index_set_i: Vec<usize>,
    /// The gaps `α_i - D` for those indices.
    pub value_set_b: Vec<f64>,
}

fn feasibility_from(stats: &PqStatistics) -> FeasibilityData {
    let (index_set_i, value_set_b): (Vec<usize>, Vec<f64>) = stats
        .alphas
        .iter()
        .enumerate()
        .filter(|(_, a)| **a - stats.d > 0.0)
        .map(|(i, a)| (i, a - stats.d))
        .unzip();
    let tau = value_set_b
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    FeasibilityData {
        tau,
        index_set_i,
        value_set_b,
    }
}

pub fn feasibility_data(p: &Distribution, q: &Distribution) -> Result<FeasibilityData> {
    Ok(feasibility_from(&pq_statistics(p, q)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSolution {
    pub gamma_star: Distribution,
    pub min_value: f64,
    pub r_tilde: f64,
    pub tau: f64,
    pub index_set_i: Vec<usize>,
    pub value_set_b: Vec<f64>,
    /// Multiplier of the ball constraint.
    pub lambda0: f64,
    /// Multiplier of the normalization constraint.
    pub mu: f64,
    pub stats: PqStatistics,
}

impl KktSolution {
    /// `max_i |α_i + 2 λ0 (Γ_i/P_i - 1) + μ|`.
    pub fn stationarity_residual(&self, p: &Distribution) -> f64 {
        self.gamma_star
            .probs()
            .iter()
            .zip(p.probs())
            .zip(&self.stats.alphas)
            .map(|((g, pi), a)| (a + 2.0 * self.lambda0 * (g / pi - 1.0) + self.mu).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form minimizer `Γ*_i = P_i + sqrt(r) (D - α_i) P_i / sqrt(V)` with
/// minimum `-sqrt(V r)`. Requires `0 < sqrt(r) < sqrt(V) / τ`, which keeps
/// `Γ*` strictly positive.
pub fn kkt_minimize(p: &Distribution, q: &Distribution, r_tilde: f64) -> Result<KktSolution> {
    let stats = pq_statistics(p, q)?;
    if !(r_tilde > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_tilde must be positive, got {r_tilde}"
        )));
    }
    let feas = feasibility_from(&stats);
    let sqrt_r = r_tilde.sqrt();
    let sqrt_v = stats.v.sqrt();
    let limit = sqrt_v / feas.tau;
    if !(sqrt_r < limit) {
        return Err(Error::RadiusTooLarge { sqrt_r, limit });
    }
    let scale = sqrt_r / sqrt_v;
    let gamma: Vec<f64> = p
        .probs()
        .iter()
        .zip(&stats.alphas)
        .map(|(pi, a)| pi + scale * (stats.d - a) * pi)
        .collect();
    let gamma_star = Distribution::new(gamma)?;
    Ok(KktSolution {
        gamma_star,
        min_value: -(stats.v * r_tilde).sqrt(),
        r_tilde,
        tau: feas.tau,
        index_set_i: feas.index_set_i,
        value_set_b: feas.value_set_b,
        lambda0: sqrt_v / (2.0 * sqrt_r),
        mu: -stats.d,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMinimum {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub grid_step: f64,
}

/// Exact minimum of ℓ over lattice points `m / N` (`N = 1/grid_step`) of the
/// simplex that lie in the closed ball. The first `k - 2` coordinates are
/// scanned inside their one-dimensional chi-squared bounds; on the remaining
/// segment ℓ is linear, so only its two extreme feasible points are checked.
pub fn brute_force_min(
    p: &Distribution,
    q: &Distribution,
    r_tilde: f64,
    grid_step: f64,
) -> Result<GridMinimum> {
    brute_force_min_with(p, q, r_tilde, grid_step, Exec::default(), DEFAULT_BUDGET)
}

pub fn brute_force_min_with(
    p: &Distribution,
    q: &Distribution,
    r_tilde: f64,
    grid_step: f64,
    exec: Exec,
    budget: f64,
) -> Result<GridMinimum> {
    let k = p.k();
    check_dims(k, q.k())?;
    if k > 4 {
        return Err(Error::InvalidParameter(format!(
            "brute force supports k <= 4, got {k}"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "grid_step must lie in (0, 0.1], got {grid_step}"
        )));
    }
    let nf = (1.0 / grid_step).round();
    if ((1.0 / grid_step) - nf).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "1/grid_step must be an integer, got {grid_step}"
        )));
    }
    if !(r_tilde >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_tilde must be non-negative, got {r_tilde}"
        )));
    }
    let big_n = nf as i64;
    let alphas: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a / b).ln())
        .collect();
    let pr = p.probs();

    // per-coordinate lattice bounds from (γ_i - P_i)² / P_i <= r
    let bounds: Vec<(i64, i64)> = pr
        .iter()
        .map(|&pi| {
            let w = (r_tilde * pi).sqrt();
            let lo = (((pi - w) * nf) - 1e-9).ceil().max(0.0) as i64;
            let hi = (((pi + w) * nf) + 1e-9).floor().min(nf) as i64;
            (lo, hi)
        })
        .collect();
    let outer = k - 2;
    let work: f64 = bounds[..outer]
        .iter()
        .map(|(lo, hi)| (hi - lo + 1).max(0) as f64)
        .product();
    if work > budget {
        return Err(Error::BudgetExceeded {
            types: work,
            budget,
        });
    }

    let search = Search {
        pr,
        alphas: &alphas,
        r: r_tilde,
        big_n,
        nf,
        k,
    };
    let best = if outer == 0 {
        let mut m = vec![0i64; k];
        let mut best = None;
        search.segment(&mut m, 0.0, big_n, &mut best);
        best
    } else {
        let (lo, hi) = bounds[0];
        let len = (hi - lo + 1).max(0) as usize;
        let slabs = par::map_range(exec, len, |idx| {
            let mut m = vec![0i64; k];
            m[0] = lo + idx as i64;
            let mut best = None;
            let g = m[0] as f64 / nf;
            let c0 = (g - pr[0]) * (g - pr[0]) / pr[0];
            let rest = big_n - m[0];
            if c0 <= r_tilde {
                search.scan(&mut m, 1, c0, rest, &bounds, &mut best);
            }
            best
        });
        let mut best: Option<(f64, Vec<i64>)> = None;
        for cand in slabs.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| cand.0 < b.0) {
                best = Some(cand);
            }
        }
        best
    };
    let (value, m) = best.ok_or_else(|| {
        Error::InvalidParameter("no lattice point of this grid lies in the ball".into())
    })?;
    Ok(GridMinimum {
        value,
        argmin: m.iter().map(|&c| c as f64 / nf).collect(),
        grid_step,
    })
}

struct Search<'a> {
    pr: &'a [f64],
    alphas: &'a [f64],
    r: f64,
    big_n: i64,
    nf: f64,
    k: usize,
}

impl Search<'_> {
    fn chi(&self, m: &[i64]) -> f64 {
        m.iter()
            .zip(self.pr)
            .map(|(&c, &pi)| {
                let g = c as f64 / self.nf;
                (g - pi) * (g - pi) / pi
            })
            .sum()
    }

    fn value(&self, m: &[i64]) -> f64 {
        let g: Vec<f64> = m.iter().map(|&c| c as f64 / self.nf).collect();
        ell_raw(&g, self.pr, self.alphas)
    }

    fn offer(&self, m: &[i64], best: &mut Option<(f64, Vec<i64>)>) {
        let v = self.value(m);
        if best.as_ref().is_none_or(|b| v < b.0) {
            *best = Some((v, m.to_vec()));
        }
    }

    fn scan(
        &self,
        m: &mut [i64],
        i: usize,
        partial: f64,
        remaining: i64,
        bounds: &[(i64, i64)],
        best: &mut Option<(f64, Vec<i64>)>,
    ) {
        if i == self.k - 2 {
            self.segment(m, partial, remaining, best);
            return;
        }
        let (lo, hi) = bounds[i];
        for c in lo..=hi.min(remaining) {
            m[i] = c;
            let g = c as f64 / self.nf;
            let add = (g - self.pr[i]) * (g - self.pr[i]) / self.pr[i];
            if partial + add <= self.r {
                self.scan(m, i + 1, partial + add, remaining - c, bounds, best);
            }
        }
    }

    /// Last two coordinates: `m[k-2] + m[k-1] = remaining`.
    fn segment(
        &self,
        m: &mut [i64],
        partial: f64,
        remaining: i64,
        best: &mut Option<(f64, Vec<i64>)>,
    ) {
        let (ia, ib) = (self.k - 2, self.k - 1);
        let (pa, pb) = (self.pr[ia], self.pr[ib]);
        let s = remaining as f64 / self.nf;
        let u = s - pb;
        let a = 1.0 / pa + 1.0 / pb;
        let b = -2.0 * (1.0 + u / pb);
        let c = pa + u * u / pb + partial - self.r;
        let mut disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            if disc < -1e-12 {
                return;
            }
            disc = 0.0;
        }
        let sq = disc.sqrt();
        let x_lo = (-b - sq) / (2.0 * a);
        let x_hi = (-b + sq) / (2.0 * a);
        let mut lo = ((x_lo * self.nf) - 1e-9).ceil().max(0.0) as i64;
        let mut hi = ((x_hi * self.nf) + 1e-9).floor().min(remaining as f64) as i64;
        let feasible = |m: &mut [i64], c: i64| {
            m[ia] = c;
            m[ib] = remaining - c;
            self.chi(m) <= self.r
        };
        while lo <= hi && !feasible(m, lo) {
            lo += 1;
        }
        while hi >= lo && !feasible(m, hi) {
            hi -= 1;
        }
        if lo > hi {
            return;
        }
        debug_assert!(self.big_n >= remaining);
        // ℓ is linear along the segment; visit the lexicographically smaller end first
        for c in [hi, lo] {
            m[ia] = c;
            m[ib] = remaining - c;
            self.offer(m, best);
        }
    }
}
