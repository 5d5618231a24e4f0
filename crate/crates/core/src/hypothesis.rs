//! The divergence test, its calibration and its error probabilities.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::numeric::{CompensatedSum, LogSumExp};
use crate::par::{self, Exec};
use crate::sampling::{sample_counts, SeededSource};
use crate::simplex::{
    check_dims, fill_probs, for_each_type_in_slab, type_count, Distribution, TypeClassLogProb,
    TypeDistribution,
};
use crate::special::{chi2_quantile, norm_quantile};

/// Default cap on the number of enumerated types.
pub const DEFAULT_BUDGET: f64 = 1e7;
/// Absolute tolerance for merging statistic values into one atom.
pub const TIE_TOL: f64 = 1e-12;
/// Monte Carlo trials per independent RNG block.
pub const MC_BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumOptions {
    pub exec: Exec,
    pub budget: f64,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self {
            exec: Exec::default(),
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestConfig {
    pub divergence: DivergenceSpec,
    pub threshold_r: f64,
    pub p0: Distribution,
}

impl TestConfig {
    pub fn new(divergence: DivergenceSpec, threshold_r: f64, p0: Distribution) -> Result<Self> {
        divergence.validate()?;
        if !(threshold_r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold_r must be positive, got {threshold_r}"
            )));
        }
        Ok(Self {
            divergence,
            threshold_r,
            p0,
        })
    }

    #[inline]
    fn accepts(&self, stat: f64) -> bool {
        accepts(stat, self.threshold_r)
    }
}

/// `stat < r`; an infinite threshold accepts everything.
#[inline]
fn accepts(stat: f64, r: f64) -> bool {
    stat < r || r == f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    AcceptH0,
    RejectH0,
}

/// Accepts the null iff `D(t/n || P0) < r`; ties reject.
pub fn decide(cfg: &TestConfig, t: &TypeDistribution) -> Result<Decision> {
    check_dims(t.k(), cfg.p0.k())?;
    let stat = cfg.divergence.eval(&t.probs(), &cfg.p0)?;
    Ok(if cfg.accepts(stat) {
        Decision::AcceptH0
    } else {
        Decision::RejectH0
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbOutOfRange(eps))
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("n must be >= 1".into()))
    } else if n > u32::MAX as u64 {
        Err(Error::InvalidParameter(format!("n = {n} too large")))
    } else {
        Ok(())
    }
}

/// `(eta / n) · Q⁻¹_{χ², k-1}(eps - margin)`.
pub fn asymptotic_threshold(
    spec: &DivergenceSpec,
    k: usize,
    n: u64,
    eps: f64,
    margin: f64,
) -> Result<f64> {
    check_eps(eps)?;
    check_n(n)?;
    if k < 2 {
        return Err(Error::TooFewSymbols(k));
    }
    if !(margin >= 0.0) || eps - margin <= 0.0 {
        return Err(Error::MarginTooLarge { eps, margin });
    }
    Ok(spec.eta() / n as f64 * chi2_quantile((k - 1) as u32, eps - margin)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub r_star: f64,
    pub achieved_type1: f64,
    pub mode: CalibrationMode,
    pub margin_used: f64,
}

/// A probability together with its natural log, so that masses far below
/// the smallest positive `f64` keep their magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProb {
    pub value: f64,
    pub ln_value: f64,
}

impl ErrorProb {
    fn from_ln(ln_value: f64) -> Self {
        let ln_value = ln_value.min(0.0);
        Self {
            value: ln_value.exp(),
            ln_value,
        }
    }
}

/// One group of tied statistic values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub lo: f64,
    pub hi: f64,
    pub ln_mass: f64,
}

/// Exact law of a statistic under the enumerating distribution, as atoms
/// sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticDistribution {
    pub n: u64,
    pub atoms: Vec<Atom>,
}

impl StatisticDistribution {
    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.ln_mass.exp()).collect()
    }

    /// `P(S > atoms[j])` for every `j`.
    pub fn strict_upper_tails(&self) -> Vec<f64> {
        let masses = self.masses();
        let mut tails = vec![0.0; masses.len()];
        let mut acc = CompensatedSum::default();
        for j in (0..masses.len()).rev() {
            tails[j] = acc.value();
            acc.add(masses[j]);
        }
        tails
    }
}

fn check_budget(k: usize, n: u64, budget: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::TooFewSymbols(k));
    }
    check_n(n)?;
    let types = type_count(k, n);
    if types > budget {
        Err(Error::BudgetExceeded { types, budget })
    } else {
        Ok(())
    }
}

/// Runs `visit` over every type with denominator `n`, one accumulator per
/// first-coordinate slab, returned in slab order.
pub(crate) fn fold_slabs<A, I, V>(exec: Exec, k: usize, n: u64, init: I, visit: V) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &[u32], &[f64]) + Sync,
{
    let n32 = n as u32;
    par::map_range(exec, n32 as usize + 1, |first| {
        let mut acc = init();
        let mut probs = vec![0.0; k];
        for_each_type_in_slab(k, n32, first as u32, |counts| {
            fill_probs(counts, &mut probs);
            visit(&mut acc, counts, &probs);
        });
        acc
    })
}

fn total_order(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

fn group_atoms(exec: Exec, mut pairs: Vec<(f64, f64)>, tol: f64, n: u64) -> StatisticDistribution {
    par::sort_by(exec, &mut pairs, total_order);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut acc = LogSumExp::default();
    let mut prev = f64::NAN;
    for &(v, lw) in &pairs {
        let tied = !atoms.is_empty() && (v == prev || (v - prev).abs() <= tol);
        if tied {
            acc.add(lw);
            let last = atoms.last_mut().expect("non-empty");
            last.hi = v;
        } else {
            if let Some(last) = atoms.last_mut() {
                last.ln_mass = acc.value();
            }
            acc = LogSumExp::default();
            acc.add(lw);
            atoms.push(Atom {
                lo: v,
                hi: v,
                ln_mass: f64::NEG_INFINITY,
            });
        }
        prev = v;
    }
    if let Some(last) = atoms.last_mut() {
        last.ln_mass = acc.value();
    }
    StatisticDistribution { n, atoms }
}

fn statistic_law<S>(
    k: usize,
    n: u64,
    weights: &Distribution,
    tol: f64,
    opts: &EnumOptions,
    stat: S,
) -> Result<StatisticDistribution>
where
    S: Fn(&[u32], &[f64]) -> f64 + Sync,
{
    check_budget(k, n, opts.budget)?;
    check_dims(k, weights.k())?;
    let lp = TypeClassLogProb::new(weights, n as usize);
    let slabs = fold_slabs(
        opts.exec,
        k,
        n,
        Vec::new,
        |acc: &mut Vec<(f64, f64)>, c, t| {
            acc.push((stat(c, t), lp.eval(c)));
        },
    );
    let pairs: Vec<(f64, f64)> = slabs.into_iter().flatten().collect();
    Ok(group_atoms(opts.exec, pairs, tol, n))
}

/// Exact law of `D(t/n || P0)` under `P0^n`.
pub fn null_statistic_distribution(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    opts: &EnumOptions,
) -> Result<StatisticDistribution> {
    spec.validate()?;
    let p = p0.probs();
    statistic_law(p0.k(), n, p0, TIE_TOL, opts, |_, t| spec.eval_raw(t, p))
}

/// Smallest atom whose strict upper tail is at most `eps`, and the
/// threshold half-way to the next atom.
fn calibrate_from_law(law: &StatisticDistribution, eps: f64) -> CalibrationResult {
    let tails = law.strict_upper_tails();
    let j = tails
        .iter()
        .position(|&t| t <= eps)
        .unwrap_or(tails.len() - 1);
    let d_j = law.atoms[j].hi;
    let r_star = match law.atoms.get(j + 1) {
        Some(next) if next.lo.is_finite() => 0.5 * (d_j + next.lo),
        Some(_) => d_j + 1.0,
        None => d_j + 1.0,
    };
    let achieved_type1 = if r_star == f64::INFINITY {
        0.0
    } else {
        tails[j]
    };
    CalibrationResult {
        r_star,
        achieved_type1,
        mode: CalibrationMode::Exact,
        margin_used: 0.0,
    }
}

/// Exact threshold: the smallest `r` (up to the midpoint convention) with
/// `P0^n(D >= r) <= eps`.
pub fn exact_calibrate(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    eps: f64,
) -> Result<CalibrationResult> {
    exact_calibrate_with(spec, p0, n, eps, &EnumOptions::default())
}

pub fn exact_calibrate_with(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    eps: f64,
    opts: &EnumOptions,
) -> Result<CalibrationResult> {
    check_eps(eps)?;
    let law = null_statistic_distribution(spec, p0, n, opts)?;
    Ok(calibrate_from_law(&law, eps))
}

/// Calibration from the chi-squared approximation, with its exact type-I
/// error attached.
pub fn asymptotic_calibrate_with(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    eps: f64,
    margin: f64,
    opts: &EnumOptions,
) -> Result<CalibrationResult> {
    let r = asymptotic_threshold(spec, p0.k(), n, eps, margin)?;
    let cfg = TestConfig::new(spec.clone(), r, p0.clone())?;
    let a = type1_exact_with(&cfg, n, opts)?;
    Ok(CalibrationResult {
        r_star: r,
        achieved_type1: a.value,
        mode: CalibrationMode::Asymptotic,
        margin_used: margin,
    })
}

fn region_mass<S>(
    k: usize,
    n: u64,
    weights: &Distribution,
    opts: &EnumOptions,
    include: S,
) -> Result<ErrorProb>
where
    S: Fn(&[u32], &[f64]) -> bool + Sync,
{
    check_budget(k, n, opts.budget)?;
    check_dims(k, weights.k())?;
    let lp = TypeClassLogProb::new(weights, n as usize);
    let slabs = fold_slabs(opts.exec, k, n, LogSumExp::default, |acc, c, t| {
        if include(c, t) {
            acc.add(lp.eval(c));
        }
    });
    let mut total = LogSumExp::default();
    slabs.iter().for_each(|s| total.merge(s));
    Ok(ErrorProb::from_ln(total.value()))
}

/// `P0^n(reject)`.
pub fn type1_exact(cfg: &TestConfig, n: u64) -> Result<ErrorProb> {
    type1_exact_with(cfg, n, &EnumOptions::default())
}

pub fn type1_exact_with(cfg: &TestConfig, n: u64, opts: &EnumOptions) -> Result<ErrorProb> {
    let p = cfg.p0.probs();
    region_mass(cfg.p0.k(), n, &cfg.p0, opts, |_, t| {
        !cfg.accepts(cfg.divergence.eval_raw(t, p))
    })
}

/// `Q^n(accept)`.
pub fn type2_exact(cfg: &TestConfig, q: &Distribution, n: u64) -> Result<ErrorProb> {
    type2_exact_with(cfg, q, n, &EnumOptions::default())
}

pub fn type2_exact_with(
    cfg: &TestConfig,
    q: &Distribution,
    n: u64,
    opts: &EnumOptions,
) -> Result<ErrorProb> {
    check_dims(cfg.p0.k(), q.k())?;
    let p = cfg.p0.probs();
    region_mass(cfg.p0.k(), n, q, opts, |_, t| {
        cfg.accepts(cfg.divergence.eval_raw(t, p))
    })
}

/// Log-likelihood ratio `Σ counts_i ln(Q_i / P0_i)`.
pub fn np_statistic(t: &TypeDistribution, p0: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(t.k(), p0.k())?;
    check_dims(t.k(), q.k())?;
    Ok(np_raw(t.counts(), &llr(p0, q)))
}

fn llr(p0: &Distribution, q: &Distribution) -> Vec<f64> {
    p0.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (b / a).ln())
        .collect()
}

#[inline]
fn np_raw(counts: &[u32], llr: &[f64]) -> f64 {
    counts.iter().zip(llr).map(|(&c, &l)| c as f64 * l).sum()
}

/// Non-randomized likelihood-ratio test calibrated exactly under `P0`.
/// Ties are merged on the per-sample scale `statistic / n`.
pub fn np_exact_calibrate(
    p0: &Distribution,
    q: &Distribution,
    n: u64,
    eps: f64,
) -> Result<CalibrationResult> {
    np_exact_calibrate_with(p0, q, n, eps, &EnumOptions::default())
}

pub fn np_exact_calibrate_with(
    p0: &Distribution,
    q: &Distribution,
    n: u64,
    eps: f64,
    opts: &EnumOptions,
) -> Result<CalibrationResult> {
    check_eps(eps)?;
    check_dims(p0.k(), q.k())?;
    if p0.max_gap(q)? <= crate::divergence::EQUALITY_TOL {
        return Err(Error::EqualDistributions);
    }
    let l = llr(p0, q);
    let law = statistic_law(p0.k(), n, p0, TIE_TOL * n as f64, opts, |c, _| {
        np_raw(c, &l)
    })?;
    Ok(calibrate_from_law(&law, eps))
}

/// `Q^n(Σ counts_i ln(Q_i/P0_i) < r)`.
pub fn np_type2_exact(p0: &Distribution, q: &Distribution, n: u64, r: f64) -> Result<ErrorProb> {
    np_type2_exact_with(p0, q, n, r, &EnumOptions::default())
}

pub fn np_type2_exact_with(
    p0: &Distribution,
    q: &Distribution,
    n: u64,
    r: f64,
    opts: &EnumOptions,
) -> Result<ErrorProb> {
    check_dims(p0.k(), q.k())?;
    let l = llr(p0, q);
    region_mass(p0.k(), n, q, opts, |c, _| accepts(np_raw(c, &l), r))
}

/// Binomial proportion with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: u64,
    pub trials: u64,
}

impl McEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let z = norm_quantile(0.025).expect("valid probability");
        let nt = trials as f64;
        let p = hits as f64 / nt;
        let denom = 1.0 + z * z / nt;
        let centre = (p + z * z / (2.0 * nt)) / denom;
        let half = z / denom * (p * (1.0 - p) / nt + z * z / (4.0 * nt * nt)).sqrt();
        Self {
            estimate: p,
            ci_low: (centre - half).max(0.0),
            ci_high: (centre + half).min(1.0),
            hits,
            trials,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

fn mc_count(
    cfg: &TestConfig,
    sampler: &Distribution,
    n: u64,
    trials: u64,
    src: SeededSource,
    exec: Exec,
    count_accepts: bool,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    check_n(n)?;
    check_dims(cfg.p0.k(), sampler.k())?;
    let k = sampler.k();
    let cum = sampler.cumulative();
    let p = cfg.p0.probs();
    let blocks = trials.div_ceil(MC_BLOCK);
    let hits = par::map_range(exec, blocks as usize, |b| {
        let b = b as u64;
        let len = MC_BLOCK.min(trials - b * MC_BLOCK);
        let mut rng = src.rng(b);
        let mut counts = vec![0u32; k];
        let mut probs = vec![0.0; k];
        let mut hits = 0u64;
        for _ in 0..len {
            sample_counts(&mut rng, &cum, n, &mut counts);
            fill_probs(&counts, &mut probs);
            if cfg.accepts(cfg.divergence.eval_raw(&probs, p)) == count_accepts {
                hits += 1;
            }
        }
        hits
    });
    Ok(McEstimate::from_counts(hits.iter().sum(), trials))
}

/// Monte Carlo estimate of the type-I error.
pub fn type1_mc(
    cfg: &TestConfig,
    n: u64,
    trials: u64,
    src: SeededSource,
    exec: Exec,
) -> Result<McEstimate> {
    mc_count(cfg, &cfg.p0, n, trials, src, exec, false)
}

/// Monte Carlo estimate of the type-II error under `q`.
pub fn type2_mc(
    cfg: &TestConfig,
    q: &Distribution,
    n: u64,
    trials: u64,
    src: SeededSource,
    exec: Exec,
) -> Result<McEstimate> {
    mc_count(cfg, q, n, trials, src, exec, true)
}
