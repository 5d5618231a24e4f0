//! First- and second-order predictions of `-ln β`, and the diagnostics that
//! check them against exact computations.

use serde::{Deserialize, Serialize};

use crate::divergence::{chi_sq, pq_statistics, DivergenceSpec};
use crate::error::{Error, Result};
use crate::hypothesis::{
    exact_calibrate_with, null_statistic_distribution, type2_exact_with, CalibrationResult,
    EnumOptions, ErrorProb, TestConfig,
};
use crate::simplex::{check_dims, Distribution};
use crate::special::{chi2_cdf, chi2_quantile, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    DivergenceTest,
    NeymanPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub first_order: f64,
    pub second_order: f64,
    pub predicted_minus_ln_beta: f64,
    pub flavor: Flavor,
}

impl Expansion {
    fn new(first_order: f64, second_order: f64, flavor: Flavor) -> Self {
        Self {
            first_order,
            second_order,
            predicted_minus_ln_beta: first_order + second_order,
            flavor,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbOutOfRange(eps))
    }
}

/// `n D(P||Q) - sqrt(n V(P||Q) Q⁻¹_{χ², k-1}(eps))`.
pub fn predict_divergence_test(
    p: &Distribution,
    q: &Distribution,
    n: u64,
    eps: f64,
) -> Result<Expansion> {
    predict_divergence_test_dof(p, q, n, eps, (p.k() - 1) as u32)
}

/// As [`predict_divergence_test`] with an explicit chi-squared dof.
pub fn predict_divergence_test_dof(
    p: &Distribution,
    q: &Distribution,
    n: u64,
    eps: f64,
    dof: u32,
) -> Result<Expansion> {
    check_eps(eps)?;
    let s = pq_statistics(p, q)?;
    let nf = n as f64;
    let quantile = chi2_quantile(dof, eps)?;
    Ok(Expansion::new(
        nf * s.d,
        -(nf * s.v * quantile).sqrt(),
        Flavor::DivergenceTest,
    ))
}

/// `n D(P||Q) - sqrt(n V(P||Q)) Q⁻¹(eps)`.
pub fn predict_np(p: &Distribution, q: &Distribution, n: u64, eps: f64) -> Result<Expansion> {
    check_eps(eps)?;
    let s = pq_statistics(p, q)?;
    let nf = n as f64;
    Ok(Expansion::new(
        nf * s.d,
        -(nf * s.v).sqrt() * norm_quantile(eps)?,
        Flavor::NeymanPearson,
    ))
}

/// Second-order expansion of `D(T||Q)` around `T = P`:
/// `D(P||Q) + Σ (T_i - P_i) ln(P_i/Q_i) + chi_sq(T, P) / 2`.
pub fn kl_quadratic_approx(t: &[f64], p: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(t.len(), p.k())?;
    check_dims(p.k(), q.k())?;
    let mut d = 0.0;
    let mut lin = 0.0;
    for ((&ti, &pi), &qi) in t.iter().zip(p.probs()).zip(q.probs()) {
        let a = (pi / qi).ln();
        d += pi * a;
        lin += (ti - pi) * a;
    }
    Ok(d + lin + 0.5 * chi_sq(t, p)?)
}

/// `sup_c |P0^n(n D / eta < c) - F_{χ², k-1}(c)|`, evaluating both one-sided
/// limits of the exact CDF at every atom.
pub fn berry_esseen_sup(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    opts: &EnumOptions,
) -> Result<f64> {
    berry_esseen_sup_dof(spec, p0, n, (p0.k() - 1) as u32, opts)
}

pub fn berry_esseen_sup_dof(
    spec: &DivergenceSpec,
    p0: &Distribution,
    n: u64,
    dof: u32,
    opts: &EnumOptions,
) -> Result<f64> {
    let law = null_statistic_distribution(spec, p0, n, opts)?;
    let scale = n as f64 / spec.eta();
    let mut below = 0.0;
    let mut sup = 0.0f64;
    for (atom, mass) in law.atoms.iter().zip(law.masses()) {
        let x = atom.lo * scale;
        let g = chi2_cdf(dof, x.max(0.0))?;
        let above = (below + mass).min(1.0);
        sup = sup.max((below - g).abs()).max((above - g).abs());
        below = above;
    }
    Ok(sup)
}

/// Exact `-ln β_n` of the exactly calibrated test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub n: u64,
    pub calibration: CalibrationResult,
    pub beta: ErrorProb,
}

impl ExactPoint {
    pub fn minus_ln_beta(&self) -> f64 {
        -self.beta.ln_value
    }
}

pub fn exact_point(
    spec: &DivergenceSpec,
    p: &Distribution,
    q: &Distribution,
    n: u64,
    eps: f64,
    opts: &EnumOptions,
) -> Result<ExactPoint> {
    let calibration = exact_calibrate_with(spec, p, n, eps, opts)?;
    let cfg = TestConfig::new(spec.clone(), calibration.r_star, p.clone())?;
    let beta = type2_exact_with(&cfg, q, n, opts)?;
    Ok(ExactPoint {
        n,
        calibration,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub n: u64,
    pub exact_minus_ln_beta: f64,
    pub predicted: f64,
    pub residual: f64,
}

impl ResidualPoint {
    pub fn scaled(&self) -> f64 {
        self.residual.abs() / (self.n as f64).sqrt()
    }
}

/// Residuals with their least-squares fit on `{1, ln n, sqrt n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub points: Vec<ResidualPoint>,
    pub coef_const: f64,
    pub coef_ln_n: f64,
    pub coef_sqrt_n: f64,
    /// Slope of `ln |R_n|` against `ln n`; `None` if some residual is zero.
    pub growth_exponent: Option<f64>,
}

/// Least squares by modified Gram-Schmidt on the column-scaled basis.
fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = cols.len();
    let mut q: Vec<Vec<f64>> = cols.to_vec();
    let scale: Vec<f64> = q
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    for (c, s) in q.iter_mut().zip(&scale) {
        c.iter_mut().for_each(|x| *x /= s);
    }
    let mut r = vec![vec![0.0; m]; m];
    for j in 0..m {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(x, a)| *x -= dot * a);
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateGrid(
                "basis columns are linearly dependent".into(),
            ));
        }
        r[j][j] = norm;
        q[j].iter_mut().for_each(|x| *x /= norm);
    }
    let qty: Vec<f64> = q
        .iter()
        .map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum())
        .collect();
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| r[i][j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }
    Ok(beta.iter().zip(&scale).map(|(b, s)| b / s).collect())
}

/// Fits `residual = c0 + c1 ln n + c2 sqrt n` over `(n, exact, predicted)`
/// triples. Needs at least four strictly increasing `n`.
pub fn fit_residuals(series: &[(u64, f64, f64)]) -> Result<ResidualSeries> {
    if series.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 4 grid points, got {}",
            series.len()
        )));
    }
    if series.windows(2).any(|w| w[0].0 >= w[1].0) || series[0].0 == 0 {
        return Err(Error::DegenerateGrid(
            "n grid must be positive and strictly increasing".into(),
        ));
    }
    let points: Vec<ResidualPoint> = series
        .iter()
        .map(|&(n, exact, predicted)| ResidualPoint {
            n,
            exact_minus_ln_beta: exact,
            predicted,
            residual: exact - predicted,
        })
        .collect();
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.residual).collect();
    let cols = vec![
        vec![1.0; ns.len()],
        ns.iter().map(|n| n.ln()).collect(),
        ns.iter().map(|n| n.sqrt()).collect(),
    ];
    let c = least_squares(&cols, &y)?;
    let growth_exponent = if y.iter().all(|r| *r != 0.0) {
        let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|r| r.abs().ln()).collect();
        let slope = least_squares(&[vec![1.0; lx.len()], lx], &ly)?;
        Some(slope[1])
    } else {
        None
    };
    Ok(ResidualSeries {
        points,
        coef_const: c[0],
        coef_ln_n: c[1],
        coef_sqrt_n: c[2],
        growth_exponent,
    })
}

/// Thresholds for judging a residual series against the second-order law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderCriteria {
    /// Largest allowed relative increase of `|R_n|/sqrt n` at one inversion.
    pub inversion_slack: f64,
    pub max_inversions: usize,
    /// Required `(|R|/sqrt n)_last <= shrink · (|R|/sqrt n)_first`.
    pub shrink: f64,
    /// `|coef_sqrt_n| <= sqrt_coef_frac · sqrt(V q)`.
    pub sqrt_coef_frac: f64,
}

impl Default for SecondOrderCriteria {
    fn default() -> Self {
        Self {
            inversion_slack: 0.05,
            max_inversions: 1,
            shrink: 0.25,
            sqrt_coef_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderVerdict {
    pub inversions: usize,
    pub monotone: bool,
    pub shrink_ratio: f64,
    pub shrinks: bool,
    pub sqrt_coef_bound: f64,
    pub sqrt_coef_ok: bool,
    pub pass: bool,
}

/// Judges whether `|R_n|/sqrt n` decays and the fitted `sqrt n` coefficient
/// vanishes; `v_times_q` is `V(P||Q) · Q⁻¹_{χ², k-1}(eps)`.
pub fn second_order_verdict(
    series: &ResidualSeries,
    v_times_q: f64,
    crit: &SecondOrderCriteria,
) -> SecondOrderVerdict {
    let scaled: Vec<f64> = series.points.iter().map(ResidualPoint::scaled).collect();
    let mut inversions = 0;
    let mut monotone = true;
    for w in scaled.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            if w[1] > w[0] * (1.0 + crit.inversion_slack) {
                monotone = false;
            }
        }
    }
    monotone &= inversions <= crit.max_inversions;
    let first = scaled[0];
    let last = *scaled.last().expect("non-empty");
    let shrink_ratio = if first > 0.0 {
        last / first
    } else {
        f64::INFINITY
    };
    let shrinks = last <= crit.shrink * first;
    let sqrt_coef_bound = crit.sqrt_coef_frac * v_times_q.sqrt();
    let sqrt_coef_ok = series.coef_sqrt_n.abs() <= sqrt_coef_bound;
    SecondOrderVerdict {
        inversions,
        monotone,
        shrink_ratio,
        shrinks,
        sqrt_coef_bound,
        sqrt_coef_ok,
        pass: monotone && shrinks && sqrt_coef_ok,
    }
}
