//! Divergence functionals, their second-order coefficient `eta`, and the
//! power-divergence statistic.
//!
//! Orientation: every function takes the empirical (closed-simplex) argument
//! first and the strictly positive reference distribution second.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{check_dims, Distribution, TypeDistribution};

/// Sup-norm gap below which two distributions count as equal.
pub const EQUALITY_TOL: f64 = 1e-12;

pub type ConvexFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied convex generator with `f(1) = 0`.
#[derive(Clone)]
pub struct GenericF {
    f: ConvexFn,
    f_second_at_1: f64,
}

impl GenericF {
    /// Spot-checks `f(1) = 0`, midpoint convexity on three pairs and
    /// `f''(1) > 0`.
    pub fn new(f: ConvexFn, f_second_at_1: f64) -> Result<Self> {
        if !(f_second_at_1 > 0.0 && f_second_at_1.is_finite()) {
            return Err(Error::InvalidGenerator(format!(
                "f''(1) must be positive and finite, got {f_second_at_1}"
            )));
        }
        let at_one = f(1.0);
        if !(at_one.abs() <= 1e-12) {
            return Err(Error::InvalidGenerator(format!(
                "f(1) = {at_one}, expected 0"
            )));
        }
        for (a, b) in [(0.5, 1.5), (0.25, 2.0), (1.0, 4.0)] {
            let mid = f(0.5 * (a + b));
            let chord = 0.5 * (f(a) + f(b));
            if !(mid <= chord + 1e-12) {
                return Err(Error::InvalidGenerator(format!(
                    "midpoint convexity fails on [{a}, {b}]"
                )));
            }
        }
        Ok(Self { f, f_second_at_1 })
    }

    pub fn call(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn f_second_at_1(&self) -> f64 {
        self.f_second_at_1
    }
}

impl fmt::Debug for GenericF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericF")
            .field("f_second_at_1", &self.f_second_at_1)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum DivergenceSpec {
    Kl,
    Alpha(f64),
    Renyi(f64),
    ChiSq,
    GenericF(GenericF),
}

impl DivergenceSpec {
    pub fn alpha(alpha: f64) -> Result<Self> {
        let s = DivergenceSpec::Alpha(alpha);
        s.validate()?;
        Ok(s)
    }

    pub fn renyi(alpha: f64) -> Result<Self> {
        let s = DivergenceSpec::Renyi(alpha);
        s.validate()?;
        Ok(s)
    }

    pub fn generic(f: ConvexFn, f_second_at_1: f64) -> Result<Self> {
        Ok(DivergenceSpec::GenericF(GenericF::new(f, f_second_at_1)?))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DivergenceSpec::Alpha(a) if !a.is_finite() || a == 1.0 || a == -1.0 => {
                Err(Error::InvalidAlpha {
                    alpha: a,
                    family: "alpha-divergence",
                })
            }
            DivergenceSpec::Renyi(a) if !a.is_finite() || a <= 0.0 || a == 1.0 => {
                Err(Error::InvalidAlpha {
                    alpha: a,
                    family: "Renyi divergence",
                })
            }
            _ => Ok(()),
        }
    }

    /// Second-order coefficient: `D(P + v || P) ≈ eta · chi_sq(P + v, P)`.
    pub fn eta(&self) -> f64 {
        match self {
            DivergenceSpec::Kl | DivergenceSpec::Alpha(_) => 0.5,
            DivergenceSpec::Renyi(a) => 0.5 * a,
            DivergenceSpec::ChiSq => 1.0,
            DivergenceSpec::GenericF(g) => 0.5 * g.f_second_at_1,
        }
    }

    /// Whether a chi-squared limit law with a `1/sqrt(n)` rate is known for
    /// `n · D / eta` under the null. Calibration still works otherwise, but
    /// the asymptotic threshold carries no guarantee.
    pub fn chi2_limit_established(&self) -> bool {
        match *self {
            DivergenceSpec::Kl | DivergenceSpec::ChiSq => true,
            DivergenceSpec::Alpha(a) => (-3.0..=3.0).contains(&a),
            DivergenceSpec::Renyi(_) | DivergenceSpec::GenericF(_) => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DivergenceSpec::Kl => "kl".into(),
            DivergenceSpec::Alpha(a) => format!("alpha({a})"),
            DivergenceSpec::Renyi(a) => format!("renyi({a})"),
            DivergenceSpec::ChiSq => "chi_sq".into(),
            DivergenceSpec::GenericF(_) => "generic_f".into(),
        }
    }

    /// `D(t || p)` for a closed-simplex `t` and a strictly positive `p`.
    pub fn eval(&self, t: &[f64], p: &Distribution) -> Result<f64> {
        check_dims(t.len(), p.k())?;
        self.validate()?;
        Ok(self.eval_raw(t, p.probs()))
    }

    #[inline]
    pub(crate) fn eval_raw(&self, t: &[f64], p: &[f64]) -> f64 {
        match self {
            DivergenceSpec::Kl => kl_raw(t, p),
            DivergenceSpec::Alpha(a) => alpha_raw(*a, t, p),
            DivergenceSpec::Renyi(a) => renyi_raw(*a, t, p),
            DivergenceSpec::ChiSq => chi_sq_raw(t, p),
            DivergenceSpec::GenericF(g) => {
                t.iter().zip(p).map(|(&ti, &pi)| pi * g.call(ti / pi)).sum()
            }
        }
    }
}

/// Serializable description of a [`DivergenceSpec`] (generic generators
/// excluded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DivergenceKind {
    Kl,
    Alpha { alpha: f64 },
    Renyi { alpha: f64 },
    ChiSq,
}

impl TryFrom<DivergenceKind> for DivergenceSpec {
    type Error = Error;
    fn try_from(k: DivergenceKind) -> Result<Self> {
        match k {
            DivergenceKind::Kl => Ok(DivergenceSpec::Kl),
            DivergenceKind::Alpha { alpha } => DivergenceSpec::alpha(alpha),
            DivergenceKind::Renyi { alpha } => DivergenceSpec::renyi(alpha),
            DivergenceKind::ChiSq => Ok(DivergenceSpec::ChiSq),
        }
    }
}

#[inline]
fn kl_raw(t: &[f64], p: &[f64]) -> f64 {
    t.iter()
        .zip(p)
        .map(|(&ti, &pi)| if ti > 0.0 { ti * (ti / pi).ln() } else { 0.0 })
        .sum()
}

#[inline]
fn alpha_raw(alpha: f64, t: &[f64], p: &[f64]) -> f64 {
    let a = 0.5 * (1.0 - alpha);
    let b = 0.5 * (1.0 + alpha);
    let mut s = 0.0;
    for (&ti, &pi) in t.iter().zip(p) {
        if ti > 0.0 {
            s += ti.powf(a) * pi.powf(b);
        } else if a < 0.0 {
            return f64::INFINITY;
        }
    }
    4.0 / (1.0 - alpha * alpha) * (1.0 - s)
}

#[inline]
fn renyi_raw(alpha: f64, t: &[f64], p: &[f64]) -> f64 {
    let s: f64 = t
        .iter()
        .zip(p)
        .map(|(&ti, &pi)| {
            if ti > 0.0 {
                ti.powf(alpha) * pi.powf(1.0 - alpha)
            } else {
                0.0
            }
        })
        .sum();
    s.ln() / (alpha - 1.0)
}

#[inline]
fn chi_sq_raw(t: &[f64], p: &[f64]) -> f64 {
    t.iter()
        .zip(p)
        .map(|(&ti, &pi)| (ti - pi) * (ti - pi) / pi)
        .sum()
}

/// Kullback-Leibler divergence `Σ t_i ln(t_i / p_i)` with `0 ln 0 = 0`.
pub fn kl(t: &[f64], p: &Distribution) -> Result<f64> {
    check_dims(t.len(), p.k())?;
    Ok(kl_raw(t, p.probs()))
}

/// `Σ p_i f(t_i / p_i)`. The empirical argument comes first, so the
/// reference `p` plays the role of the weighting distribution.
pub fn f_div(f: &dyn Fn(f64) -> f64, t: &[f64], p: &Distribution) -> Result<f64> {
    check_dims(t.len(), p.k())?;
    Ok(t.iter()
        .zip(p.probs())
        .map(|(&ti, &pi)| pi * f(ti / pi))
        .sum())
}

/// `4/(1-α²) · [1 - Σ t_i^{(1-α)/2} p_i^{(1+α)/2}]`. For `α > 1` a zero
/// entry of `t` makes the divergence `+inf`.
pub fn alpha_div(alpha: f64, t: &[f64], p: &Distribution) -> Result<f64> {
    DivergenceSpec::Alpha(alpha).eval(t, p)
}

/// `ln(Σ t_i^α p_i^{1-α}) / (α - 1)`, `α > 0`, `α != 1`.
pub fn renyi(alpha: f64, t: &[f64], p: &Distribution) -> Result<f64> {
    DivergenceSpec::Renyi(alpha).eval(t, p)
}

/// `Σ (t_i - p_i)² / p_i`.
pub fn chi_sq(t: &[f64], p: &Distribution) -> Result<f64> {
    check_dims(t.len(), p.k())?;
    Ok(chi_sq_raw(t, p.probs()))
}

/// `D(P||Q)`, the varentropy-type `V(P||Q)` and the log-ratios `ln(P_i/Q_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqStatistics {
    pub d: f64,
    pub v: f64,
    pub alphas: Vec<f64>,
}

pub fn pq_statistics(p: &Distribution, q: &Distribution) -> Result<PqStatistics> {
    if p.max_gap(q)? <= EQUALITY_TOL {
        return Err(Error::EqualDistributions);
    }
    let alphas: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a / b).ln())
        .collect();
    let d: f64 = p.probs().iter().zip(&alphas).map(|(pi, ai)| pi * ai).sum();
    let v: f64 = p
        .probs()
        .iter()
        .zip(&alphas)
        .map(|(pi, ai)| pi * (ai - d).powi(2))
        .sum();
    if !(v > 0.0) {
        return Err(Error::EqualDistributions);
    }
    Ok(PqStatistics { d, v, alphas })
}

/// Cressie-Read power-divergence statistic
/// `2/(λ(λ+1)) Σ Y_i [(Y_i / (n p_i))^λ - 1]`, with the limit forms at
/// `λ = 0` and `λ = -1`.
pub fn power_div_statistic(lambda: f64, t: &TypeDistribution, p: &Distribution) -> Result<f64> {
    check_dims(t.k(), p.k())?;
    let n = t.n() as f64;
    let cells = t
        .counts()
        .iter()
        .zip(p.probs())
        .map(|(&y, &pi)| (y as f64, n * pi));
    if lambda == 0.0 {
        return Ok(2.0
            * cells
                .map(|(y, e)| if y > 0.0 { y * (y / e).ln() } else { 0.0 })
                .sum::<f64>());
    }
    if lambda == -1.0 {
        let mut s = 0.0;
        for (y, e) in cells {
            if y == 0.0 {
                return Ok(f64::INFINITY);
            }
            s += e * (e / y).ln();
        }
        return Ok(2.0 * s);
    }
    let mut s = 0.0;
    for (y, e) in cells {
        if y > 0.0 {
            s += y.powf(1.0 + lambda) * e.powf(-lambda);
        } else if lambda < -1.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(2.0 / (lambda * (lambda + 1.0)) * (s - n))
}
