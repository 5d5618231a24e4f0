use divtest_core::asymptotics::{
    berry_esseen_sup_dof, exact_point, fit_residuals, predict_divergence_test_dof, predict_np,
    second_order_verdict, SecondOrderCriteria,
};
use divtest_core::divergence::{chi_sq, pq_statistics};
use divtest_core::hypothesis::{
    asymptotic_calibrate_with, asymptotic_threshold, exact_calibrate_with, type1_exact_with,
    type1_mc, type2_exact_with, type2_mc, EnumOptions, McEstimate, TestConfig,
};
use divtest_core::optimizer::{brute_force_min_with, ell, feasibility_data, kkt_minimize};
use divtest_core::rounding::round_to_type;
use divtest_core::special::chi2_quantile;
use divtest_core::{Error as CoreError, Exec, SeededSource};
use serde_json::{json, Value};

use crate::config::{Calibration, Experiment};
use crate::error::Result;
use crate::output::{to_value, Cell, Report, Table};

const KKT_TOL: f64 = 1e-10;
/// Relative slack for the ball check; a rounded type can sit exactly on the boundary.
const BALL_REL_TOL: f64 = 1e-12;

fn opts(x: &Experiment) -> EnumOptions {
    EnumOptions {
        exec: Exec::default(),
        budget: x.resolved.budget,
    }
}

/// Independent MC streams per (n, error kind).
fn source(x: &Experiment, n: u64, kind: u64) -> SeededSource {
    SeededSource::new(x.resolved.seed, (n << 2) | kind)
}

fn mc_cells(e: &McEstimate) -> [Cell; 3] {
    [e.estimate.into(), e.ci_low.into(), e.ci_high.into()]
}

fn threshold(x: &Experiment, n: u64) -> Result<f64> {
    let r = &x.resolved;
    Ok(match r.calibration {
        Calibration::Exact => exact_calibrate_with(&x.spec, &x.p0, n, r.eps, &opts(x))?.r_star,
        Calibration::Asymptotic => asymptotic_threshold(&x.spec, x.p0.k(), n, r.eps, r.margin)?,
    })
}

pub fn calibrate(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let mut header = vec!["n", "r_asymptotic"];
    if r.mode.exact() {
        header.extend(["r_star", "achieved_type1", "type1_asymptotic_exact"]);
    }
    if r.mode.mc() {
        header.extend(["type1_asymptotic_mc", "mc_ci_low", "mc_ci_high"]);
    }
    let mut table = Table::new(&header);
    for &n in &r.n_grid {
        let ra = asymptotic_threshold(&x.spec, x.p0.k(), n, r.eps, r.margin)?;
        let mut row: Vec<Cell> = vec![n.into(), ra.into()];
        if r.mode.exact() {
            let c = exact_calibrate_with(&x.spec, &x.p0, n, r.eps, &opts(x))?;
            let a = asymptotic_calibrate_with(&x.spec, &x.p0, n, r.eps, r.margin, &opts(x))?;
            row.extend([
                c.r_star.into(),
                c.achieved_type1.into(),
                a.achieved_type1.into(),
            ]);
        }
        if r.mode.mc() {
            let cfg = TestConfig::new(x.spec.clone(), ra, x.p0.clone())?;
            let e = type1_mc(&cfg, n, r.trials, source(x, n, 0), Exec::default())?;
            row.extend(mc_cells(&e));
        }
        table.push(row);
    }
    Ok(Report {
        command: "calibrate",
        results: json!({
            "eta": x.spec.eta(),
            "chi2_limit_established": x.spec.chi2_limit_established(),
        }),
        table: Some(table),
        pass: None,
    })
}

pub fn errors(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let q = x.q()?;
    let mut header = vec!["n", "r"];
    if r.mode.exact() {
        header.extend(["type1_exact", "type2_exact", "ln_type2_exact"]);
    }
    if r.mode.mc() {
        header.extend([
            "type1_mc",
            "type1_ci_low",
            "type1_ci_high",
            "type2_mc",
            "type2_ci_low",
            "type2_ci_high",
        ]);
    }
    let mut table = Table::new(&header);
    for &n in &r.n_grid {
        let thr = threshold(x, n)?;
        let cfg = TestConfig::new(x.spec.clone(), thr, x.p0.clone())?;
        let mut row: Vec<Cell> = vec![n.into(), thr.into()];
        if r.mode.exact() {
            let a = type1_exact_with(&cfg, n, &opts(x))?;
            let b = type2_exact_with(&cfg, q, n, &opts(x))?;
            row.extend([a.value.into(), b.value.into(), b.ln_value.into()]);
        }
        if r.mode.mc() {
            let a = type1_mc(&cfg, n, r.trials, source(x, n, 0), Exec::default())?;
            let b = type2_mc(&cfg, q, n, r.trials, source(x, n, 1), Exec::default())?;
            row.extend(mc_cells(&a));
            row.extend(mc_cells(&b));
        }
        table.push(row);
    }
    Ok(Report {
        command: "errors",
        results: json!({ "chi2_limit_established": x.spec.chi2_limit_established() }),
        table: Some(table),
        pass: None,
    })
}

pub fn predict(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let q = x.q()?;
    let mut table = Table::new(&[
        "n",
        "first_order",
        "second_order",
        "predicted_divergence_test",
        "second_order_np",
        "predicted_np",
        "gap",
    ]);
    for &n in &r.n_grid {
        let a = predict_divergence_test_dof(&x.p0, q, n, r.eps, x.dof())?;
        let b = predict_np(&x.p0, q, n, r.eps)?;
        table.push(vec![
            n.into(),
            a.first_order.into(),
            a.second_order.into(),
            a.predicted_minus_ln_beta.into(),
            b.second_order.into(),
            b.predicted_minus_ln_beta.into(),
            (b.predicted_minus_ln_beta - a.predicted_minus_ln_beta).into(),
        ]);
    }
    let s = pq_statistics(&x.p0, q)?;
    Ok(Report {
        command: "predict",
        results: json!({ "d": s.d, "v": s.v, "dof": x.dof() }),
        table: Some(table),
        pass: None,
    })
}

pub fn verify_asymptotics(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let q = x.q()?;
    let mut triples = Vec::new();
    for &n in &r.n_grid {
        let pt = exact_point(&x.spec, &x.p0, q, n, r.eps, &opts(x))?;
        let pred = predict_divergence_test_dof(&x.p0, q, n, r.eps, x.dof())?;
        triples.push((n, pt.minus_ln_beta(), pred.predicted_minus_ln_beta));
    }
    let series = fit_residuals(&triples)?;
    let s = pq_statistics(&x.p0, q)?;
    let vq = s.v * chi2_quantile((x.p0.k() - 1) as u32, r.eps)?;
    let verdict = second_order_verdict(&series, vq, &SecondOrderCriteria::default());
    let mut table = Table::new(&[
        "n",
        "minus_ln_beta_exact",
        "predicted",
        "residual",
        "residual_over_sqrt_n",
    ]);
    for p in &series.points {
        table.push(vec![
            p.n.into(),
            p.exact_minus_ln_beta.into(),
            p.predicted.into(),
            p.residual.into(),
            (p.residual / (p.n as f64).sqrt()).into(),
        ]);
    }
    Ok(Report {
        command: "verify-asymptotics",
        results: json!({
            "coef_const": series.coef_const,
            "coef_ln_n": series.coef_ln_n,
            "coef_sqrt_n": series.coef_sqrt_n,
            "growth_exponent": series.growth_exponent,
            "checks": to_value(&verdict),
            "chi2_limit_established": x.spec.chi2_limit_established(),
            "dof": x.dof(),
        }),
        table: Some(table),
        pass: Some(verdict.pass),
    })
}

pub fn berry_esseen(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let mut table = Table::new(&["n", "sup", "sqrt_n_sup"]);
    let mut scaled = Vec::new();
    for &n in &r.n_grid {
        let sup = berry_esseen_sup_dof(&x.spec, &x.p0, n, x.dof(), &opts(x))?;
        let sn = (n as f64).sqrt() * sup;
        scaled.push(sn);
        table.push(vec![n.into(), sup.into(), sn.into()]);
    }
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    Ok(Report {
        command: "berry-esseen",
        results: json!({
            "eta": x.spec.eta(),
            "band": hi / lo,
            "chi2_limit_established": x.spec.chi2_limit_established(),
        }),
        table: Some(table),
        pass: None,
    })
}

pub fn optimizer_check(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let q = x.q()?;
    let stats = pq_statistics(&x.p0, q)?;
    let feas = feasibility_data(&x.p0, q)?;
    let r_tilde = r.r_tilde.unwrap_or(0.25 * stats.v / (feas.tau * feas.tau));
    let sol = kkt_minimize(&x.p0, q, r_tilde)?;
    let g = sol.gamma_star.probs();

    let positive = g.iter().all(|&v| v > 0.0);
    let on_boundary = (chi_sq(g, &x.p0)? - r_tilde).abs() <= KKT_TOL;
    let value_matches = (ell(g, &x.p0, &stats.alphas)? - sol.min_value).abs() <= KKT_TOL;
    let stationarity = sol.stationarity_residual(&x.p0);
    let mut all = positive && on_boundary && value_matches && stationarity <= KKT_TOL;

    let brute = if x.p0.k() <= 4 {
        let grid = brute_force_min_with(&x.p0, q, r_tilde, r.grid_step, Exec::default(), r.budget)?;
        let max_alpha = stats.alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let tol = max_alpha * x.p0.k() as f64 * r.grid_step;
        let above = grid.value >= sol.min_value - KKT_TOL;
        let within = grid.value <= sol.min_value + tol;
        all &= above && within;
        json!({
            "value": grid.value,
            "argmin": grid.argmin,
            "tolerance": tol,
            "not_below_analytic": above,
            "within_tolerance": within,
        })
    } else {
        Value::Null
    };

    let mut rounding = Vec::new();
    for &n in &r.n_grid {
        match round_to_type(&x.p0, q, n, r_tilde) {
            Ok(t) => {
                let sums = t.t_star.counts().iter().map(|&c| c as u64).sum::<u64>() == n;
                let in_ball = t.chi_sq <= r_tilde * (1.0 + BALL_REL_TOL);
                let gap_ok = t.ell_gap <= t.kappa_bound;
                all &= sums && in_ball && gap_ok;
                rounding.push(json!({
                    "n": n,
                    "applicable": true,
                    "counts": t.t_star.counts(),
                    "chi_sq": t.chi_sq,
                    "ell_gap": t.ell_gap,
                    "kappa_bound": t.kappa_bound,
                    "case": to_value(&t.case),
                    "permutation": t.permutation,
                    "sums_to_n": sums,
                    "in_ball": in_ball,
                    "gap_within_kappa": gap_ok,
                }));
            }
            Err(CoreError::NTooSmall { min_n, .. }) => {
                rounding.push(json!({ "n": n, "applicable": false, "min_n": min_n }));
            }
            Err(e) => return Err(e.into()),
        }
    }

    Ok(Report {
        command: "optimizer-check",
        results: json!({
            "kkt": {
                "gamma_star": g,
                "min_value": sol.min_value,
                "r_tilde": r_tilde,
                "tau": sol.tau,
                "index_set_i": sol.index_set_i,
                "value_set_b": sol.value_set_b,
                "lambda0": sol.lambda0,
                "mu": sol.mu,
            },
            "checks": {
                "positive": positive,
                "on_boundary": on_boundary,
                "value_matches": value_matches,
                "stationarity_residual": stationarity,
                "stationarity_ok": stationarity <= KKT_TOL,
            },
            "brute_force": brute,
            "rounding": rounding,
            "all_checks_pass": all,
        }),
        table: None,
        pass: Some(all),
    })
}

pub fn sweep(x: &Experiment) -> Result<Report> {
    let r = &x.resolved;
    let q = x.q()?;
    let mut header = vec!["n", "r", "predicted_divergence_test", "predicted_np"];
    if r.mode.exact() {
        header.extend([
            "type1_exact",
            "minus_ln_beta_exact",
            "residual",
            "residual_over_sqrt_n",
        ]);
    }
    if r.mode.mc() {
        header.extend(["type2_mc", "type2_ci_low", "type2_ci_high"]);
    }
    let mut table = Table::new(&header);
    for &n in &r.n_grid {
        let thr = threshold(x, n)?;
        let cfg = TestConfig::new(x.spec.clone(), thr, x.p0.clone())?;
        let a = predict_divergence_test_dof(&x.p0, q, n, r.eps, x.dof())?;
        let b = predict_np(&x.p0, q, n, r.eps)?;
        let mut row: Vec<Cell> = vec![
            n.into(),
            thr.into(),
            a.predicted_minus_ln_beta.into(),
            b.predicted_minus_ln_beta.into(),
        ];
        if r.mode.exact() {
            let alpha = type1_exact_with(&cfg, n, &opts(x))?;
            let beta = type2_exact_with(&cfg, q, n, &opts(x))?;
            let res = -beta.ln_value - a.predicted_minus_ln_beta;
            row.extend([
                alpha.value.into(),
                (-beta.ln_value).into(),
                res.into(),
                (res / (n as f64).sqrt()).into(),
            ]);
        }
        if r.mode.mc() {
            let e = type2_mc(&cfg, q, n, r.trials, source(x, n, 1), Exec::default())?;
            row.extend(mc_cells(&e));
        }
        table.push(row);
    }
    Ok(Report {
        command: "sweep",
        results: json!({ "chi2_limit_established": x.spec.chi2_limit_established() }),
        table: Some(table),
        pass: None,
    })
}
