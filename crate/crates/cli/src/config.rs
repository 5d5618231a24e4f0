use std::path::Path;

use clap::{Args, ValueEnum};
use divtest_core::hypothesis::DEFAULT_BUDGET;
use divtest_core::simplex::make_distribution;
use divtest_core::{Distribution, DivergenceSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "DIVTEST_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Mc,
    Both,
}

impl Mode {
    pub fn exact(self) -> bool {
        matches!(self, Mode::Exact | Mode::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Mode::Mc | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    Exact,
    Asymptotic,
}

/// Experiment fields. Read from TOML; every field is also a flag of the
/// same name, and flags win.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Fields {
    /// Null distribution, comma-separated weights.
    #[arg(
        long,
        alias = "null_dist",
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub null_dist: Option<Vec<f64>>,
    /// Alternative distribution, comma-separated weights.
    #[arg(
        long,
        alias = "alt_dist",
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub alt_dist: Option<Vec<f64>>,
    /// kl, alpha, renyi or chi_sq.
    #[arg(long)]
    pub divergence: Option<String>,
    /// Order parameter for alpha and renyi.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Type-I error target.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Sample sizes, comma-separated, strictly increasing.
    #[arg(long, alias = "n_grid", value_delimiter = ',')]
    pub n_grid: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Monte Carlo trials per estimate.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; the JSON report goes next to it with a .json extension.
    #[arg(long, alias = "output_path")]
    pub output_path: Option<String>,
    /// Slack subtracted from eps by the asymptotic threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub margin: Option<f64>,
    /// Ball radius for optimizer-check (default 0.25 V / tau^2).
    #[arg(long, alias = "r_tilde", allow_negative_numbers = true)]
    pub r_tilde: Option<f64>,
    /// Lattice spacing of the brute-force oracle.
    #[arg(long, alias = "grid_step")]
    pub grid_step: Option<f64>,
    /// Chi-squared degrees of freedom used by predictions instead of k - 1.
    #[arg(long, alias = "dof_override")]
    pub dof_override: Option<u32>,
    /// Threshold used by errors and sweep.
    #[arg(long, value_enum)]
    pub calibration: Option<Calibration>,
    /// Maximum number of enumerated types.
    #[arg(long)]
    pub budget: Option<f64>,
}

macro_rules! merge {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        Fields { $($f: $flags.$f.or($file.$f),)* }
    };
}

impl Fields {
    pub fn merged(flags: Fields, file: Fields) -> Fields {
        merge!(
            flags,
            file,
            null_dist,
            alt_dist,
            divergence,
            alpha,
            eps,
            n_grid,
            mode,
            trials,
            seed,
            output_path,
            margin,
            r_tilde,
            grid_step,
            dof_override,
            calibration,
            budget
        )
    }
}

pub fn load_file(path: &Path) -> Result<Fields> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Fully resolved configuration, embedded in every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub null_dist: Vec<f64>,
    pub alt_dist: Option<Vec<f64>>,
    pub divergence: String,
    pub alpha: Option<f64>,
    pub eps: f64,
    pub n_grid: Vec<u64>,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub output_path: Option<String>,
    pub margin: f64,
    pub r_tilde: Option<f64>,
    pub grid_step: f64,
    pub dof_override: Option<u32>,
    pub calibration: Calibration,
    pub budget: f64,
    pub threads: Option<usize>,
}

/// Validated objects built from a [`Resolved`] config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub resolved: Resolved,
    pub p0: Distribution,
    pub q: Option<Distribution>,
    pub spec: DivergenceSpec,
}

impl Experiment {
    pub fn q(&self) -> Result<&Distribution> {
        self.q
            .as_ref()
            .ok_or_else(|| CliError::config("alt_dist", "required by this command"))
    }

    pub fn dof(&self) -> u32 {
        self.resolved
            .dof_override
            .unwrap_or((self.p0.k() - 1) as u32)
    }
}

pub fn parse_divergence(name: &str, alpha: Option<f64>) -> Result<DivergenceSpec> {
    let need_alpha = || {
        alpha.ok_or_else(|| CliError::config("alpha", format!("required by divergence `{name}`")))
    };
    match name {
        "kl" => Ok(DivergenceSpec::Kl),
        "chi_sq" | "chisq" => Ok(DivergenceSpec::ChiSq),
        "alpha" => DivergenceSpec::alpha(need_alpha()?).map_err(CliError::field("alpha")),
        "renyi" => DivergenceSpec::renyi(need_alpha()?).map_err(CliError::field("alpha")),
        other => Err(CliError::config(
            "divergence",
            format!("unknown divergence `{other}` (expected kl, alpha, renyi or chi_sq)"),
        )),
    }
}

pub struct Requirements {
    pub alt: bool,
    pub grid: bool,
    pub min_grid: usize,
}

pub fn resolve(
    fields: Fields,
    env_seed: Option<String>,
    threads: Option<usize>,
    req: &Requirements,
) -> Result<Experiment> {
    let null_dist = fields
        .null_dist
        .ok_or_else(|| CliError::config("null_dist", "is required"))?;
    let p0 = make_distribution(&null_dist).map_err(CliError::field("null_dist"))?;
    let q = match &fields.alt_dist {
        Some(w) => {
            let q = make_distribution(w).map_err(CliError::field("alt_dist"))?;
            if q.k() != p0.k() {
                return Err(CliError::config(
                    "alt_dist",
                    format!("has {} symbols, null_dist has {}", q.k(), p0.k()),
                ));
            }
            if p0.max_gap(&q).map_err(CliError::field("alt_dist"))?
                <= divtest_core::divergence::EQUALITY_TOL
            {
                return Err(CliError::config("alt_dist", "coincides with null_dist"));
            }
            Some(q)
        }
        None if req.alt => return Err(CliError::config("alt_dist", "is required by this command")),
        None => None,
    };
    let divergence = fields.divergence.unwrap_or_else(|| "kl".into());
    let spec = parse_divergence(&divergence, fields.alpha)?;
    let eps = fields.eps.unwrap_or(0.05);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CliError::config(
            "eps",
            format!("must lie in (0, 1), got {eps}"),
        ));
    }
    let n_grid = fields.n_grid.unwrap_or_default();
    if req.grid && n_grid.is_empty() {
        return Err(CliError::config("n_grid", "must not be empty"));
    }
    if n_grid.len() < req.min_grid {
        return Err(CliError::config(
            "n_grid",
            format!(
                "needs at least {} points, got {}",
                req.min_grid,
                n_grid.len()
            ),
        ));
    }
    if n_grid.iter().any(|&n| n == 0 || n > u32::MAX as u64) {
        return Err(CliError::config("n_grid", "entries must lie in [1, 2^32)"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config("n_grid", "must be strictly increasing"));
    }
    let mode = fields.mode.unwrap_or(Mode::Exact);
    let trials = fields.trials.unwrap_or(10_000);
    if mode.mc() && trials == 0 {
        return Err(CliError::config("trials", "must be >= 1"));
    }
    let seed = match (fields.seed, env_seed) {
        (Some(s), _) => s,
        (None, Some(text)) => text.trim().parse().map_err(|_| {
            CliError::config("seed", format!("{SEED_ENV}={text:?} is not an integer"))
        })?,
        (None, None) => 0,
    };
    let margin = fields.margin.unwrap_or(0.0);
    if !(margin >= 0.0 && margin < eps) {
        return Err(CliError::config(
            "margin",
            format!("must lie in [0, eps), got {margin}"),
        ));
    }
    if let Some(r) = fields.r_tilde {
        if !(r > 0.0) {
            return Err(CliError::config(
                "r_tilde",
                format!("must be positive, got {r}"),
            ));
        }
    }
    let grid_step = fields.grid_step.unwrap_or(1e-3);
    let inv = 1.0 / grid_step;
    if !(grid_step > 0.0 && grid_step <= 0.1) || (inv - inv.round()).abs() > 1e-6 {
        return Err(CliError::config(
            "grid_step",
            format!("must lie in (0, 0.1] with integer reciprocal, got {grid_step}"),
        ));
    }
    if fields.dof_override == Some(0) {
        return Err(CliError::config("dof_override", "must be >= 1"));
    }
    let budget = fields.budget.unwrap_or(DEFAULT_BUDGET);
    if !(budget >= 1.0) {
        return Err(CliError::config(
            "budget",
            format!("must be >= 1, got {budget}"),
        ));
    }
    let alpha = match spec {
        DivergenceSpec::Alpha(a) | DivergenceSpec::Renyi(a) => Some(a),
        _ => None,
    };
    let resolved = Resolved {
        null_dist,
        alt_dist: fields.alt_dist,
        divergence,
        alpha,
        eps,
        n_grid,
        mode,
        trials,
        seed,
        output_path: fields.output_path,
        margin,
        r_tilde: fields.r_tilde,
        grid_step,
        dof_override: fields.dof_override,
        calibration: fields.calibration.unwrap_or(Calibration::Exact),
        budget,
        threads,
    };
    Ok(Experiment {
        resolved,
        p0,
        q,
        spec,
    })
}
