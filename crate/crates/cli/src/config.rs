//! Run settings from a `key = value` file and command-line flags.
//! Flags win over the file, the file wins over defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use lindblad_riemann::experiments::StudyOptions;
use lindblad_riemann::{DirectionKind, HessianMethod, LindbladModel, MetricParams, ModelKind};
use serde::Deserialize;

use crate::error::CliError;

/// Every field is optional so that a file and flags can be layered.
#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// kitaev or pspl
    #[arg(long)]
    pub model: Option<String>,
    /// Noise strength
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Final time
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of time steps
    #[arg(long = "n-tau")]
    pub n_tau: Option<usize>,
    /// Ring size N
    #[arg(long)]
    pub sites: Option<usize>,
    /// Kraus rank R of every layer
    #[arg(long)]
    pub rank: Option<usize>,
    /// Outer trust-region iterations
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// canonical or projected-unit
    #[arg(long)]
    pub directions: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random density matrices per average error
    #[arg(long)]
    pub samples: Option<usize>,
    /// Relative singular-value cutoff for Choi ranks
    #[arg(long = "choi-tol")]
    pub choi_tol: Option<f64>,
    /// Use finite-difference Hessians with this relative step
    #[arg(long = "hess-fd-step")]
    pub hess_fd_step: Option<f64>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    #[arg(long = "n-taus", value_delimiter = ',')]
    pub n_taus: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long = "target-sites", value_delimiter = ',')]
    pub target_sites: Option<Vec<usize>>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Fields set in `self` override those of `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            model: self.model.or(base.model),
            gamma: self.gamma.or(base.gamma),
            tau: self.tau.or(base.tau),
            n_tau: self.n_tau.or(base.n_tau),
            sites: self.sites.or(base.sites),
            rank: self.rank.or(base.rank),
            iters: self.iters.or(base.iters),
            alpha0: self.alpha0.or(base.alpha0),
            alpha1: self.alpha1.or(base.alpha1),
            directions: self.directions.or(base.directions),
            seed: self.seed.or(base.seed),
            samples: self.samples.or(base.samples),
            choi_tol: self.choi_tol.or(base.choi_tol),
            hess_fd_step: self.hess_fd_step.or(base.hess_fd_step),
            out_dir: self.out_dir.or(base.out_dir),
            n_taus: self.n_taus.or(base.n_taus),
            ranks: self.ranks.or(base.ranks),
            target_sites: self.target_sites.or(base.target_sites),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub gamma: f64,
    pub tau: f64,
    pub n_tau: usize,
    pub sites: usize,
    pub rank: usize,
    pub iters: usize,
    pub metric: MetricParams,
    pub directions: DirectionKind,
    pub seed: u64,
    pub samples: usize,
    pub choi_tol: f64,
    pub hess_fd_step: Option<f64>,
    pub out_dir: PathBuf,
    pub n_taus: Vec<usize>,
    pub ranks: Vec<usize>,
    pub target_sites: Vec<usize>,
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {reason}"))
}

pub fn parse_directions(s: &str) -> Result<DirectionKind, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "canonical" => Ok(DirectionKind::Canonical),
        "projected-unit" | "projected_unit" => Ok(DirectionKind::ProjectedUnit),
        other => Err(invalid("directions", format!("expected canonical or projected-unit, got {other:?}"))),
    }
}

pub fn directions_label(d: DirectionKind) -> &'static str {
    match d {
        DirectionKind::Canonical => "canonical",
        DirectionKind::ProjectedUnit => "projected-unit",
    }
}

impl RunConfig {
    /// Flags over the optional config file over defaults.
    pub fn resolve(flags: Settings, file: Option<&Path>) -> Result<Self, CliError> {
        let base = match file {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        Self::from_settings(flags.over(base))
    }

    pub fn from_settings(s: Settings) -> Result<Self, CliError> {
        let model = ModelKind::from_str(s.model.as_deref().unwrap_or("pspl"))
            .map_err(|e| invalid("model", e))?;
        let gamma = s.gamma.unwrap_or(1.0);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        let tau = s.tau.unwrap_or(1.0);
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be a finite nonnegative time, got {tau}")));
        }
        let n_tau = s.n_tau.unwrap_or(1);
        if n_tau == 0 {
            return Err(invalid("n_tau", "must be at least 1"));
        }
        let sites = s.sites.unwrap_or(4);
        if sites < 4 || sites % 2 != 0 {
            return Err(invalid("sites", format!("must be even and at least 4, got {sites}")));
        }
        let rank = s.rank.unwrap_or(10);
        if !(1..=16).contains(&rank) {
            return Err(invalid("rank", format!("must lie in [1, 16], got {rank}")));
        }
        let canonical = MetricParams::canonical();
        let metric = MetricParams::new(
            s.alpha0.unwrap_or(canonical.alpha0()),
            s.alpha1.unwrap_or(canonical.alpha1()),
        )
        .map_err(|e| invalid("alpha0/alpha1", e))?;
        let directions = parse_directions(s.directions.as_deref().unwrap_or("canonical"))?;
        let samples = s.samples.unwrap_or(500);
        if samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        let choi_tol = s.choi_tol.unwrap_or(lindblad_riemann::chanrep::DEFAULT_RANK_TOL);
        if !(choi_tol > 0.0 && choi_tol < 1.0) {
            return Err(invalid("choi_tol", format!("must lie in (0, 1), got {choi_tol}")));
        }
        if let Some(h) = s.hess_fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("hess_fd_step", format!("must be positive, got {h}")));
            }
        }
        let n_taus = s.n_taus.unwrap_or_else(|| vec![1, 2, 4, 8]);
        if n_taus.is_empty() || n_taus.contains(&0) {
            return Err(invalid("n_taus", "must be a nonempty list of positive step counts"));
        }
        let ranks = s.ranks.unwrap_or_else(|| vec![2, 5, 10, 16]);
        if ranks.is_empty() {
            return Err(invalid("ranks", "must be nonempty"));
        }
        let target_sites = s.target_sites.unwrap_or_else(|| vec![6]);
        if let Some(t) = target_sites.iter().find(|&&t| t < 4 || t % 2 != 0) {
            return Err(invalid("target_sites", format!("{t} is not an even ring size of at least 4")));
        }
        Ok(Self {
            model,
            gamma,
            tau,
            n_tau,
            sites,
            rank,
            iters: s.iters.unwrap_or(100),
            metric,
            directions,
            seed: s.seed.unwrap_or(0),
            samples,
            choi_tol,
            hess_fd_step: s.hess_fd_step,
            out_dir: s.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            n_taus,
            ranks,
            target_sites,
        })
    }

    pub fn lindblad_model(&self) -> Result<LindbladModel, CliError> {
        Ok(LindbladModel::new(self.model, self.gamma)?)
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            sites: self.sites,
            choi_tol: self.choi_tol,
            metric: self.metric,
            directions: self.directions,
            hessian: match self.hess_fd_step {
                Some(step) => HessianMethod::FiniteDifference { step },
                None => HessianMethod::Analytic,
            },
            ..StudyOptions::default()
        }
    }
}
