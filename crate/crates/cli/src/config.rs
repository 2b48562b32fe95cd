//! Run configurations as read by `solve`.
//!
//! ```json
//! {
//!   "problem": {"kind": "time_delay", "n": 1000},
//!   "j_max": 40, "eps": 1e-10, "ell_policy": "fixed", "mu_ref": 0.2,
//!   "inner": {"kind": "perturbed", "tol_policy": "lagged", "max_it": 5000, "seed": 1},
//!   "stop_rel_res": null, "scale": 1.0, "seed": 1
//! }
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use infgmres::engine::{EllPolicy, Reorth, SolverConfig};
use infgmres::gallery;
use infgmres::inner::InnerConfig;
use infgmres::TaylorMatrixFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Random banded delay family; its matrices and `b` are drawn from the run seed.
    TimeDelay {
        n: usize,
        #[serde(default = "default_bandwidth")]
        bandwidth: usize,
    },
    HelmholtzFd {
        grid: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Relative paths are resolved against the config file's directory.
    Manifest { path: PathBuf },
}

fn default_bandwidth() -> usize {
    gallery::DEFAULT_DELAY_BANDWIDTH
}

fn default_alpha() -> f64 {
    gallery::DEFAULT_HELMHOLTZ_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub ell_policy: EllPolicy,
    #[serde(default = "one")]
    pub ell: f64,
    #[serde(default)]
    pub mu_ref: f64,
    #[serde(default)]
    pub reorth: Reorth,
    #[serde(default)]
    pub inner: InnerConfig,
    #[serde(default)]
    pub stop_rel_res: Option<f64>,
    /// Multiplies any scale already set by a manifest.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_j_max() -> usize {
    SolverConfig::default().j_max
}

fn default_eps() -> f64 {
    SolverConfig::default().eps
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config field `{path}`: {}", e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if let ProblemSpec::Manifest { path: p } = &mut cfg.problem {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            bail!("config field `scale`: must be positive, got {}", self.scale);
        }
        match self.problem {
            ProblemSpec::TimeDelay { n, .. } if n < 2 => bail!("config field `problem.n`: must be at least 2"),
            ProblemSpec::HelmholtzFd { grid, .. } if grid < 8 => {
                bail!("config field `problem.grid`: must be at least 8")
            }
            _ => {}
        }
        self.solver_config()
            .validate()
            .map_err(|e| anyhow::anyhow!("config field {}", e.to_string().trim_start_matches("invalid configuration: ")))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            j_max: self.j_max,
            eps: self.eps,
            ell_policy: self.ell_policy,
            ell: self.ell,
            mu_ref: self.mu_ref,
            reorth: self.reorth,
            stop_rel_res: self.stop_rel_res,
            inner: self.inner.clone(),
            keep_full_ztilde: false,
        }
    }
}

impl ProblemSpec {
    /// The family (with `scale` applied) and right-hand side.
    pub fn build(&self, scale: f64, seed: u64) -> Result<(TaylorMatrixFunction, Vec<f64>)> {
        let (f, b) = match self {
            Self::TimeDelay { n, bandwidth } => gallery::time_delay(*n, *bandwidth, seed),
            Self::HelmholtzFd { grid, alpha } => gallery::helmholtz_fd(*grid, *alpha),
            Self::Manifest { path } => gallery::from_manifest(path)?,
        };
        let f = if scale == 1.0 { f } else { f.rescale(scale)? };
        Ok((f, b))
    }
}

/// What a solution container records about its origin, enough for `sweep`
/// to rebuild the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub problem: ProblemSpec,
    pub scale: f64,
    pub seed: u64,
}

impl ProblemRecord {
    pub fn build(&self) -> Result<(TaylorMatrixFunction, Vec<f64>)> {
        self.problem.build(self.scale, self.seed)
    }
}
