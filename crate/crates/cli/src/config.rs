use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spherefit::analysis::{derive_seed, NoiseKind, Target, TargetConfig};
use spherefit::distributed::{DcConfig, StrictBound};
use spherefit::filters::FilterFamily;
use spherefit::geometry::{fibonacci_points, random_uniform_points, PointSet};
use spherefit::io::read_points;
use spherefit::kernel::{default_k_max, KernelSpec, DEFAULT_K_MAX_CAP, DEFAULT_TAIL_RTOL};
use spherefit::selection::LepskiiConfig;

use crate::CliError;

/// Stream labels for [`derive_seed`].
pub const POINTS_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;
pub const PROBE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "two")]
    pub d: usize,
    pub gamma: f64,
    /// Truncation degree; the tail-bound default when absent.
    #[serde(default)]
    pub k_max: Option<usize>,
}

fn two() -> usize {
    2
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec, CliError> {
        if self.d != 2 {
            return Err(CliError::config(format!(
                "only d = 2 is supported, got {}",
                self.d
            )));
        }
        let spec = KernelSpec::with_default_truncation(self.d, self.gamma, 1.0)?;
        let k_max = match self.k_max {
            Some(k) => k,
            None => default_k_max(&spec, DEFAULT_TAIL_RTOL, DEFAULT_K_MAX_CAP)?,
        };
        Ok(spec.with_k_max(k_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointsConfig {
    Fibonacci {
        n: usize,
    },
    /// Uniform random points drawn from the run seed.
    Random {
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

impl PointsConfig {
    pub fn build(&self, seed: u64) -> Result<PointSet, CliError> {
        Ok(match self {
            PointsConfig::Fibonacci { n } => fibonacci_points(*n)?,
            PointsConfig::Random { n } => {
                random_uniform_points(*n, derive_seed(seed, &[POINTS_STREAM]))?
            }
            PointsConfig::File { path } => {
                read_points(path).map_err(|e| CliError::input(path, e))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default = "c_dia")]
    pub c_dia: f64,
    #[serde(default = "quad_tol")]
    pub tol: f64,
    #[serde(default = "c_star")]
    pub c_star: f64,
}

fn c_dia() -> f64 {
    0.7
}

fn quad_tol() -> f64 {
    1e-18
}

fn c_star() -> f64 {
    5.0
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            degree: None,
            c_dia: c_dia(),
            tol: quad_tol(),
            c_star: c_star(),
        }
    }
}

impl RuleConfig {
    pub fn degree_for(&self, n: usize) -> usize {
        self.degree
            .unwrap_or_else(|| (self.c_dia * (n as f64).sqrt()).round().max(1.0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBlock {
    pub parts: usize,
    /// When set, `parts` must respect the partition bound for this `α`.
    #[serde(default)]
    pub strict: Option<StrictBound>,
}

/// Inputs of `fit`, `lepskii`, `dcfit`, `diagnostics` and `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    /// Sites for synthetic data; ignored when `data` is given.
    #[serde(default)]
    pub points: Option<PointsConfig>,
    /// `x,y,z,y` samples file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub quadrature: RuleConfig,
    #[serde(default = "tikhonov")]
    pub filter: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lepskii: Option<LepskiiConfig>,
    #[serde(default)]
    pub dc: Option<DcBlock>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub noise: Option<NoiseKind>,
    /// Exponent of the reported error norm `‖·‖_{φ^β}`.
    #[serde(default)]
    pub beta: f64,
}

fn tikhonov() -> String {
    "tikhonov".into()
}

impl RunConfig {
    pub fn family(&self) -> Result<FilterFamily, CliError> {
        Ok(self.filter.parse::<FilterFamily>()?)
    }

    pub fn lambda(&self) -> Result<f64, CliError> {
        match self.lambda {
            Some(l) if l > 0.0 && l.is_finite() => Ok(l),
            Some(l) => Err(CliError::config(format!("lambda must be > 0, got {l}"))),
            None => Err(CliError::config("this command needs \"lambda\"")),
        }
    }

    pub fn target(&self, kernel: &KernelSpec) -> Result<Option<Target>, CliError> {
        match &self.target {
            Some(t) => {
                let target = t.build(kernel)?;
                target.check_beta(self.beta)?;
                Ok(Some(target))
            }
            None => Ok(None),
        }
    }

    pub fn dc(
        &self,
        parts: Option<usize>,
        filter: Option<&str>,
        lambda: Option<f64>,
    ) -> Result<DcConfig, CliError> {
        let block = self.dc.clone();
        let parts = parts
            .or(block.as_ref().map(|b| b.parts))
            .ok_or_else(|| CliError::config("dcfit needs a block count"))?;
        if parts == 0 {
            return Err(CliError::config("block count must be >= 1"));
        }
        let family: FilterFamily = filter.unwrap_or(&self.filter).parse()?;
        let lambda = match lambda {
            Some(l) => l,
            None => self.lambda()?,
        };
        let mut cfg = DcConfig::new(parts, family, lambda);
        cfg.c_dia = self.quadrature.c_dia;
        cfg.c_star = self.quadrature.c_star;
        cfg.quad_tol = self.quadrature.tol;
        cfg.strict = block.and_then(|b| b.strict);
        Ok(cfg)
    }
}
