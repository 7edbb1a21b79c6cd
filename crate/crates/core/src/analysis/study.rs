//! Seeded Monte-Carlo convergence studies over increasing sample sizes.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, make_target, NoiseKind, NormEvaluator, Target, TargetSpec};
use crate::error::{invalid, Result};
use crate::estimator::{fit_interpolant, DataSet, WeightedSpectrum};
use crate::filters::FilterFamily;
use crate::geometry::{
    fibonacci_points, geometry_stats, random_uniform_points, PointSet, DEFAULT_GRID_RESOLUTION,
};
use crate::kernel::{KernelSpec, DEFAULT_K_MAX_CAP, DEFAULT_TAIL_RTOL};
use crate::quadrature::compute_weights;
use crate::selection::{filter_at, LepskiiConfig, LepskiiPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointsKind {
    /// The same Fibonacci lattice in every trial.
    #[default]
    Fibonacci,
    /// A Fibonacci lattice under a random rotation per trial.
    RotatedFibonacci,
    /// Fresh uniform random points per trial.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Fixed exactness degree; when absent `s = round(c_dia·sqrt(n))`.
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default = "default_c_dia")]
    pub c_dia: f64,
    #[serde(default = "default_quad_tol")]
    pub tol: f64,
}

fn default_c_dia() -> f64 {
    0.7
}

fn default_quad_tol() -> f64 {
    1e-18
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            degree: None,
            c_dia: default_c_dia(),
            tol: default_quad_tol(),
        }
    }
}

impl QuadratureConfig {
    pub fn degree_for(&self, n: usize) -> usize {
        self.degree
            .unwrap_or_else(|| (self.c_dia * (n as f64).sqrt()).round().max(1.0) as usize)
    }
}

/// Ground truth of a study, rescaled to unit `L²` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    KernelCombo {
        alpha: f64,
        centers: usize,
        seed: u64,
    },
    HarmonicPoly {
        max_degree: usize,
        terms: usize,
        seed: u64,
    },
}

impl TargetConfig {
    pub fn build(&self, kernel: &KernelSpec) -> Result<Target> {
        let spec = match *self {
            TargetConfig::KernelCombo {
                alpha,
                centers,
                seed,
            } => TargetSpec::random_kernel_combo(alpha, centers, seed)?,
            TargetConfig::HarmonicPoly {
                max_degree,
                terms,
                seed,
            } => TargetSpec::random_harmonic_poly(max_degree, terms, seed)?,
        };
        make_target(&spec, kernel)?.normalized()
    }
}

/// How the filter parameter is chosen at each size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    Fixed {
        value: f64,
    },
    /// `λ = scale · n^exponent`.
    Power {
        scale: f64,
        exponent: f64,
    },
    /// `λ = scale · n^{-2γ/(2γα+d)}` with the target's `α`.
    Rate {
        scale: f64,
    },
    Lepskii {
        config: LepskiiConfig,
    },
    /// Best grid value by exact error (needs ground truth, evaluation only).
    Oracle {
        q: f64,
        q0: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub gamma: f64,
    #[serde(default)]
    pub k_max: Option<usize>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub points: PointsKind,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    pub target: TargetConfig,
    pub noise: NoiseKind,
    /// Filter family string, or `interpolant` for kernel interpolation.
    pub filter: String,
    pub lambda: LambdaRule,
    /// Error exponents `β`; `0` is the `L²` error.
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
}

fn default_betas() -> Vec<f64> {
    vec![0.0]
}

impl ScenarioConfig {
    pub fn kernel(&self) -> Result<KernelSpec> {
        let spec = KernelSpec::with_default_truncation(2, self.gamma, 1.0)?;
        Ok(match self.k_max {
            Some(k) => spec.with_k_max(k),
            None => spec.with_k_max(crate::kernel::default_k_max(
                &spec,
                DEFAULT_TAIL_RTOL,
                DEFAULT_K_MAX_CAP,
            )?),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty()
            || self.sizes.windows(2).any(|w| w[1] <= w[0])
            || self.sizes[0] == 0
        {
            return Err(invalid("sizes must be positive and strictly increasing"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.betas.is_empty() {
            return Err(invalid("at least one error exponent is needed"));
        }
        if self.filter != "interpolant" {
            self.filter.parse::<FilterFamily>()?;
        }
        Ok(())
    }
}

/// Metric name of the `‖·‖_{φ^β}` error.
pub fn beta_metric(beta: f64) -> String {
    if beta == 0.0 {
        "l2".into()
    } else {
        format!("phi^{beta}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub size: usize,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub size: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub summary: Vec<SummaryRow>,
}

impl StudyResult {
    fn from_rows(rows: Vec<StudyRow>) -> Self {
        let mut summary: Vec<SummaryRow> = Vec::new();
        let mut keys: Vec<(usize, String)> = Vec::new();
        for r in &rows {
            if !keys.iter().any(|(s, m)| *s == r.size && *m == r.metric) {
                keys.push((r.size, r.metric.clone()));
            }
        }
        for (size, metric) in keys {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.size == size && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            summary.push(SummaryRow {
                size,
                metric,
                mean,
                stderr,
            });
        }
        Self { rows, summary }
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("size,trial,metric,value\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{:e}", r.size, r.trial, r.metric, r.value)
                .expect("string write");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("size,metric,mean,stderr\n");
        for r in &self.summary {
            writeln!(out, "{},{},{:e},{:e}", r.size, r.metric, r.mean, r.stderr)
                .expect("string write");
        }
        out
    }

    /// `(size, mean)` pairs of one metric.
    pub fn means(&self, metric: &str) -> Vec<(f64, f64)> {
        self.summary
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.size as f64, r.mean))
            .collect()
    }

    /// Log–log slope of a metric's mean against the size.
    pub fn slope(&self, metric: &str) -> Result<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self.means(metric).into_iter().unzip();
        rate_slope(&x, &y)
    }
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn rate_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("rate_slope needs at least three (x, y) pairs"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("rate_slope needs positive finite values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate_slope needs at least two distinct x values"));
    }
    Ok(sxy / sxx)
}

/// Uniformly random rotation from a normalized random quaternion.
fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = [0.0; 4];
    loop {
        for v in q.iter_mut() {
            *v = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Everything fixed by the geometry of one trial.
struct Geometry {
    points: PointSet,
    spectrum: Option<WeightedSpectrum>,
    evaluators: Vec<NormEvaluator>,
    clean: Vec<f64>,
    mesh_norm: f64,
}

impl Geometry {
    fn build(
        cfg: &ScenarioConfig,
        kernel: &KernelSpec,
        target: &Target,
        points: PointSet,
    ) -> Result<Self> {
        let spectrum = if cfg.filter == "interpolant" {
            None
        } else {
            let rule = compute_weights(
                &points,
                cfg.quadrature.degree_for(points.len()),
                cfg.quadrature.tol,
            )?;
            Some(WeightedSpectrum::new(&rule, kernel)?)
        };
        let evaluators = cfg
            .betas
            .iter()
            .map(|&b| NormEvaluator::new(&points, target, b))
            .collect::<Result<_>>()?;
        let clean = target.evaluate(&points)?;
        let mesh_norm = geometry_stats(&points, DEFAULT_GRID_RESOLUTION)?.mesh_norm;
        Ok(Self {
            points,
            spectrum,
            evaluators,
            clean,
            mesh_norm,
        })
    }
}

fn trial_points(kind: PointsKind, n: usize, rng: &mut ChaCha8Rng) -> Result<PointSet> {
    match kind {
        PointsKind::Fibonacci => fibonacci_points(n),
        PointsKind::RotatedFibonacci => fibonacci_points(n)?.rotated(&random_rotation(rng)),
        PointsKind::Random => random_uniform_points(n, rng.gen()),
    }
}

fn run_trial(
    cfg: &ScenarioConfig,
    kernel: &KernelSpec,
    target: &Target,
    size: usize,
    trial: usize,
    shared: Option<&Geometry>,
) -> Result<Vec<StudyRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[size as u64, trial as u64]));
    let own;
    let geo = match shared {
        Some(g) => g,
        None => {
            let points = trial_points(cfg.points, size, &mut rng)?;
            own = Geometry::build(cfg, kernel, target, points)?;
            &own
        }
    };
    let noise = cfg.noise.sample(size, &mut rng)?;
    let values: Vec<f64> = geo.clean.iter().zip(&noise).map(|(f, e)| f + e).collect();
    let row = |metric: String, value: f64| StudyRow {
        size,
        trial,
        metric,
        value,
    };
    let mut rows = vec![row("mesh_norm".into(), geo.mesh_norm)];

    let (coeffs, lambda) = match (&geo.spectrum, cfg.filter.as_str()) {
        (None, _) => {
            let data = DataSet::new(geo.points.clone(), values)?;
            (fit_interpolant(&data, kernel, 0.0)?.coeffs().to_vec(), None)
        }
        (Some(spectrum), family) => {
            let family: FilterFamily = family.parse()?;
            match cfg.lambda {
                LambdaRule::Lepskii { config } => {
                    let path = LepskiiPath::new(spectrum, &values, &family, &config)?;
                    let k = path.select(config.kappa_lp, config.rule);
                    (path.coeffs(k).to_vec(), Some(path.grid()[k - 1]))
                }
                LambdaRule::Oracle { q, q0 } => {
                    let config = LepskiiConfig {
                        q,
                        q0,
                        ..Default::default()
                    };
                    let path = LepskiiPath::new(spectrum, &values, &family, &config)?;
                    let errors = path.errors(&geo.evaluators[0])?;
                    let k =
                        1 + errors
                            .iter()
                            .enumerate()
                            .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
                    (path.coeffs(k).to_vec(), Some(path.grid()[k - 1]))
                }
                rule => {
                    let lambda = fixed_lambda(&rule, kernel, target, size)?;
                    (
                        spectrum.coefficients(&values, &filter_at(&family, lambda)?)?,
                        Some(lambda),
                    )
                }
            }
        }
    };
    if let Some(l) = lambda {
        rows.push(row("lambda".into(), l));
    }
    for ev in &geo.evaluators {
        rows.push(row(beta_metric(ev.beta()), ev.error(&coeffs)?));
    }
    Ok(rows)
}

fn fixed_lambda(rule: &LambdaRule, kernel: &KernelSpec, target: &Target, n: usize) -> Result<f64> {
    let n = n as f64;
    let lambda = match *rule {
        LambdaRule::Fixed { value } => value,
        LambdaRule::Power { scale, exponent } => scale * n.powf(exponent),
        LambdaRule::Rate { scale } => {
            let alpha = target
                .alpha()
                .ok_or_else(|| invalid("the rate rule needs a target with finite α"))?;
            let two_ga = 2.0 * kernel.gamma() * alpha;
            scale * n.powf(-2.0 * kernel.gamma() / (two_ga + kernel.d() as f64))
        }
        LambdaRule::Lepskii { .. } | LambdaRule::Oracle { .. } => {
            unreachable!("handled by the caller")
        }
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda rule produced {lambda}")));
    }
    Ok(lambda)
}

/// Runs every (size, trial) of a scenario. Trials draw their randomness from
/// `(seed, size, trial)`, so the table does not depend on thread count.
pub fn convergence_study(cfg: &ScenarioConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    let target = cfg.target.build(&kernel)?;
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let shared = match cfg.points {
            PointsKind::Fibonacci => Some(Geometry::build(
                cfg,
                &kernel,
                &target,
                fibonacci_points(size)?,
            )?),
            _ => None,
        };
        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &kernel, &target, size, t, shared.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(per_trial.into_iter().flatten());
    }
    Ok(StudyResult::from_rows(rows))
}
