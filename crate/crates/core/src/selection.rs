//! Lepskii-type choice of the filter parameter on a geometric grid.
//!
//! Fits `f_{λ_k}` for `λ_k = q0·q^k`, compares neighbours in the graded norm
//! `sqrt(Σ w_i f(x_i)² + λ_k aᵀΦa)` and accepts `k` when that difference is
//! below `κ λ_k^{-d/(4γ)} |Λ|^{-1/2} ln(6/δ)`.

use serde::{Deserialize, Serialize};

use crate::analysis::NormEvaluator;
use crate::error::{invalid, Error, Result};
use crate::estimator::{DataSet, WeightedSpectrum};
use crate::filters::{FilterFamily, FilterSpec};
use crate::kernel::KernelSpec;
use crate::quadrature::QuadratureRule;

/// How the scan over `k = K, K−1, …, 2` turns the per-`k` tests into `k̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanRule {
    /// `k̂` is the first `k` whose test passes; `K` when none passes.
    #[default]
    FirstAccepted,
    /// `k̂` is the first `k` whose test fails, so every smaller parameter on
    /// the grid agrees with its neighbour; `1` when none fails.
    Balancing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LepskiiConfig {
    /// Grid ratio in `(0, 1)`.
    pub q: f64,
    /// Grid anchor; `λ_k = q0·q^k`.
    pub q0: f64,
    /// Threshold constant.
    #[serde(default = "default_kappa")]
    pub kappa_lp: f64,
    /// Confidence level in `(0, 1)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub rule: ScanRule,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.05
}

impl Default for LepskiiConfig {
    fn default() -> Self {
        Self {
            q: 0.5,
            q0: 1.0,
            kappa_lp: default_kappa(),
            delta: default_delta(),
            rule: ScanRule::default(),
        }
    }
}

impl LepskiiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(invalid(format!(
                "grid ratio q must lie in (0, 1), got {}",
                self.q
            )));
        }
        if !(self.q0 > 0.0 && self.q0.is_finite()) {
            return Err(invalid(format!(
                "grid anchor q0 must be > 0, got {}",
                self.q0
            )));
        }
        if !(self.kappa_lp >= 0.0 && self.kappa_lp.is_finite()) {
            return Err(invalid(format!(
                "kappa_lp must be >= 0, got {}",
                self.kappa_lp
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn with_kappa(self, kappa_lp: f64) -> Self {
        Self { kappa_lp, ..self }
    }
}

/// Smallest admissible grid value `s^{-2γ}` for a rule of degree `s`.
pub fn lambda_floor(gamma: f64, rule_degree: usize) -> f64 {
    (rule_degree.max(1) as f64).powf(-2.0 * gamma)
}

/// `λ_k = q0·q^k` for `k = 1..=K`, `K` the largest index with `λ_K ≥ s^{-2γ}`.
pub fn lambda_grid(cfg: &LepskiiConfig, gamma: f64, rule_degree: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let floor = lambda_floor(gamma, rule_degree);
    let mut grid = Vec::new();
    let mut k = 1;
    loop {
        let lambda = cfg.q0 * cfg.q.powi(k);
        if lambda < floor {
            break;
        }
        grid.push(lambda);
        k += 1;
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid {
            anchor: cfg.q0,
            floor,
        });
    }
    Ok(grid)
}

/// Filter of `family` with parameter `lambda`; Landweber picks `t ≈ 1/(τλ)`.
pub fn filter_at(family: &FilterFamily, lambda: f64) -> Result<FilterSpec> {
    family.at(lambda)?.with_lambda(lambda)
}

/// One comparison of `f_{λ_k}` with `f_{λ_{k−1}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub lambda: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Fits along the whole grid with their neighbour statistics; thresholds are
/// applied later so one path serves any `κ`.
#[derive(Debug, Clone)]
pub struct LepskiiPath {
    grid: Vec<f64>,
    filters: Vec<FilterSpec>,
    coeffs: Vec<Vec<f64>>,
    /// `statistics[k − 2]` compares grid indices `k` and `k − 1` (one-based).
    statistics: Vec<f64>,
    /// `λ_k^{-d/(4γ)} |Λ|^{-1/2} ln(6/δ)`, the threshold for `κ = 1`.
    scales: Vec<f64>,
}

impl LepskiiPath {
    pub fn new(
        spectrum: &WeightedSpectrum,
        values: &[f64],
        family: &FilterFamily,
        cfg: &LepskiiConfig,
    ) -> Result<Self> {
        let kernel = spectrum.kernel();
        let grid = lambda_grid(cfg, kernel.gamma(), spectrum.rule().degree())?;
        let projection = spectrum.project(values)?;
        let filters = grid
            .iter()
            .map(|&l| filter_at(family, l))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = filters
            .iter()
            .map(|f| spectrum.coefficients_from_projection(&projection, f))
            .collect::<Result<Vec<_>>>()?;
        let n = values.len() as f64;
        let exponent = -(kernel.d() as f64) / (4.0 * kernel.gamma());
        let log_term = (6.0 / cfg.delta).ln();
        let mut statistics = Vec::with_capacity(grid.len().saturating_sub(1));
        let mut scales = Vec::with_capacity(grid.len().saturating_sub(1));
        for k in 1..grid.len() {
            let diff: Vec<f64> = coeffs[k]
                .iter()
                .zip(&coeffs[k - 1])
                .map(|(a, b)| a - b)
                .collect();
            statistics.push(spectrum.graded_norm(&diff, grid[k])?);
            scales.push(grid[k].powf(exponent) * log_term / n.sqrt());
        }
        Ok(Self {
            grid,
            filters,
            coeffs,
            statistics,
            scales,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `K`, the grid length.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Filter at one-based grid index `k`.
    pub fn filter(&self, k: usize) -> &FilterSpec {
        &self.filters[k - 1]
    }

    /// Coefficients of `f_{λ_k}`, one-based `k`.
    pub fn coeffs(&self, k: usize) -> &[f64] {
        &self.coeffs[k - 1]
    }

    /// Scan rows for `k = K, K−1, …, 2` under threshold constant `kappa`.
    pub fn trace(&self, kappa: f64) -> Vec<TraceRow> {
        (2..=self.len())
            .rev()
            .map(|k| {
                let statistic = self.statistics[k - 2];
                let threshold = kappa * self.scales[k - 2];
                TraceRow {
                    k,
                    lambda: self.grid[k - 1],
                    statistic,
                    threshold,
                    accepted: statistic <= threshold,
                }
            })
            .collect()
    }

    /// One-based `k̂` under threshold constant `kappa`.
    pub fn select(&self, kappa: f64, rule: ScanRule) -> usize {
        let k_max = self.len();
        let mut rows = self.trace(kappa).into_iter();
        match rule {
            ScanRule::FirstAccepted => rows.find(|r| r.accepted).map_or(k_max, |r| r.k),
            ScanRule::Balancing => rows.find(|r| !r.accepted).map_or(1, |r| r.k),
        }
    }

    /// Exact errors of every grid fit.
    pub fn errors(&self, evaluator: &NormEvaluator) -> Result<Vec<f64>> {
        self.coeffs.iter().map(|a| evaluator.error(a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LepskiiOutcome {
    pub lambda_hat: f64,
    /// One-based grid index of `λ̂`.
    pub k_hat: usize,
    pub grid: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub filter: FilterSpec,
    pub coeffs: Vec<f64>,
}

/// Runs the principle on a precomputed spectrum.
pub fn lepskii_select_with(
    spectrum: &WeightedSpectrum,
    values: &[f64],
    family: &FilterFamily,
    cfg: &LepskiiConfig,
) -> Result<LepskiiOutcome> {
    let path = LepskiiPath::new(spectrum, values, family, cfg)?;
    let k_hat = path.select(cfg.kappa_lp, cfg.rule);
    Ok(LepskiiOutcome {
        lambda_hat: path.grid[k_hat - 1],
        k_hat,
        trace: path.trace(cfg.kappa_lp),
        filter: *path.filter(k_hat),
        coeffs: path.coeffs(k_hat).to_vec(),
        grid: path.grid,
    })
}

pub fn lepskii_select(
    data: &DataSet,
    rule: &QuadratureRule,
    kernel: &KernelSpec,
    family: &FilterFamily,
    cfg: &LepskiiConfig,
) -> Result<LepskiiOutcome> {
    if data.points() != rule.points() {
        return Err(invalid("data points and quadrature points differ"));
    }
    lepskii_select_with(
        &WeightedSpectrum::new(rule, kernel)?,
        data.values(),
        family,
        cfg,
    )
}

/// Grid value with the smallest exact error, with the index and all errors.
pub fn oracle_best_lambda(
    spectrum: &WeightedSpectrum,
    values: &[f64],
    family: &FilterFamily,
    grid: &[f64],
    evaluator: &NormEvaluator,
) -> Result<(f64, usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(invalid("oracle needs a nonempty grid"));
    }
    let projection = spectrum.project(values)?;
    let errors = grid
        .iter()
        .map(|&l| {
            evaluator
                .error(&spectrum.coefficients_from_projection(&projection, &filter_at(family, l)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&errors);
    Ok((grid[best], best, errors))
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < values[best] { i } else { best })
}

/// Result of tuning `κ` for agreement with the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kappa: f64,
    /// Fraction of calibration trials whose selected error is within `ratio` of the best.
    pub agreement: f64,
    pub ratio: f64,
    /// `(κ, agreement)` for every candidate.
    pub curve: Vec<(f64, f64)>,
}

/// Log-spaced candidates `10^{-3} … 10^{2}`.
pub fn default_kappa_candidates() -> Vec<f64> {
    (0..=50)
        .map(|i| 10f64.powf(-3.0 + 0.1 * i as f64))
        .collect()
}

/// Picks the candidate `κ` maximizing the fraction of trials whose selected
/// fit has error at most `ratio` times the best grid error; ties go to the
/// middle of the best run of candidates.
pub fn calibrate_kappa(
    trials: &[(LepskiiPath, Vec<f64>)],
    candidates: &[f64],
    rule: ScanRule,
    ratio: f64,
) -> Result<Calibration> {
    if trials.is_empty() || candidates.is_empty() {
        return Err(invalid("calibration needs trials and candidates"));
    }
    let curve: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&kappa| {
            let hits = trials
                .iter()
                .filter(|(path, errors)| {
                    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
                    errors[path.select(kappa, rule) - 1] <= ratio * best
                })
                .count();
            (kappa, hits as f64 / trials.len() as f64)
        })
        .collect();
    let top = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    let first = curve.iter().position(|c| c.1 == top).expect("nonempty");
    let run = curve[first..].iter().take_while(|c| c.1 == top).count();
    let (kappa, agreement) = curve[first + run / 2];
    Ok(Calibration {
        kappa,
        agreement,
        ratio,
        curve,
    })
}
