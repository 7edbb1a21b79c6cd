//! Divide-and-conquer fitting: split the sites into quasi-uniform blocks, fit
//! each block with its own quadrature rule, and average the local estimators
//! with weights `|Λ_j|/|Λ|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{NormEvaluator, Target};
use crate::error::{invalid, Error, Result};
use crate::estimator::{DataSet, FitInfo, Fitted, WeightedSpectrum};
use crate::filters::FilterFamily;
use crate::geometry::{geometry_stats, partition_indices, PointSet, DEFAULT_GRID_RESOLUTION};
use crate::kernel::KernelSpec;
use crate::quadrature::{compute_weights, is_dtype, QuadratureRule};
use crate::selection::filter_at;

/// Upper limit on the block count, `⌊c · n^{2γα/(2γα+d)}⌋`.
pub fn max_partitions(n: usize, gamma: f64, alpha: f64, d: usize, c_bound: f64) -> Result<usize> {
    if !(gamma > 0.0 && alpha > 0.0 && c_bound > 0.0 && d > 0) {
        return Err(invalid("max_partitions needs positive parameters"));
    }
    let e = 2.0 * gamma * alpha / (2.0 * gamma * alpha + d as f64);
    let value = c_bound * (n as f64).powf(e);
    Ok((value * (1.0 + 1e-12)).floor() as usize)
}

/// Enforces `J ≤ max_partitions(n, γ, α, d, c_bound)` before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrictBound {
    pub alpha: f64,
    #[serde(default = "one")]
    pub c_bound: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcConfig {
    /// Number of blocks `J`.
    pub parts: usize,
    pub family: FilterFamily,
    /// Shared filter parameter.
    pub lambda: f64,
    /// Block rules have degree `s_j = round(c_dia · |Λ_j|^{1/d})`.
    pub c_dia: f64,
    pub c_star: f64,
    pub quad_tol: f64,
    pub strict: Option<StrictBound>,
}

impl DcConfig {
    pub fn new(parts: usize, family: FilterFamily, lambda: f64) -> Self {
        Self {
            parts,
            family,
            lambda,
            c_dia: 0.7,
            c_star: 5.0,
            quad_tol: 1e-18,
            strict: None,
        }
    }

    pub fn degree_for(&self, n: usize, d: usize) -> usize {
        (self.c_dia * (n as f64).powf(1.0 / d as f64))
            .round()
            .max(1.0) as usize
    }
}

/// Diagnostics of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub block: usize,
    pub size: usize,
    pub mesh_ratio: f64,
    pub degree: usize,
    pub residual: f64,
    pub is_dtype: bool,
    /// True when the block fell back to equal weights at degree 0.
    pub fallback: bool,
    pub local_error: Option<f64>,
}

struct Block {
    indices: Vec<usize>,
    spectrum: WeightedSpectrum,
    report: SubsetReport,
}

/// Partition, block rules, and block spectra for one set of sites, reusable
/// across data vectors.
pub struct DcModel {
    cfg: DcConfig,
    kernel: KernelSpec,
    n: usize,
    blocks: Vec<Block>,
    centers: PointSet,
    order: Vec<usize>,
}

impl DcModel {
    pub fn new(points: &PointSet, cfg: &DcConfig, kernel: &KernelSpec) -> Result<Self> {
        if let Some(strict) = cfg.strict {
            let cap = max_partitions(
                points.len(),
                kernel.gamma(),
                strict.alpha,
                kernel.d(),
                strict.c_bound,
            )?;
            if cfg.parts > cap {
                return Err(invalid(format!(
                    "{} blocks exceed the bound {cap}",
                    cfg.parts
                )));
            }
        }
        Self::from_blocks(points, partition_indices(points, cfg.parts)?, cfg, kernel)
    }

    /// Uses a caller-supplied partition; `cfg.parts` is ignored.
    pub fn from_blocks(
        points: &PointSet,
        blocks: Vec<Vec<usize>>,
        cfg: &DcConfig,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        let n = points.len();
        let mut seen = vec![false; n];
        for &i in blocks.iter().flatten() {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(invalid("blocks must partition the sites"));
            }
        }
        if seen.contains(&false) || blocks.iter().any(Vec::is_empty) {
            return Err(invalid("blocks must be nonempty and cover every site"));
        }
        filter_at(&cfg.family, cfg.lambda)?;
        let parts = blocks.len();
        let blocks = blocks
            .into_par_iter()
            .enumerate()
            .map(|(j, indices)| {
                let sites = points.subset(&indices, format!("{}[{j}/{parts}]", points.label()));
                let stats = geometry_stats(&sites, DEFAULT_GRID_RESOLUTION)?;
                let size = indices.len();
                let degree = cfg.degree_for(size, kernel.d());
                let (rule, fallback) = match compute_weights(&sites, degree, cfg.quad_tol) {
                    Ok(rule) => (rule, false),
                    Err(Error::InfeasibleDegree { .. }) => {
                        eprintln!("warning: block {j} ({size} points) has no degree-{degree} rule; using equal weights");
                        (QuadratureRule::equal_weights(sites, 0, cfg.quad_tol)?, true)
                    }
                    Err(e) => return Err(e),
                };
                let report = SubsetReport {
                    block: j,
                    size,
                    mesh_ratio: stats.mesh_ratio,
                    degree: rule.degree(),
                    residual: rule.residual(),
                    is_dtype: is_dtype(&rule, cfg.c_star),
                    fallback,
                    local_error: None,
                };
                Ok(Block { indices, spectrum: WeightedSpectrum::new(&rule, kernel)?, report })
            })
            .collect::<Result<Vec<_>>>()?;
        let order: Vec<usize> = blocks
            .iter()
            .flat_map(|b| b.indices.iter().copied())
            .collect();
        let centers = points.subset(&order, points.label());
        Ok(Self {
            cfg: cfg.clone(),
            kernel: *kernel,
            n,
            blocks,
            centers,
            order,
        })
    }

    pub fn reports(&self) -> Vec<SubsetReport> {
        self.blocks.iter().map(|b| b.report.clone()).collect()
    }

    /// Concatenated block sites, the centers of the global estimator.
    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    /// `order[i]` is the input index of the `i`-th global center.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn local_coeffs(&self, values: &[f64]) -> Result<Vec<Vec<f64>>> {
        if values.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: values.len(),
            });
        }
        let filter = filter_at(&self.cfg.family, self.cfg.lambda)?;
        self.blocks
            .par_iter()
            .map(|b| {
                let y: Vec<f64> = b.indices.iter().map(|&i| values[i]).collect();
                b.spectrum.coefficients(&y, &filter)
            })
            .collect()
    }

    fn synthesize(&self, local: &[Vec<f64>]) -> Vec<f64> {
        self.blocks
            .iter()
            .zip(local)
            .flat_map(|(b, a)| {
                let share = b.indices.len() as f64 / self.n as f64;
                a.iter().map(move |c| share * c)
            })
            .collect()
    }

    /// Global estimator `Σ_j (|Λ_j|/|Λ|) f_j` for values given in input order.
    pub fn fit(&self, values: &[f64]) -> Result<Fitted> {
        let coeffs = self.synthesize(&self.local_coeffs(values)?);
        let filter = filter_at(&self.cfg.family, self.cfg.lambda)?;
        let info = FitInfo {
            method: format!("dc:{}:{filter}", self.cfg.parts),
            lambda: Some(filter.lambda()),
            weights: None,
        };
        Fitted::new(self.centers.clone(), coeffs, self.kernel, info)
    }

    /// Global coefficients permuted back to the input order of the sites.
    pub fn coefficients_in_input_order(&self, values: &[f64]) -> Result<Vec<f64>> {
        let coeffs = self.synthesize(&self.local_coeffs(values)?);
        let mut out = vec![0.0; self.n];
        for (c, &i) in coeffs.iter().zip(&self.order) {
            out[i] = *c;
        }
        Ok(out)
    }

    /// Block fits as standalone expansions on their own sites.
    pub fn local_fits(&self, values: &[f64]) -> Result<Vec<Fitted>> {
        let filter = filter_at(&self.cfg.family, self.cfg.lambda)?;
        self.local_coeffs(values)?
            .into_iter()
            .zip(&self.blocks)
            .map(|(a, b)| {
                let rule = b.spectrum.rule();
                Fitted::new(
                    rule.points().clone(),
                    a,
                    self.kernel,
                    FitInfo::for_filter(&filter, rule.weights()),
                )
            })
            .collect()
    }

    /// Reports with each block's exact `‖f_j − f*‖_{φ^β}` filled in.
    pub fn reports_with_errors(
        &self,
        values: &[f64],
        target: &Target,
        beta: f64,
    ) -> Result<Vec<SubsetReport>> {
        let fits = self.local_fits(values)?;
        self.blocks
            .iter()
            .zip(&fits)
            .map(|(b, f)| {
                let err = NormEvaluator::new(f.centers(), target, beta)?.error(f.coeffs())?;
                Ok(SubsetReport {
                    local_error: Some(err),
                    ..b.report.clone()
                })
            })
            .collect()
    }
}

/// Divide-and-conquer fit with the block reports.
pub fn dc_fit(
    data: &DataSet,
    cfg: &DcConfig,
    kernel: &KernelSpec,
) -> Result<(Fitted, Vec<SubsetReport>)> {
    let model = DcModel::new(data.points(), cfg, kernel)?;
    Ok((model.fit(data.values())?, model.reports()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_bound_arithmetic() {
        assert_eq!(max_partitions(1024, 1.5, 1.0, 2, 1.0).unwrap(), 64);
        assert_eq!(max_partitions(1024, 1.5, 1.0, 2, 0.5).unwrap(), 32);
        assert_eq!(max_partitions(2048, 1.5, 1.0, 2, 1.0).unwrap(), 97);
    }
}
