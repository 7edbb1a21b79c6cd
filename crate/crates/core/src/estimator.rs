//! Weighted spectral filter fits, kernel interpolation, evaluation, and the
//! graded norm used by the Lepskii statistic.
//!
//! With `Ψ = W^{1/2} Φ W^{1/2} = U Σ Uᵀ`, the filtered fit is
//! `a = W^{1/2} U g_λ(Σ) Uᵀ W^{1/2} y` and represents `f = Σ_i a_i φ(·, x_i)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filters::{filter_value, FilterSpec};
use crate::geometry::PointSet;
use crate::kernel::{kernel_value, scale_symmetric, KernelSpec, Zonal};
use crate::quadrature::QuadratureRule;

/// Noisy samples `y_i = f*(x_i) + ε_i`, optionally with the clean values `f*(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    points: PointSet,
    values: Vec<f64>,
    clean: Option<Vec<f64>>,
}

impl DataSet {
    pub fn new(points: PointSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != points.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("data values must be finite"));
        }
        Ok(Self {
            points,
            values,
            clean: None,
        })
    }

    pub fn with_clean_values(mut self, clean: Vec<f64>) -> Result<Self> {
        if clean.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                found: clean.len(),
            });
        }
        self.clean = Some(clean);
        Ok(self)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn clean_values(&self) -> Option<&[f64]> {
        self.clean.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `ε_i = y_i − f*(x_i)`.
    pub fn noise(&self) -> Result<Vec<f64>> {
        let clean = self.clean.as_ref().ok_or(Error::MissingCleanValues)?;
        Ok(self.values.iter().zip(clean).map(|(y, f)| y - f).collect())
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], label: impl Into<String>) -> Self {
        Self {
            points: self.points.subset(indices, label),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            clean: self
                .clean
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// How a [`Fitted`] expansion was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    /// Filter string (`tikhonov`, `itik:3`, …) or `interpolant`.
    pub method: String,
    pub lambda: Option<f64>,
    pub weights: Option<Vec<f64>>,
}

impl FitInfo {
    pub fn for_filter(filter: &FilterSpec, weights: &[f64]) -> Self {
        Self {
            method: filter.to_string(),
            lambda: Some(filter.lambda()),
            weights: Some(weights.to_vec()),
        }
    }
}

/// A kernel expansion `f(x) = Σ_i a_i φ(x·x_i)` in the power-one family.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    centers: PointSet,
    coeffs: Vec<f64>,
    kernel: KernelSpec,
    info: FitInfo,
}

impl Fitted {
    pub fn new(
        centers: PointSet,
        coeffs: Vec<f64>,
        kernel: KernelSpec,
        info: FitInfo,
    ) -> Result<Self> {
        if coeffs.len() != centers.len() {
            return Err(Error::LengthMismatch {
                expected: centers.len(),
                found: coeffs.len(),
            });
        }
        if kernel.power() != 1.0 {
            return Err(invalid(format!(
                "fitted expansions use the power-one kernel, got power {}",
                kernel.power()
            )));
        }
        Ok(Self {
            centers,
            coeffs,
            kernel,
            info,
        })
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn info(&self) -> &FitInfo {
        &self.info
    }

    /// `self − other` for expansions on the same centers and kernel.
    pub fn difference(&self, other: &Fitted) -> Result<Fitted> {
        if self.centers != other.centers || self.kernel != other.kernel {
            return Err(invalid("difference needs identical centers and kernels"));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Fitted {
            centers: self.centers.clone(),
            coeffs,
            kernel: self.kernel,
            info: FitInfo {
                method: "difference".into(),
                lambda: None,
                weights: None,
            },
        })
    }
}

/// Eigendecomposition of `Ψ = W^{1/2} Φ W^{1/2}` for one rule and kernel,
/// shared by every filter and parameter fitted on that geometry.
#[derive(Debug, Clone)]
pub struct WeightedSpectrum {
    rule: QuadratureRule,
    kernel: KernelSpec,
    sqrt_w: Vec<f64>,
    gram: DMatrix<f64>,
    /// Eigenvalues clamped at zero, ascending as returned by the solver's order.
    sigma: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl WeightedSpectrum {
    pub fn new(rule: &QuadratureRule, kernel: &KernelSpec) -> Result<Self> {
        if kernel.power() != 1.0 {
            return Err(invalid(format!(
                "fits use the power-one kernel, got power {}",
                kernel.power()
            )));
        }
        let gram = Zonal::kernel(kernel).gram(rule.points().points());
        let sqrt_w: Vec<f64> = rule.weights().iter().map(|w| w.sqrt()).collect();
        let mut psi = gram.clone();
        scale_symmetric(&mut psi, &sqrt_w);
        let eig = SymmetricEigen::try_new(psi, 1e-15, 0)
            .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
        let sigma = eig.eigenvalues.iter().map(|s| s.max(0.0)).collect();
        Ok(Self {
            rule: rule.clone(),
            kernel: *kernel,
            sqrt_w,
            gram,
            sigma,
            vectors: eig.eigenvectors,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// The Gram matrix `Φ_Λ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Eigenvalues of `Ψ`, clamped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.sigma
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `Uᵀ W^{1/2} y`.
    pub fn project(&self, values: &[f64]) -> Result<DVector<f64>> {
        if values.len() != self.sqrt_w.len() {
            return Err(Error::LengthMismatch {
                expected: self.sqrt_w.len(),
                found: values.len(),
            });
        }
        let scaled = DVector::from_iterator(
            values.len(),
            values.iter().zip(&self.sqrt_w).map(|(y, s)| y * s),
        );
        Ok(self.vectors.tr_mul(&scaled))
    }

    /// Coefficients `W^{1/2} U g_λ(Σ) p` from a projection `p = Uᵀ W^{1/2} y`.
    pub fn coefficients_from_projection(
        &self,
        projection: &DVector<f64>,
        filter: &FilterSpec,
    ) -> Result<Vec<f64>> {
        self.check_filter(filter)?;
        let filtered = DVector::from_iterator(
            projection.len(),
            projection
                .iter()
                .zip(&self.sigma)
                .map(|(p, &s)| p * filter_value(s, filter)),
        );
        let c = &self.vectors * filtered;
        Ok(c.iter().zip(&self.sqrt_w).map(|(c, s)| c * s).collect())
    }

    pub fn coefficients(&self, values: &[f64], filter: &FilterSpec) -> Result<Vec<f64>> {
        self.coefficients_from_projection(&self.project(values)?, filter)
    }

    pub fn fit(&self, values: &[f64], filter: &FilterSpec) -> Result<Fitted> {
        let coeffs = self.coefficients(values, filter)?;
        Ok(Fitted {
            centers: self.rule.points().clone(),
            coeffs,
            kernel: self.kernel,
            info: FitInfo::for_filter(filter, self.rule.weights()),
        })
    }

    /// `sqrt(Σ_i w_i f(x_i)² + λ aᵀΦa)` with `f(x_i) = (Φa)_i`.
    pub fn graded_norm(&self, coeffs: &[f64], lambda: f64) -> Result<f64> {
        graded_norm_with(&self.gram, self.rule.weights(), coeffs, lambda)
    }

    /// Landweber needs `τ σ ≤ 1` on the spectrum; the trace of `Ψ` bounds every eigenvalue.
    fn check_filter(&self, filter: &FilterSpec) -> Result<()> {
        if let FilterSpec::Landweber { tau, .. } = *filter {
            let top = self.sigma.iter().copied().fold(0.0, f64::max);
            if tau * top > 1.0 + 1e-9 {
                return Err(invalid(format!(
                    "Landweber step {tau} exceeds 1/σ_max = {}",
                    1.0 / top
                )));
            }
        }
        Ok(())
    }
}

fn graded_norm_with(gram: &DMatrix<f64>, w: &[f64], coeffs: &[f64], lambda: f64) -> Result<f64> {
    if coeffs.len() != gram.nrows() {
        return Err(Error::LengthMismatch {
            expected: gram.nrows(),
            found: coeffs.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let a = DVector::from_column_slice(coeffs);
    let f = gram * &a;
    let fit: f64 = f.iter().zip(w).map(|(fi, wi)| wi * fi * fi).sum();
    let native = a.dot(&f);
    let radicand = fit + lambda * native;
    let scale = fit.abs() + lambda * native.abs();
    if radicand < -1e-12 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "graded norm radicand {radicand} is negative"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

fn check_alignment(data: &DataSet, rule: &QuadratureRule) -> Result<()> {
    if data.points() != rule.points() {
        return Err(invalid("data points and quadrature points differ"));
    }
    Ok(())
}

/// Weighted spectral filter fit through an eigendecomposition of `Ψ`.
pub fn fit_wsfa(
    data: &DataSet,
    rule: &QuadratureRule,
    kernel: &KernelSpec,
    filter: &FilterSpec,
) -> Result<Fitted> {
    check_alignment(data, rule)?;
    WeightedSpectrum::new(rule, kernel)?.fit(data.values(), filter)
}

/// Landweber by explicit iteration `c ← c + τ(W^{1/2}y − Ψc)` from `c = 0`, then `a = W^{1/2}c`.
pub fn fit_landweber_iterative(
    data: &DataSet,
    rule: &QuadratureRule,
    kernel: &KernelSpec,
    tau: f64,
    t: u64,
) -> Result<Fitted> {
    check_alignment(data, rule)?;
    let filter = FilterSpec::landweber(tau, t)?;
    let sqrt_w: Vec<f64> = rule.weights().iter().map(|w| w.sqrt()).collect();
    let mut psi = Zonal::kernel(kernel).gram(rule.points().points());
    scale_symmetric(&mut psi, &sqrt_w);
    let target = DVector::from_iterator(
        data.len(),
        data.values().iter().zip(&sqrt_w).map(|(y, s)| y * s),
    );
    let first_step = tau * target.norm();
    let mut c = DVector::zeros(data.len());
    for _ in 0..t {
        let residual = &target - &psi * &c;
        c += residual * tau;
        if c.norm() > 1e12 * first_step.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(format!(
                "Landweber iterate exploded; step {tau} is too large"
            )));
        }
    }
    let coeffs = c.iter().zip(&sqrt_w).map(|(c, s)| c * s).collect();
    Fitted::new(
        rule.points().clone(),
        coeffs,
        *kernel,
        FitInfo::for_filter(&filter, rule.weights()),
    )
}

/// Default `τ = 1/trace(Ψ) = 1/(φ(1) Σw)`.
pub fn default_landweber_step(rule: &QuadratureRule, kernel: &KernelSpec) -> Result<f64> {
    let mass: f64 = rule.weights().iter().sum();
    Ok(1.0 / (kernel_value(kernel, 1.0)? * mass))
}

/// Largest condition number accepted by [`fit_interpolant`] without a ridge.
pub const MAX_CONDITION: f64 = 1e14;

/// Kernel interpolant: solves `(Φ + ridge·I) a = y`.
pub fn fit_interpolant(data: &DataSet, kernel: &KernelSpec, ridge: f64) -> Result<Fitted> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(invalid(format!("ridge must be >= 0, got {ridge}")));
    }
    if kernel.power() != 1.0 {
        return Err(invalid("fits use the power-one kernel"));
    }
    let mut gram = Zonal::kernel(kernel).gram(data.points().points());
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let top = largest_eigenvalue(&gram);
    let chol = match gram.cholesky() {
        Some(c) => c,
        None if ridge == 0.0 => {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
            })
        }
        None => {
            return Err(Error::Numerical(
                "kernel matrix plus ridge is not positive definite".into(),
            ))
        }
    };
    if ridge == 0.0 {
        let bottom = smallest_eigenvalue(&chol);
        let condition = top / bottom;
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
    }
    let a = chol.solve(&DVector::from_column_slice(data.values()));
    let info = FitInfo {
        method: "interpolant".into(),
        lambda: Some(ridge),
        weights: None,
    };
    Fitted::new(
        data.points().clone(),
        a.iter().copied().collect(),
        *kernel,
        info,
    )
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..300 {
        let y = m * &x;
        let next = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
        if (next - estimate).abs() <= 1e-8 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Inverse power iteration through an existing Cholesky factor.
fn smallest_eigenvalue(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let n = chol.l_dirty().nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0));
    x /= x.norm();
    let mut estimate = f64::INFINITY;
    for _ in 0..300 {
        let y = chol.solve(&x);
        let rayleigh = x.dot(&y);
        let norm = y.norm();
        x = y / norm;
        let next = 1.0 / rayleigh;
        if (next - estimate).abs() <= 1e-8 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Values `Σ_i a_i φ(q·x_i)` at every query point.
pub fn evaluate(f: &Fitted, queries: &PointSet) -> Vec<f64> {
    let zonal = Zonal::kernel(&f.kernel);
    let centers = f.centers.points();
    queries
        .points()
        .par_iter()
        .map(|q| {
            centers
                .iter()
                .zip(&f.coeffs)
                .map(|(x, a)| a * zonal.between(q, x))
                .sum()
        })
        .collect()
}

/// `sqrt(Σ_i w_i f(x_i)² + λ aᵀΦa)` for an expansion centered on the rule's points.
pub fn graded_norm(f_diff: &Fitted, rule: &QuadratureRule, lambda: f64) -> Result<f64> {
    if f_diff.centers() != rule.points() {
        return Err(invalid(
            "graded norm needs the expansion centered on the rule's points",
        ));
    }
    let gram = Zonal::kernel(&f_diff.kernel).gram(rule.points().points());
    graded_norm_with(&gram, rule.weights(), &f_diff.coeffs, lambda)
}
