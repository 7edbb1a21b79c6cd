//! Power-law spherical basis functions, their Gram matrices, and filtered
//! quadratic forms.
//!
//! The base coefficient law is `φ̂_k = (1+k)^(-2γ)`. A [`KernelSpec`] with
//! `power = a` is the kernel `φ^a(t) = Σ_k φ̂_k^a Z(d,k) P_k(t)` truncated at
//! `k_max`. All inner products between kernel expansions reduce to per-degree
//! multipliers on `Z(d,k) P_k(x·x')`, see [`CoeffTransform`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, PointSet, Vec3};
use crate::harmonics::{clamp_inner, HarmonicContext};

/// Default automatic truncation: relative tail tolerance against `φ(1)`.
pub const DEFAULT_TAIL_RTOL: f64 = 1e-10;

/// Hard cap on the automatic truncation degree.
pub const DEFAULT_K_MAX_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelFields")]
pub struct KernelSpec {
    d: usize,
    gamma: f64,
    power: f64,
    k_max: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFields {
    d: usize,
    gamma: f64,
    power: f64,
    k_max: usize,
}

impl TryFrom<KernelFields> for KernelSpec {
    type Error = Error;

    fn try_from(f: KernelFields) -> Result<Self> {
        KernelSpec::new(f.d, f.gamma, f.power, f.k_max)
    }
}

impl KernelSpec {
    pub fn new(d: usize, gamma: f64, power: f64, k_max: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("sphere dimension must be >= 2, got {d}")));
        }
        if !(gamma.is_finite() && gamma > d as f64 / 2.0) {
            return Err(invalid(format!(
                "gamma must exceed d/2 = {}, got {gamma}",
                d as f64 / 2.0
            )));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(invalid(format!("power must be >= 0, got {power}")));
        }
        Ok(Self {
            d,
            gamma,
            power,
            k_max,
        })
    }

    /// Picks `k_max` by [`default_k_max`].
    pub fn with_default_truncation(d: usize, gamma: f64, power: f64) -> Result<Self> {
        let probe = Self::new(d, gamma, power, 0)?;
        Self::new(
            d,
            gamma,
            power,
            default_k_max(&probe, DEFAULT_TAIL_RTOL, DEFAULT_K_MAX_CAP)?,
        )
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// The same base law and truncation with a different family power.
    pub fn family(&self, power: f64) -> Result<Self> {
        Self::new(self.d, self.gamma, power, self.k_max)
    }

    pub fn with_k_max(&self, k_max: usize) -> Self {
        Self { k_max, ..*self }
    }

    /// `φ̂_k = (1+k)^(-2γ)` for the base (power 1) kernel.
    pub fn base_coeff(&self, k: usize) -> f64 {
        (1.0 + k as f64).powf(-2.0 * self.gamma)
    }

    pub fn base_coeffs(&self) -> Vec<f64> {
        (0..=self.k_max).map(|k| self.base_coeff(k)).collect()
    }

    pub fn harmonic_context(&self) -> HarmonicContext {
        HarmonicContext::new(self.d, self.k_max).expect("validated dimension")
    }
}

/// Coefficients `φ̂_k^power` for `k = 0..=k_max`.
pub fn kernel_coeffs(spec: &KernelSpec) -> Vec<f64> {
    spec.base_coeffs()
        .into_iter()
        .map(|c| c.powf(spec.power))
        .collect()
}

/// Per-degree multipliers `c_k` applied to `Z(d,k) P_k(x·x')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTransform {
    c: Vec<f64>,
}

impl CoeffTransform {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some(k) = c.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(format!(
                "transform coefficient c_{k} = {} must be finite and >= 0",
                c[k]
            )));
        }
        Ok(Self { c })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// `φ̂_k^e` from the base law of `spec`.
    pub fn power_of(spec: &KernelSpec, exponent: f64) -> Self {
        Self {
            c: spec
                .base_coeffs()
                .into_iter()
                .map(|c| c.powf(exponent))
                .collect(),
        }
    }

    /// Pairing of an expansion in the `φ^p` family with one in the `φ^q`
    /// family, measured in the `‖·‖_{φ^s}` inner product: `c_k = φ̂_k^(p+q-s)`.
    pub fn pairing(spec: &KernelSpec, p: f64, q: f64, s: f64) -> Self {
        Self::power_of(spec, p + q - s)
    }

    /// Native inner product of two `φ`-expansions: `c_k = φ̂_k`.
    pub fn native(spec: &KernelSpec) -> Self {
        Self::pairing(spec, 1.0, 1.0, 1.0)
    }

    /// `L²` inner product of two `φ`-expansions: `c_k = φ̂_k²`.
    pub fn l2(spec: &KernelSpec) -> Self {
        Self::pairing(spec, 1.0, 1.0, 0.0)
    }

    /// `‖·‖_{φ^s}` inner product of two `φ`-expansions: `c_k = φ̂_k^(2-s)`.
    pub fn sobolev(spec: &KernelSpec, s: f64) -> Self {
        Self::pairing(spec, 1.0, 1.0, s)
    }

    /// Elementwise product, i.e. composition of spectral multipliers.
    pub fn compose(&self, other: &CoeffTransform) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Self::new(self.c.iter().zip(&other.c).map(|(a, b)| a * b).collect())
    }
}

/// A truncated zonal function `Σ_k c_k Z(d,k) P_k(t)`, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Zonal {
    ctx: HarmonicContext,
    weights: Vec<f64>,
}

impl Zonal {
    pub fn new(spec: &KernelSpec, transform: &CoeffTransform) -> Result<Self> {
        if transform.len() != spec.k_max + 1 {
            return Err(Error::LengthMismatch {
                expected: spec.k_max + 1,
                found: transform.len(),
            });
        }
        let ctx = spec.harmonic_context();
        let weights = transform
            .c
            .iter()
            .zip(ctx.dims())
            .map(|(c, z)| c * z)
            .collect();
        Ok(Self { ctx, weights })
    }

    /// The kernel `φ^power` of `spec` itself.
    pub fn kernel(spec: &KernelSpec) -> Self {
        let t = CoeffTransform {
            c: kernel_coeffs(spec),
        };
        Self::new(spec, &t).expect("matching length")
    }

    /// Degree weights `c_k Z(d,k)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Value at an already clamped inner product.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.ctx.recurrence().series(&self.weights, t)
    }

    #[inline]
    pub fn between(&self, x: &Vec3, y: &Vec3) -> f64 {
        self.at(dot(x, y).clamp(-1.0, 1.0))
    }

    /// Values of two zonal functions (same `d`, same length) from one recurrence pass.
    #[inline]
    pub fn pair_at(&self, other: &Zonal, t: f64) -> (f64, f64) {
        self.ctx
            .recurrence()
            .series_pair(&self.weights, &other.weights, t)
    }

    /// `Σ_i Σ_j a_i b_j g(x_i·y_j)`, rows summed in order then combined in order.
    pub fn bilinear(&self, xs: &[Vec3], a: &[f64], ys: &[Vec3], b: &[f64]) -> f64 {
        let rows: Vec<f64> = xs
            .par_iter()
            .zip(a.par_iter())
            .map(|(x, &ai)| {
                if ai == 0.0 {
                    return 0.0;
                }
                let row: f64 = ys
                    .iter()
                    .zip(b)
                    .filter(|(_, &bj)| bj != 0.0)
                    .map(|(y, &bj)| bj * self.between(x, y))
                    .sum();
                ai * row
            })
            .collect();
        rows.iter().sum()
    }

    /// Matrix `g(x_i·y_j)`.
    pub fn matrix(&self, xs: &[Vec3], ys: &[Vec3]) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|x| ys.iter().map(|y| self.between(x, y)).collect())
            .collect();
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| rows[i][j])
    }

    /// Symmetric matrix `g(x_i·x_j)`, computed on the upper triangle and mirrored.
    pub fn gram(&self, xs: &[Vec3]) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..xs.len())
            .into_par_iter()
            .map(|i| xs[i..].iter().map(|y| self.between(&xs[i], y)).collect())
            .collect();
        symmetric_from_upper(&rows)
    }

    /// Two symmetric Gram matrices sharing one recurrence pass per pair.
    pub fn gram_pair(&self, other: &Zonal, xs: &[Vec3]) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..xs.len())
            .into_par_iter()
            .map(|i| {
                xs[i..]
                    .iter()
                    .map(|y| self.pair_at(other, dot(&xs[i], y).clamp(-1.0, 1.0)))
                    .unzip()
            })
            .collect();
        let (ra, rb): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        (symmetric_from_upper(&ra), symmetric_from_upper(&rb))
    }
}

fn symmetric_from_upper(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    m
}

/// `φ(t) = Σ_k φ̂_k^power Z(d,k) P_k(t)`.
pub fn kernel_value(spec: &KernelSpec, t: f64) -> Result<f64> {
    Ok(Zonal::kernel(spec).at(clamp_inner(t)?))
}

/// Gram matrix `Φ_Λ = (φ(x_i·x_j))`.
pub fn kernel_matrix(spec: &KernelSpec, points: &PointSet) -> DMatrix<f64> {
    Zonal::kernel(spec).gram(points.points())
}

/// `W^{1/2} Φ_Λ W^{1/2}`.
pub fn weighted_kernel_matrix(
    spec: &KernelSpec,
    points: &PointSet,
    w: &[f64],
) -> Result<DMatrix<f64>> {
    if w.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            found: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid(format!(
            "weight {i} is {} but must be positive",
            w[i]
        )));
    }
    let mut m = kernel_matrix(spec, points);
    scale_symmetric(&mut m, &w.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
    Ok(m)
}

/// `m ← D m D` with `D = diag(s)`.
pub(crate) fn scale_symmetric(m: &mut DMatrix<f64>, s: &[f64]) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= s[i] * s[j];
        }
    }
}

/// `Σ_k c_k Z(d,k) Σ_{i,i'} a_i b_{i'} P_k(x_i·x'_{i'})`.
pub fn filtered_quadratic_form(
    spec: &KernelSpec,
    points_a: &PointSet,
    a: &[f64],
    points_b: &PointSet,
    b: &[f64],
    transform: &CoeffTransform,
) -> Result<f64> {
    if a.len() != points_a.len() {
        return Err(Error::LengthMismatch {
            expected: points_a.len(),
            found: a.len(),
        });
    }
    if b.len() != points_b.len() {
        return Err(Error::LengthMismatch {
            expected: points_b.len(),
            found: b.len(),
        });
    }
    let zonal = Zonal::new(spec, transform)?;
    Ok(zonal.bilinear(points_a.points(), a, points_b.points(), b))
}

/// Upper bound on `Σ_{k > k_max} φ̂_k^(s·power) Z(d,k)` by the integral of a
/// decreasing majorant.
pub fn truncation_tail(spec: &KernelSpec, s: f64) -> Result<f64> {
    let e = 2.0 * spec.gamma * spec.power * s;
    let d = spec.d as f64;
    if !(e > d) {
        return Err(invalid(format!(
            "tail of exponent {e} diverges on S^{}",
            spec.d
        )));
    }
    let base = 1.0 + spec.k_max as f64;
    if spec.d == 2 {
        // Z(2,u) = 2(1+u) - 1, integrated exactly against (1+u)^(-e) over [K, ∞).
        Ok(2.0 * base.powf(2.0 - e) / (e - 2.0) - base.powf(1.0 - e) / (e - 1.0))
    } else {
        // Z(d,u) ≤ c_d (1+u)^(d-1) with c_d = max(2, d-1) / (d-1).
        let c = (2.0f64).max(d - 1.0) / (d - 1.0);
        Ok(c * base.powf(d - e) / (e - d))
    }
}

/// Smallest `K` with `truncation_tail(K, 1) < rtol · φ_K(1)`, capped at `cap`.
pub fn default_k_max(spec: &KernelSpec, rtol: f64, cap: usize) -> Result<usize> {
    let dims = HarmonicContext::new(spec.d, cap)?;
    let mut at_one = 0.0;
    for k in 0..=cap {
        at_one += spec.base_coeff(k).powf(spec.power) * dims.dims()[k];
        let candidate = spec.with_k_max(k);
        if truncation_tail(&candidate, 1.0)? < rtol * at_one {
            return Ok(k);
        }
    }
    Ok(cap)
}
