//! Synthetic targets with exact norms, sub-Gaussian noise, exact error norms,
//! theory diagnostics, and the convergence-rate harness.
//!
//! Every function handled here is a finite combination of zonal profiles
//! `x ↦ Σ_j b_j Σ_k p_k Z(d,k) P_k(x·z_j)`. Two such expansions pair in
//! `‖·‖_{φ^s}` through the multiplier `c_k = p_k q_k φ̂_k^{-s}`, so every norm
//! below is a closed-form quadratic form rather than a numerical integral.

mod study;

pub use study::{
    beta_metric, convergence_study, rate_slope, LambdaRule, PointsKind, QuadratureConfig,
    ScenarioConfig, StudyResult, StudyRow, SummaryRow, TargetConfig,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{DataSet, Fitted};
use crate::geometry::{dot, PointSet, Vec3};
use crate::harmonics::dim_harmonic;
use crate::kernel::{CoeffTransform, KernelSpec, Zonal};
use crate::quadrature::QuadratureRule;

/// Degree profile `p_k` of a zonal expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `p_k = φ̂_k^a`: translates of the kernel `φ^a`.
    Power(f64),
    /// Arbitrary per-degree profile of length `k_max + 1`.
    Explicit(Vec<f64>),
}

impl Profile {
    fn coeffs(&self, kernel: &KernelSpec) -> Vec<f64> {
        match self {
            Profile::Power(a) => kernel
                .base_coeffs()
                .into_iter()
                .map(|c| c.powf(*a))
                .collect(),
            Profile::Explicit(p) => p.clone(),
        }
    }
}

/// Multiplier `p_k q_k φ̂_k^{-s}` pairing two profiles in `‖·‖_{φ^s}`.
fn pairing(kernel: &KernelSpec, p: &Profile, q: &Profile, s: f64) -> Result<CoeffTransform> {
    if let (Profile::Power(a), Profile::Power(b)) = (p, q) {
        return Ok(CoeffTransform::pairing(kernel, *a, *b, s));
    }
    let (pc, qc) = (p.coeffs(kernel), q.coeffs(kernel));
    let c = pc
        .iter()
        .zip(&qc)
        .enumerate()
        .map(|(k, (a, b))| {
            if *a == 0.0 || *b == 0.0 {
                0.0
            } else {
                a * b * kernel.base_coeff(k).powf(-s)
            }
        })
        .collect();
    CoeffTransform::new(c)
}

/// `x ↦ Σ_j b_j Σ_k p_k Z(d,k) P_k(x·z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub profile: Profile,
    pub centers: Vec<Vec3>,
    pub coeffs: Vec<f64>,
}

impl Expansion {
    pub fn new(profile: Profile, centers: Vec<Vec3>, coeffs: Vec<f64>) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::LengthMismatch {
                expected: centers.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            profile,
            centers,
            coeffs,
        })
    }

    pub fn from_fitted(f: &Fitted) -> Self {
        Self {
            profile: Profile::Power(1.0),
            centers: f.centers().points().to_vec(),
            coeffs: f.coeffs().to_vec(),
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    fn zonal(&self, kernel: &KernelSpec) -> Result<Zonal> {
        Zonal::new(kernel, &CoeffTransform::new(self.profile.coeffs(kernel))?)
    }

    pub fn evaluate(&self, kernel: &KernelSpec, points: &[Vec3]) -> Result<Vec<f64>> {
        let zonal = self.zonal(kernel)?;
        Ok(points
            .iter()
            .map(|x| {
                self.centers
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(z, b)| b * zonal.between(x, z))
                    .sum()
            })
            .collect())
    }
}

/// `⟨u, v⟩_{φ^s}` for two expansions over the same kernel.
pub fn expansion_inner(kernel: &KernelSpec, u: &Expansion, v: &Expansion, s: f64) -> Result<f64> {
    let zonal = Zonal::new(kernel, &pairing(kernel, &u.profile, &v.profile, s)?)?;
    Ok(zonal.bilinear(&u.centers, &u.coeffs, &v.centers, &v.coeffs))
}

/// `‖Σ parts‖²_{φ^s}`; parts sharing profile and centers are merged first so
/// that exact cancellations stay exact.
pub fn expansion_norm_sq(kernel: &KernelSpec, parts: &[Expansion], s: f64) -> Result<f64> {
    let mut merged: Vec<Expansion> = Vec::new();
    for part in parts {
        match merged
            .iter_mut()
            .find(|m| m.profile == part.profile && m.centers == part.centers)
        {
            Some(m) => m
                .coeffs
                .iter_mut()
                .zip(&part.coeffs)
                .for_each(|(a, b)| *a += b),
            None => merged.push(part.clone()),
        }
    }
    let mut total = 0.0;
    for (i, u) in merged.iter().enumerate() {
        total += expansion_inner(kernel, u, u, s)?;
        for v in &merged[i + 1..] {
            total += 2.0 * expansion_inner(kernel, u, v, s)?;
        }
    }
    Ok(total)
}

/// One term `coeff · P_degree(direction·x)` of a harmonic polynomial target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub degree: usize,
    pub direction: Vec3,
    pub coeff: f64,
}

/// Ground-truth function descriptions.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// `f* = Σ_j b_j φ^α(·, z_j)`, an element of `𝒩_{φ^α}`.
    KernelCombo {
        alpha: f64,
        centers: PointSet,
        b: Vec<f64>,
    },
    /// `f* = Σ c·P_L(e·x)`, a polynomial lying in every `𝒩_{φ^a}`.
    HarmonicPoly { terms: Vec<HarmonicTerm> },
}

impl TargetSpec {
    /// `m` uniformly random centers with standard normal coefficients.
    pub fn random_kernel_combo(alpha: f64, m: usize, seed: u64) -> Result<Self> {
        let centers = crate::geometry::random_uniform_points(m, seed)?.with_label("target centers");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        let b = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(TargetSpec::KernelCombo { alpha, centers, b })
    }

    /// `terms` random directions and normal coefficients at degrees `1..=max_degree`.
    pub fn random_harmonic_poly(max_degree: usize, terms: usize, seed: u64) -> Result<Self> {
        if max_degree == 0 || terms == 0 {
            return Err(invalid(
                "harmonic polynomial needs max_degree >= 1 and terms >= 1",
            ));
        }
        let dirs = crate::geometry::random_uniform_points(terms, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
        let terms = dirs
            .points()
            .iter()
            .map(|&direction| HarmonicTerm {
                degree: rng.gen_range(1..=max_degree),
                direction,
                coeff: StandardNormal.sample(&mut rng),
            })
            .collect();
        Ok(TargetSpec::HarmonicPoly { terms })
    }
}

/// A ground truth with pointwise evaluation and exact norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    kernel: KernelSpec,
    alpha: Option<f64>,
    parts: Vec<Expansion>,
}

pub fn make_target(spec: &TargetSpec, kernel: &KernelSpec) -> Result<Target> {
    if kernel.power() != 1.0 {
        return Err(invalid("targets are built over the power-one kernel"));
    }
    let kernel = *kernel;
    match spec {
        TargetSpec::KernelCombo { alpha, centers, b } => {
            let half_d = kernel.d() as f64 / 2.0;
            if !(alpha.is_finite() && *alpha > 0.0 && alpha * kernel.gamma() > half_d) {
                return Err(invalid(format!(
                    "kernel combo needs α·γ > d/2, got α = {alpha}, γ = {}",
                    kernel.gamma()
                )));
            }
            let part =
                Expansion::new(Profile::Power(*alpha), centers.points().to_vec(), b.clone())?;
            Ok(Target {
                kernel,
                alpha: Some(*alpha),
                parts: vec![part],
            })
        }
        TargetSpec::HarmonicPoly { terms } => {
            let mut degrees: Vec<usize> = terms.iter().map(|t| t.degree).collect();
            degrees.sort_unstable();
            degrees.dedup();
            let mut parts = Vec::new();
            for degree in degrees {
                if degree > kernel.k_max() {
                    return Err(invalid(format!(
                        "harmonic degree {degree} exceeds k_max {}",
                        kernel.k_max()
                    )));
                }
                let z = dim_harmonic(kernel.d(), degree)? as f64;
                let mut profile = vec![0.0; kernel.k_max() + 1];
                profile[degree] = 1.0 / z;
                let (centers, coeffs): (Vec<Vec3>, Vec<f64>) = terms
                    .iter()
                    .filter(|t| t.degree == degree)
                    .map(|t| {
                        let norm = dot(&t.direction, &t.direction).sqrt();
                        (
                            [
                                t.direction[0] / norm,
                                t.direction[1] / norm,
                                t.direction[2] / norm,
                            ],
                            t.coeff,
                        )
                    })
                    .unzip();
                if centers.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(invalid("harmonic term directions must be nonzero"));
                }
                parts.push(Expansion::new(Profile::Explicit(profile), centers, coeffs)?);
            }
            Ok(Target {
                kernel,
                alpha: None,
                parts,
            })
        }
    }
}

impl Target {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Source smoothness `α`; `None` for polynomials (smooth of every order).
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn parts(&self) -> &[Expansion] {
        &self.parts
    }

    pub fn evaluate(&self, points: &PointSet) -> Result<Vec<f64>> {
        let mut out = vec![0.0; points.len()];
        for part in &self.parts {
            for (o, v) in out
                .iter_mut()
                .zip(part.evaluate(&self.kernel, points.points())?)
            {
                *o += v;
            }
        }
        Ok(out)
    }

    /// `‖f*‖_{φ^s}`; `s = 0` is the `L²` norm.
    pub fn norm(&self, s: f64) -> Result<f64> {
        Ok(expansion_norm_sq(&self.kernel, &self.parts, s)?
            .max(0.0)
            .sqrt())
    }

    /// `⟨f, f*⟩_{φ^s}` for a fitted expansion.
    pub fn inner(&self, f: &Fitted, s: f64) -> Result<f64> {
        let fe = Expansion::from_fitted(f);
        self.parts
            .iter()
            .map(|p| expansion_inner(&self.kernel, &fe, p, s))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            parts: self.parts.iter().map(|p| p.scaled(factor)).collect(),
            ..self.clone()
        }
    }

    /// Rescaled to unit `L²` norm; the zero function is returned unchanged.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm(0.0)?;
        Ok(if norm > 0.0 {
            self.scaled(1.0 / norm)
        } else {
            self.clone()
        })
    }

    pub fn check_beta(&self, beta: f64) -> Result<()> {
        let top = self.alpha.unwrap_or(f64::INFINITY).min(1.0);
        if !(beta >= 0.0 && beta <= top) {
            return Err(invalid(format!(
                "error exponent β = {beta} must lie in [0, {top}]"
            )));
        }
        Ok(())
    }
}

/// Exact `‖f − f*‖_{φ^β}`, `0 ≤ β ≤ min(1, α)`; `β = 0` is the `L²` error.
pub fn error_norm(f: &Fitted, target: &Target, beta: f64) -> Result<f64> {
    target.check_beta(beta)?;
    if *f.kernel() != target.kernel {
        return Err(invalid("fit and target use different kernels"));
    }
    let mut parts = vec![Expansion::from_fitted(f)];
    parts.extend(target.parts.iter().map(|p| p.scaled(-1.0)));
    Ok(expansion_norm_sq(&target.kernel, &parts, beta)?
        .max(0.0)
        .sqrt())
}

/// Precomputed pieces of `‖f − f*‖²_{φ^β} = aᵀMa − 2aᵀv + ‖f*‖²` for repeated
/// fits on one set of centers.
#[derive(Debug, Clone)]
pub struct NormEvaluator {
    centers: PointSet,
    beta: f64,
    m: DMatrix<f64>,
    v: DVector<f64>,
    target_sq: f64,
}

impl NormEvaluator {
    pub fn new(centers: &PointSet, target: &Target, beta: f64) -> Result<Self> {
        target.check_beta(beta)?;
        let kernel = &target.kernel;
        let xs = centers.points();
        let m = Zonal::new(kernel, &CoeffTransform::sobolev(kernel, beta))?.gram(xs);
        let mut v = DVector::zeros(xs.len());
        for part in &target.parts {
            let zonal = Zonal::new(
                kernel,
                &pairing(kernel, &Profile::Power(1.0), &part.profile, beta)?,
            )?;
            v += zonal.matrix(xs, &part.centers) * DVector::from_column_slice(&part.coeffs);
        }
        let target_sq = expansion_norm_sq(kernel, &target.parts, beta)?;
        Ok(Self {
            centers: centers.clone(),
            beta,
            m,
            v,
            target_sq,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    /// `‖f − f*‖_{φ^β}` for coefficients on the evaluator's centers.
    pub fn error(&self, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() != self.v.len() {
            return Err(Error::LengthMismatch {
                expected: self.v.len(),
                found: coeffs.len(),
            });
        }
        let a = DVector::from_column_slice(coeffs);
        let sq = a.dot(&(&self.m * &a)) - 2.0 * a.dot(&self.v) + self.target_sq;
        Ok(sq.max(0.0).sqrt())
    }

    pub fn error_of(&self, f: &Fitted) -> Result<f64> {
        if f.centers() != &self.centers {
            return Err(invalid("fit centers differ from the evaluator's centers"));
        }
        self.error(f.coeffs())
    }
}

/// Sub-Gaussian noise laws, all mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[−m, m]`.
    UniformBounded {
        m: f64,
    },
    /// `±1` with equal probability.
    SymmetricBernoulli,
}

impl NoiseKind {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(invalid(format!("noise sigma must be >= 0, got {sigma}")))
            }
            NoiseKind::UniformBounded { m } if !(m >= 0.0 && m.is_finite()) => {
                Err(invalid(format!("noise bound must be >= 0, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// Sub-Gaussian norm `inf{t : E exp(ε²/t²) ≤ 2}`: `sqrt(8/3)·σ` for
    /// Gaussians, `M/sqrt(ln 2)` for variables bounded by `M`.
    pub fn subgaussian_norm(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => (8.0f64 / 3.0).sqrt() * sigma,
            NoiseKind::UniformBounded { m } => m / std::f64::consts::LN_2.sqrt(),
            NoiseKind::SymmetricBernoulli => 1.0 / std::f64::consts::LN_2.sqrt(),
        }
    }

    /// Standard deviation of one draw.
    pub fn std_dev(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::UniformBounded { m } => m / 3.0f64.sqrt(),
            NoiseKind::SymmetricBernoulli => 1.0,
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            NoiseKind::Gaussian { sigma } => {
                if sigma == 0.0 {
                    vec![0.0; n]
                } else {
                    let law = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
                    (0..n).map(|_| law.sample(rng)).collect()
                }
            }
            NoiseKind::UniformBounded { m } => {
                if m == 0.0 {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.gen_range(-m..=m)).collect()
                }
            }
            NoiseKind::SymmetricBernoulli => (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

pub fn sample_noise(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("sample_noise needs n >= 1"));
    }
    spec.kind
        .sample(n, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Derived stream seed: `master` mixed with each element of `stream` by splitmix64.
pub fn derive_seed(master: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(master), |acc, &s| mix(acc ^ mix(s)))
}

/// `N(λ) = Σ_k φ̂_k/(φ̂_k+λ) Z(d,k)` over the kernel's truncation.
pub fn effective_dimension(kernel: &KernelSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let ctx = kernel.harmonic_context();
    Ok(kernel
        .base_coeffs()
        .iter()
        .zip(ctx.dims())
        .map(|(c, z)| c / (c + lambda) * z)
        .sum())
}

fn stability_transform(kernel: &KernelSpec, lambda: f64) -> Result<CoeffTransform> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    CoeffTransform::new(
        kernel
            .base_coeffs()
            .into_iter()
            .map(|c| c / (c + lambda))
            .collect(),
    )
}

/// `sqrt(Σ_k φ̂_k/(φ̂_k+λ) Z(d,k) Σ_{i,i'} w_i w_{i'} ε_i ε_{i'} P_k(x_i·x_{i'}))`,
/// the noise part of the fit measured through `(L_φ+λI)^{-1/2}` in `𝒩_φ`.
pub fn stability_functional(
    data: &DataSet,
    rule: &QuadratureRule,
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<f64> {
    if data.points() != rule.points() {
        return Err(invalid("data points and quadrature points differ"));
    }
    let noise = data.noise()?;
    let zonal = Zonal::new(kernel, &stability_transform(kernel, lambda)?)?;
    let a: Vec<f64> = noise
        .iter()
        .zip(rule.weights())
        .map(|(e, w)| e * w)
        .collect();
    let xs = rule.points().points();
    Ok(zonal.bilinear(xs, &a, xs, &a).max(0.0).sqrt())
}

/// [`stability_functional`] with the degree sum tabulated once, for many noise draws.
#[derive(Debug, Clone)]
pub struct StabilityGram {
    weights: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl StabilityGram {
    pub fn new(rule: &QuadratureRule, kernel: &KernelSpec, lambda: f64) -> Result<Self> {
        let zonal = Zonal::new(kernel, &stability_transform(kernel, lambda)?)?;
        Ok(Self {
            weights: rule.weights().to_vec(),
            matrix: zonal.gram(rule.points().points()),
        })
    }

    pub fn value(&self, noise: &[f64]) -> Result<f64> {
        if noise.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                found: noise.len(),
            });
        }
        let a = DVector::from_iterator(
            noise.len(),
            noise.iter().zip(&self.weights).map(|(e, w)| e * w),
        );
        Ok(a.dot(&(&self.matrix * &a)).max(0.0).sqrt())
    }
}

/// Centers per random function in [`discrepancy_probe`].
pub const PROBE_CENTERS: usize = 8;

/// Randomized lower bound on the quadrature discrepancy
/// `sup |∫ f·η g − Σ_i w_i f(x_i) η g(x_i)|` over unit balls of `𝒩_{φ^α}` (for `f`)
/// and `𝒩_φ` (for `g`), with `η` the multiplier `(φ̂_k+λ)^{-u}`.
///
/// Each trial draws `f` and `g` as random kernel combinations normalized by
/// their exact norms; the supremum itself is not computed.
pub fn discrepancy_probe(
    rule: &QuadratureRule,
    kernel: &KernelSpec,
    alpha: f64,
    lambda: f64,
    u: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(alpha > 0.0 && lambda > 0.0 && (0.0..=0.5).contains(&u)) {
        return Err(invalid(format!(
            "probe needs α > 0, λ > 0, u in [0, 1/2]; got {alpha}, {lambda}, {u}"
        )));
    }
    let base = kernel.base_coeffs();
    let f_zonal = Zonal::new(kernel, &CoeffTransform::power_of(kernel, alpha))?;
    let g_zonal = Zonal::new(
        kernel,
        &CoeffTransform::new(base.iter().map(|c| c * (c + lambda).powf(-u)).collect())?,
    )?;
    let exact = Zonal::new(
        kernel,
        &CoeffTransform::new(
            base.iter()
                .map(|c| c.powf(alpha + 1.0) * (c + lambda).powf(-u))
                .collect(),
        )?,
    )?;
    let f_norm = Zonal::new(kernel, &CoeffTransform::power_of(kernel, alpha))?;
    let g_norm = Zonal::kernel(kernel);
    let xs = rule.points().points();
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[trial as u64]));
        let draw = |rng: &mut ChaCha8Rng| -> Result<(Vec<Vec3>, Vec<f64>)> {
            let pts = crate::geometry::random_uniform_points(PROBE_CENTERS, rng.gen())?;
            let b: Vec<f64> = (0..PROBE_CENTERS)
                .map(|_| StandardNormal.sample(rng))
                .collect();
            Ok((pts.points().to_vec(), b))
        };
        let (zf, mut bf) = draw(&mut rng)?;
        let (zg, mut bg) = draw(&mut rng)?;
        let nf = f_norm.bilinear(&zf, &bf, &zf, &bf).sqrt();
        let ng = g_norm.bilinear(&zg, &bg, &zg, &bg).sqrt();
        bf.iter_mut().for_each(|b| *b /= nf);
        bg.iter_mut().for_each(|b| *b /= ng);
        let integral = exact.bilinear(&zf, &bf, &zg, &bg);
        let sum: f64 = xs
            .iter()
            .zip(rule.weights())
            .map(|(x, w)| {
                let f: f64 = zf
                    .iter()
                    .zip(&bf)
                    .map(|(z, b)| b * f_zonal.between(x, z))
                    .sum();
                let g: f64 = zg
                    .iter()
                    .zip(&bg)
                    .map(|(z, b)| b * g_zonal.between(x, z))
                    .sum();
                w * f * g
            })
            .sum();
        worst = worst.max((integral - sum).abs());
    }
    Ok(worst)
}
