//! Gegenbauer polynomials normalized to one at `t = 1`, harmonic-space
//! dimensions, and Gauss–Legendre nodes.
//!
//! Everything downstream is written through the addition formula with the
//! normalized surface measure (`∫ dω = 1`):
//!
//! ```text
//! Σ_ℓ Y_{k,ℓ}(x) Y_{k,ℓ}(x') = Z(d,k) · P_k(x·x')
//! ```
//!
//! so individual spherical harmonics are never materialized.

use crate::error::{invalid, Result};

/// Inner products this far outside `[-1, 1]` are rejected; anything closer is clamped.
pub const CLAMP_SLACK: f64 = 1e-12;

/// Sphere dimension plus truncation degree, with the dimensions `Z(d,k)` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicContext {
    d: usize,
    k_max: usize,
    dims: Vec<f64>,
    rec: Recurrence,
}

impl HarmonicContext {
    pub fn new(d: usize, k_max: usize) -> Result<Self> {
        let dims = (0..=k_max)
            .map(|k| dim_harmonic(d, k).map(|z| z as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d,
            k_max,
            dims,
            rec: Recurrence::new(d, k_max)?,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `Z(d,k)` for `k = 0..=k_max`, as floats.
    pub fn dims(&self) -> &[f64] {
        &self.dims
    }

    pub fn recurrence(&self) -> &Recurrence {
        &self.rec
    }

    /// Gegenbauer order `(d-1)/2`.
    pub fn order(&self) -> f64 {
        (self.d as f64 - 1.0) / 2.0
    }
}

/// Dimension `Z(d,k)` of the space of spherical harmonics of degree `k` on `S^d`.
pub fn dim_harmonic(d: usize, k: usize) -> Result<u64> {
    if d < 2 {
        return Err(invalid(format!("sphere dimension must be >= 2, got {d}")));
    }
    if k == 0 {
        return Ok(1);
    }
    // Z(d,k) = (2k+d-1) (k+d-2)! / (k! (d-1)!) = binom(k+d-2, k) (2k+d-1) / (d-1)
    let mut binom: u128 = 1;
    for i in 1..=(d as u128 - 2) {
        binom = binom * (k as u128 + i) / i;
    }
    let numer = binom * (2 * k as u128 + d as u128 - 1);
    let z = numer / (d as u128 - 1);
    u64::try_from(z).map_err(|_| invalid(format!("Z({d},{k}) overflows u64")))
}

/// Validates an inner product and clamps floating-point overshoot back into `[-1, 1]`.
pub fn clamp_inner(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + CLAMP_SLACK {
        return Err(invalid(format!("argument {t} outside [-1, 1]")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// `P_k^{d+1}(t)`: the Gegenbauer polynomial of order `(d-1)/2` scaled so that `P_k(1) = 1`.
pub fn gegenbauer(d: usize, k: usize, t: f64) -> Result<f64> {
    Ok(*gegenbauer_batch(d, k, t)?
        .last()
        .expect("batch is never empty"))
}

/// `[P_0(t), …, P_K(t)]` from a single recurrence pass.
pub fn gegenbauer_batch(d: usize, k_max: usize, t: f64) -> Result<Vec<f64>> {
    let rec = Recurrence::new(d, k_max)?;
    let t = clamp_inner(t)?;
    let mut out = vec![0.0; k_max + 1];
    rec.fill(t, &mut out);
    Ok(out)
}

/// Precomputed coefficients of the normalized three-term recurrence
///
/// ```text
/// P_{k+1}(t) = (2(k+λ) t P_k(t) - k P_{k-1}(t)) / (k + 2λ),   λ = (d-1)/2,
/// ```
///
/// which is the ultraspherical recurrence divided through by `C_k^λ(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recurrence {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Recurrence {
    pub fn new(d: usize, k_max: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("sphere dimension must be >= 2, got {d}")));
        }
        let lambda = (d as f64 - 1.0) / 2.0;
        let (a, b) = (0..k_max.max(1))
            .map(|k| {
                let kf = k as f64;
                (
                    2.0 * (kf + lambda) / (kf + 2.0 * lambda),
                    kf / (kf + 2.0 * lambda),
                )
            })
            .unzip();
        Ok(Self { a, b })
    }

    /// Writes `P_0(t), …, P_{out.len()-1}(t)` for an already clamped `t`.
    pub fn fill(&self, t: f64, out: &mut [f64]) {
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = cur;
            if k < self.a.len() {
                let next = self.a[k] * t * cur - self.b[k] * prev;
                prev = cur;
                cur = next;
            }
        }
    }

    /// `Σ_k weights[k] · P_k(t)` for an already clamped `t`, summed in ascending degree.
    #[inline]
    pub fn series(&self, weights: &[f64], t: f64) -> f64 {
        debug_assert!(weights.len() <= self.a.len() + 1);
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut acc = 0.0;
        let last = weights.len().saturating_sub(1);
        for (k, &w) in weights.iter().enumerate() {
            acc += w * cur;
            if k < last {
                let next = self.a[k] * t * cur - self.b[k] * prev;
                prev = cur;
                cur = next;
            }
        }
        acc
    }

    /// Two series over the same `t` sharing one recurrence pass.
    #[inline]
    pub fn series_pair(&self, wa: &[f64], wb: &[f64], t: f64) -> (f64, f64) {
        debug_assert_eq!(wa.len(), wb.len());
        let (mut prev, mut cur) = (0.0, 1.0);
        let (mut acc_a, mut acc_b) = (0.0, 0.0);
        let last = wa.len().saturating_sub(1);
        for k in 0..wa.len() {
            acc_a += wa[k] * cur;
            acc_b += wb[k] * cur;
            if k < last {
                let next = self.a[k] * t * cur - self.b[k] * prev;
                prev = cur;
                cur = next;
            }
        }
        (acc_a, acc_b)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
///
/// Newton iteration on the Legendre recurrence from the Tricomi initial guesses;
/// exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
