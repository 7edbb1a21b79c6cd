//! Positive quadrature rules on `S²` that are exact on spherical polynomials
//! of degree `≤ s`.
//!
//! Exactness is measured by the discrepancy
//!
//! ```text
//! E(w) = (Σ w_i - 1)² + Σ_{k=1}^{s} Z(2,k) Σ_{i,j} w_i w_j P_k(x_i·x_j),
//! ```
//!
//! which is the squared `L²` norm of `r(z) = Σ_i w_i K_s(x_i·z) - 1` with the
//! reproducing kernel `K_s = Σ_{k≤s} Z(2,k) P_k` of the degree-`s` polynomials.
//! Since `r²` has degree `2s`, a product Gauss rule evaluates `E` exactly as a
//! sum of squares, free of the cancellation in the pairwise form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dot, PointSet, Vec3};
use crate::harmonics::{gauss_legendre, HarmonicContext};

/// Default target on `E(w)`.
pub const DEFAULT_TOL: f64 = 1e-20;

/// Default projected-gradient iteration budget.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Weights that must sum to one may deviate by at most this much.
pub const MASS_TOL: f64 = 1e-12;

/// Product Gauss rule on `S²` exact for polynomials of degree `≤ degree`:
/// Gauss–Legendre in `z` times equispaced longitudes. Weights sum to one.
pub fn product_rule(degree: usize) -> (Vec<Vec3>, Vec<f64>) {
    let (zs, wz) = gauss_legendre(degree / 2 + 1);
    let n_phi = degree + 1;
    let mut nodes = Vec::with_capacity(zs.len() * n_phi);
    let mut weights = Vec::with_capacity(zs.len() * n_phi);
    for (z, w) in zs.iter().zip(&wz) {
        let r = (1.0 - z * z).sqrt();
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            nodes.push([r * phi.cos(), r * phi.sin(), *z]);
            weights.push(0.5 * w / n_phi as f64);
        }
    }
    (nodes, weights)
}

/// Evaluation matrix `B_{mi} = K_s(z_m·x_i)` on a degree-`2s` product rule, with its node weights.
struct ResidualOperator {
    b: DMatrix<f64>,
    v: DVector<f64>,
}

impl ResidualOperator {
    fn new(points: &[Vec3], s: usize) -> Self {
        let ctx = HarmonicContext::new(2, s).expect("d = 2");
        let (nodes, node_weights) = product_rule(2 * s);
        let rec = ctx.recurrence();
        let b = DMatrix::from_fn(nodes.len(), points.len(), |m, i| {
            rec.series(ctx.dims(), dot(&nodes[m], &points[i]).clamp(-1.0, 1.0))
        });
        Self {
            b,
            v: DVector::from_vec(node_weights),
        }
    }

    /// Residual `r = Bw - 1` at the nodes.
    fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.b * w;
        r.add_scalar_mut(-1.0);
        r
    }

    fn energy(&self, r: &DVector<f64>) -> f64 {
        r.iter()
            .zip(self.v.iter())
            .map(|(ri, vi)| vi * ri * ri)
            .sum()
    }

    /// `∇E = 2 Bᵀ V r`.
    fn gradient(&self, r: &DVector<f64>) -> DVector<f64> {
        let vr = r.component_mul(&self.v);
        self.b.tr_mul(&vr) * 2.0
    }

    /// Largest eigenvalue of the Hessian `2 BᵀVB` by power iteration.
    fn lipschitz(&self) -> f64 {
        let n = self.b.ncols();
        let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut estimate = 0.0;
        for _ in 0..200 {
            let bx = (&self.b * &x).component_mul(&self.v);
            let y = self.b.tr_mul(&bx) * 2.0;
            let norm = y.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = x.dot(&y);
            x = y / norm;
            if (next - estimate).abs() <= 1e-10 * next {
                estimate = next;
                break;
            }
            estimate = next;
        }
        // Power iteration approaches from below; pad so the step stays stable.
        1.01 * estimate
    }
}

/// The discrepancy `E(w)` of weights `w` at degree `s` (see the module docs).
pub fn design_discrepancy(ps: &PointSet, w: &[f64], s: usize) -> Result<f64> {
    if w.len() != ps.len() {
        return Err(Error::LengthMismatch {
            expected: ps.len(),
            found: w.len(),
        });
    }
    let op = ResidualOperator::new(ps.points(), s);
    Ok(op.energy(&op.residual(&DVector::from_column_slice(w))))
}

/// Points, positive weights summing to one, and a certified degree of exactness.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: PointSet,
    weights: Vec<f64>,
    degree: usize,
    residual: f64,
}

impl QuadratureRule {
    /// Verifies positivity, unit mass, and `E(w) ≤ tol` at `degree`.
    pub fn new(points: PointSet, weights: Vec<f64>, degree: usize, tol: f64) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid(format!(
                "weight {i} is {} but must be positive",
                weights[i]
            )));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("weights sum to {mass}, not 1")));
        }
        let residual = design_discrepancy(&points, &weights, degree)?;
        if !(residual <= tol) {
            return Err(Error::InfeasibleDegree {
                degree,
                residual,
                tol,
            });
        }
        Ok(Self {
            points,
            weights,
            degree,
            residual,
        })
    }

    /// Equal weights `1/n`, certified at `degree`.
    pub fn equal_weights(points: PointSet, degree: usize, tol: f64) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(invalid("empty point set"));
        }
        Self::new(points, vec![1.0 / n as f64; n], degree, tol)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `max_i w_i · |Λ|`, the smallest `c_*` for which the rule is D-type.
    pub fn scaled_max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max) * self.len() as f64
    }

    /// Applies the rule to values at its points.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(self.weights.iter().zip(values).map(|(w, f)| w * f).sum())
    }
}

/// Tuning for [`compute_weights_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSolver {
    pub tol: f64,
    pub max_iter: usize,
    /// Give up once `E` has not dropped by this factor over `patience` iterations.
    pub stall_factor: f64,
    pub patience: usize,
}

impl Default for WeightSolver {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            stall_factor: 0.5,
            patience: 2_000,
        }
    }
}

/// Positive weights exact to degree `s`, by projected gradient descent on `E(w)`.
pub fn compute_weights(ps: &PointSet, s: usize, tol: f64) -> Result<QuadratureRule> {
    compute_weights_with(
        ps,
        s,
        &WeightSolver {
            tol,
            ..WeightSolver::default()
        },
    )
}

/// As [`compute_weights`] with explicit solver settings.
///
/// Accelerated projected gradient on the convex quadratic `E` over
/// `{w ≥ 1e-12/|Λ|}`, starting from equal weights, with step `1/L` where `L`
/// is the Hessian's largest eigenvalue. The momentum is reset whenever `E`
/// increases.
pub fn compute_weights_with(
    ps: &PointSet,
    s: usize,
    solver: &WeightSolver,
) -> Result<QuadratureRule> {
    let n = ps.len();
    if n == 0 {
        return Err(invalid("empty point set"));
    }
    if !(solver.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let op = ResidualOperator::new(ps.points(), s);
    let floor = 1e-12 / n as f64;
    let step = 1.0 / op.lipschitz();

    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut r = op.residual(&w);
    let mut energy = op.energy(&r);
    let mut prev = w.clone();
    let mut momentum = 1.0f64;
    let mut checkpoint = energy;
    let mut since_checkpoint = 0;

    for _ in 0..solver.max_iter {
        if energy <= solver.tol {
            break;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let y = &w + (&w - &prev) * beta;
        let ry = op.residual(&y);
        let candidate = (&y - op.gradient(&ry) * step).map(|v| v.max(floor));
        let rc = op.residual(&candidate);
        let ec = op.energy(&rc);
        prev = std::mem::replace(&mut w, candidate);
        if ec > energy {
            // Restart from a plain projected-gradient step.
            momentum = 1.0;
            w = (&prev - op.gradient(&r) * step).map(|v| v.max(floor));
            r = op.residual(&w);
            energy = op.energy(&r);
            prev = w.clone();
        } else {
            momentum = next_momentum;
            r = rc;
            energy = ec;
        }
        since_checkpoint += 1;
        if since_checkpoint >= solver.patience {
            if energy > solver.stall_factor * checkpoint {
                break;
            }
            checkpoint = energy;
            since_checkpoint = 0;
        }
    }

    let mass: f64 = w.iter().sum();
    let weights: Vec<f64> = w.iter().map(|v| v / mass).collect();
    let residual = op.energy(&op.residual(&DVector::from_column_slice(&weights)));
    if !(residual <= solver.tol) {
        return Err(Error::InfeasibleDegree {
            degree: s,
            residual,
            tol: solver.tol,
        });
    }
    Ok(QuadratureRule {
        points: ps.clone(),
        weights,
        degree: s,
        residual,
    })
}

/// True iff `0 < w_i ≤ c_star/|Λ|` for every weight.
pub fn is_dtype(rule: &QuadratureRule, c_star: f64) -> bool {
    let cap = c_star / rule.len() as f64;
    rule.weights.iter().all(|&w| w > 0.0 && w <= cap)
}

/// Largest `s'` with `E(w) ≤ tol` at degree `s'`, by linear scan from zero.
///
/// An `n`-point rule exact to degree `s'` needs `n ≥ (⌊s'/2⌋+1)²`, so the scan
/// stops at `2⌈√n⌉ + 1`.
pub fn max_exact_degree(rule: &QuadratureRule, tol: f64) -> usize {
    let cap = 2 * (rule.len() as f64).sqrt().ceil() as usize + 1;
    let mut best = 0;
    for s in 0..=cap {
        match design_discrepancy(&rule.points, &rule.weights, s) {
            Ok(e) if e <= tol => best = s,
            _ => break,
        }
    }
    best
}

/// JSON sidecar written next to a rule's `x,y,z,w` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSidecar {
    pub degree: usize,
    pub residual: f64,
    pub c_star_check: CStarCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CStarCheck {
    pub c_star: f64,
    pub scaled_max_weight: f64,
    pub is_dtype: bool,
}

impl RuleSidecar {
    pub fn for_rule(rule: &QuadratureRule, c_star: f64) -> Self {
        Self {
            degree: rule.degree,
            residual: rule.residual,
            c_star_check: CStarCheck {
                c_star,
                scaled_max_weight: rule.scaled_max_weight(),
                is_dtype: is_dtype(rule, c_star),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fibonacci_points;
    use crate::harmonics::gegenbauer;

    fn octahedron() -> PointSet {
        PointSet::new(
            vec![
                [1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, -1.0],
            ],
            "octahedron",
        )
        .unwrap()
    }

    fn tetrahedron() -> PointSet {
        let c = 1.0 / 3f64.sqrt();
        PointSet::new(
            vec![[c, c, c], [c, -c, -c], [-c, c, -c], [-c, -c, c]],
            "tetrahedron",
        )
        .unwrap()
    }

    /// Exact average of `x^a y^b z^c` over `S²`: zero unless all exponents are
    /// even, else `(a-1)!!(b-1)!!(c-1)!! / (a+b+c+1)!!`.
    fn monomial_mean(a: usize, b: usize, c: usize) -> f64 {
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        let dfact = |m: i64| -> f64 { (1..=m).rev().step_by(2).map(|v| v as f64).product() };
        dfact(a as i64 - 1) * dfact(b as i64 - 1) * dfact(c as i64 - 1)
            / dfact((a + b + c) as i64 + 1)
    }

    fn max_monomial_error(ps: &PointSet, w: &[f64], degree: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                for c in 0..=(degree - a - b) {
                    let q: f64 = ps
                        .points()
                        .iter()
                        .zip(w)
                        .map(|(p, wi)| {
                            wi * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        })
                        .sum();
                    worst = worst.max((q - monomial_mean(a, b, c)).abs());
                }
            }
        }
        worst
    }

    /// Pairwise addition-formula form of the discrepancy.
    fn discrepancy_oracle(ps: &PointSet, w: &[f64], s: usize) -> f64 {
        let mass: f64 = w.iter().sum();
        let mut e = (mass - 1.0).powi(2);
        for k in 1..=s {
            let mut acc = 0.0;
            for (xi, wi) in ps.points().iter().zip(w) {
                for (xj, wj) in ps.points().iter().zip(w) {
                    acc += wi * wj * gegenbauer(2, k, dot(xi, xj).clamp(-1.0, 1.0)).unwrap();
                }
            }
            e += (2 * k + 1) as f64 * acc;
        }
        e
    }

    #[test]
    fn product_rule_is_exact() {
        for degree in [0, 1, 4, 7, 12] {
            let (nodes, weights) = product_rule(degree);
            let ps = PointSet::new(nodes, "product").unwrap();
            assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(
                max_monomial_error(&ps, &weights, degree) < 1e-14,
                "degree {degree}"
            );
        }
    }

    #[test]
    fn discrepancy_examples() {
        let oct = octahedron();
        let w = vec![1.0 / 6.0; 6];
        assert!(design_discrepancy(&oct, &w, 3).unwrap() < 1e-14);
        assert!(max_monomial_error(&oct, &w, 3) < 1e-15);

        let one = PointSet::new(vec![[0.0, 0.6, 0.8]], "one").unwrap();
        assert!((design_discrepancy(&one, &[1.0], 1).unwrap() - 3.0).abs() < 1e-13);
        assert!(design_discrepancy(&one, &[1.0], 0).unwrap() < 1e-30);
        assert!(design_discrepancy(&one, &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn discrepancy_matches_pairwise_oracle() {
        let ps = fibonacci_points(40).unwrap();
        let w: Vec<f64> = (0..40)
            .map(|i| (1.0 + 0.3 * (i as f64).sin()) / 40.0)
            .collect();
        for s in [0, 1, 3, 6, 9] {
            let fast = design_discrepancy(&ps, &w, s).unwrap();
            let slow = discrepancy_oracle(&ps, &w, s);
            assert!(
                (fast - slow).abs() <= 1e-12 * slow.max(1e-3),
                "s={s}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn octahedron_weights_are_equal() {
        let rule = compute_weights(&octahedron(), 3, DEFAULT_TOL).unwrap();
        for w in rule.weights() {
            assert!((w - 1.0 / 6.0).abs() < 1e-10);
        }
        assert!(rule.residual() <= DEFAULT_TOL);
    }

    #[test]
    fn fibonacci_rule_is_dtype() {
        let rule = compute_weights(&fibonacci_points(400).unwrap(), 10, DEFAULT_TOL).unwrap();
        assert!(rule.residual() < 1e-20);
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(rule.weights().iter().all(|&w| w <= 5.0 / 400.0));
        assert!(is_dtype(&rule, 5.0));
        assert!(max_monomial_error(rule.points(), rule.weights(), 10) < 1e-9);
    }

    #[test]
    fn too_few_points_is_infeasible() {
        let err = compute_weights(&fibonacci_points(9).unwrap(), 10, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDegree { degree: 10, .. }));
        assert!(err.to_string().starts_with("InfeasibleDegree"));
    }

    #[test]
    fn dtype_examples() {
        let ps = fibonacci_points(10).unwrap();
        let equal = QuadratureRule::equal_weights(ps.clone(), 0, DEFAULT_TOL).unwrap();
        assert!(is_dtype(&equal, 1.0));
        let mut skewed = vec![0.1 / 9.0; 10];
        skewed[0] = 0.9;
        let rule = QuadratureRule::new(ps, skewed, 0, DEFAULT_TOL).unwrap();
        assert!(!is_dtype(&rule, 2.0));
    }

    #[test]
    fn exact_degree_scan() {
        let oct = QuadratureRule::equal_weights(octahedron(), 0, DEFAULT_TOL).unwrap();
        assert_eq!(max_exact_degree(&oct, 1e-20), 3);
        let tet = QuadratureRule::equal_weights(tetrahedron(), 0, DEFAULT_TOL).unwrap();
        assert_eq!(max_exact_degree(&tet, 1e-20), 2);
        assert!(max_monomial_error(tet.points(), tet.weights(), 2) < 1e-15);
        let one =
            QuadratureRule::equal_weights(fibonacci_points(1).unwrap(), 0, DEFAULT_TOL).unwrap();
        assert_eq!(max_exact_degree(&one, 1e-20), 0);
    }

    #[test]
    fn rule_validation() {
        let ps = fibonacci_points(4).unwrap();
        assert!(QuadratureRule::new(ps.clone(), vec![0.5, 0.5, 0.0, 0.0], 0, 1.0).is_err());
        assert!(QuadratureRule::new(ps.clone(), vec![0.3; 4], 0, 1.0).is_err());
        assert!(matches!(
            QuadratureRule::new(ps, vec![0.25; 4], 6, 1e-20),
            Err(Error::InfeasibleDegree { .. })
        ));
    }
}
