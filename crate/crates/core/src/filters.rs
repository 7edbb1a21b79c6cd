//! Spectral filter functions `g_λ(σ)` with their qualification and constants.
//!
//! | filter            | `g_λ(σ)`                          | `ν_g` | `b` |
//! |-------------------|-----------------------------------|-------|-----|
//! | Tikhonov          | `1/(σ+λ)`                         | 1     | 1   |
//! | iterated Tikhonov | `((σ+λ)^v − λ^v) / (σ(σ+λ)^v)`    | v     | v   |
//! | spectral cut-off  | `1/σ` if `σ ≥ λ`, else `0`        | ∞     | 1   |
//! | Landweber         | `(1 − (1−τσ)^t) / σ`, `λ = 1/(τt)` | ∞     | 1   |

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Sentinel used for an infinite qualification.
pub const INFINITE_QUALIFICATION: f64 = 1e6;

/// Below `SMALL_SIGMA · λ` the analytic `σ → 0` limit is used.
const SMALL_SIGMA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    Tikhonov {
        lambda: f64,
    },
    IteratedTikhonov {
        v: u32,
        lambda: f64,
    },
    CutOff {
        lambda: f64,
    },
    /// Step size `tau` and iteration count `t`; the effective parameter is `1/(τt)`.
    Landweber {
        tau: f64,
        t: u64,
    },
}

impl FilterSpec {
    pub fn tikhonov(lambda: f64) -> Result<Self> {
        Self::Tikhonov { lambda }.validated()
    }

    pub fn iterated_tikhonov(v: u32, lambda: f64) -> Result<Self> {
        Self::IteratedTikhonov { v, lambda }.validated()
    }

    pub fn cut_off(lambda: f64) -> Result<Self> {
        Self::CutOff { lambda }.validated()
    }

    pub fn landweber(tau: f64, t: u64) -> Result<Self> {
        Self::Landweber { tau, t }.validated()
    }

    fn validated(self) -> Result<Self> {
        match self {
            Self::Tikhonov { lambda }
            | Self::CutOff { lambda }
            | Self::IteratedTikhonov { lambda, .. }
                if !(lambda.is_finite() && lambda > 0.0) =>
            {
                Err(invalid(format!("lambda must be positive, got {lambda}")))
            }
            Self::IteratedTikhonov { v: 0, .. } => Err(invalid("iterated Tikhonov needs v >= 1")),
            Self::Landweber { tau, .. } if !(tau.is_finite() && tau > 0.0) => Err(invalid(
                format!("Landweber step must be positive, got {tau}"),
            )),
            Self::Landweber { t, .. } if t == 0 || t > i32::MAX as u64 => Err(invalid(format!(
                "Landweber iteration count {t} outside [1, 2^31)"
            ))),
            ok => Ok(ok),
        }
    }

    /// The regularization parameter; `1/(τt)` for Landweber.
    pub fn lambda(&self) -> f64 {
        match *self {
            Self::Tikhonov { lambda }
            | Self::IteratedTikhonov { lambda, .. }
            | Self::CutOff { lambda } => lambda,
            Self::Landweber { tau, t } => 1.0 / (tau * t as f64),
        }
    }

    /// Same variant at parameter `lambda`; Landweber keeps `τ` and sets `t = max(1, round(1/(τλ)))`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        match *self {
            Self::Tikhonov { .. } => Self::tikhonov(lambda),
            Self::IteratedTikhonov { v, .. } => Self::iterated_tikhonov(v, lambda),
            Self::CutOff { .. } => Self::cut_off(lambda),
            Self::Landweber { tau, .. } => {
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(invalid(format!("lambda must be positive, got {lambda}")));
                }
                let t = (1.0 / (tau * lambda)).round().max(1.0);
                if t > i32::MAX as f64 {
                    return Err(invalid(format!(
                        "lambda {lambda} needs more than 2^31 Landweber steps"
                    )));
                }
                Self::landweber(tau, t as u64)
            }
        }
    }

    /// `ν_g`; [`INFINITE_QUALIFICATION`] for cut-off and Landweber.
    pub fn qualification(&self) -> f64 {
        match *self {
            Self::Tikhonov { .. } => 1.0,
            Self::IteratedTikhonov { v, .. } => v as f64,
            Self::CutOff { .. } | Self::Landweber { .. } => INFINITE_QUALIFICATION,
        }
    }

    /// The constant `b` with `σ g_λ(σ) ≤ b` and `g_λ(σ) ≤ b/λ`.
    pub fn b(&self) -> f64 {
        match *self {
            Self::IteratedTikhonov { v, .. } => v as f64,
            _ => 1.0,
        }
    }

    /// The constant `C̃₀(v)` with `|1 − σ g_λ(σ)| σ^v ≤ C̃₀ λ^v` for `0 ≤ v ≤ ν_g`.
    pub fn residual_constant(&self, v: f64) -> f64 {
        match *self {
            Self::Landweber { .. } => {
                let shape = if v == 0.0 {
                    1.0
                } else {
                    (v / std::f64::consts::E).powf(v)
                };
                shape * std::f64::consts::E
            }
            _ => 1.0,
        }
    }

    /// The canonical family string, without `λ` except for Landweber's own parameters.
    pub fn family_name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Tikhonov { .. } => write!(f, "tikhonov"),
            Self::IteratedTikhonov { v, .. } => write!(f, "itik:{v}"),
            Self::CutOff { .. } => write!(f, "cutoff"),
            Self::Landweber { tau, t } => write!(f, "landweber:{tau}:{t}"),
        }
    }
}

/// A filter family as written in configs: `tikhonov`, `itik:v`, `cutoff`, or `landweber:tau:t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterFamily {
    Tikhonov,
    IteratedTikhonov(u32),
    CutOff,
    Landweber { tau: f64, t: u64 },
}

impl FilterFamily {
    /// Instantiates the family; `lambda` is ignored by Landweber, whose parameter is `1/(τt)`.
    pub fn at(&self, lambda: f64) -> Result<FilterSpec> {
        match *self {
            Self::Tikhonov => FilterSpec::tikhonov(lambda),
            Self::IteratedTikhonov(v) => FilterSpec::iterated_tikhonov(v, lambda),
            Self::CutOff => FilterSpec::cut_off(lambda),
            Self::Landweber { tau, t } => FilterSpec::landweber(tau, t),
        }
    }
}

impl FromStr for FilterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = |what: &str| Error::Parse(format!("filter '{s}': {what}"));
        match parts.as_slice() {
            ["tikhonov"] => Ok(Self::Tikhonov),
            ["cutoff"] => Ok(Self::CutOff),
            ["itik", v] => {
                let v: u32 = v.parse().map_err(|_| bad("v must be a positive integer"))?;
                if v == 0 {
                    return Err(bad("v must be >= 1"));
                }
                Ok(Self::IteratedTikhonov(v))
            }
            ["landweber", tau, t] => {
                let tau: f64 = tau.parse().map_err(|_| bad("tau must be a number"))?;
                let t: u64 = t.parse().map_err(|_| bad("t must be a positive integer"))?;
                FilterSpec::landweber(tau, t).map_err(|e| bad(&e.to_string()))?;
                Ok(Self::Landweber { tau, t })
            }
            _ => Err(bad("expected tikhonov, itik:v, cutoff or landweber:tau:t")),
        }
    }
}

impl FilterSpec {
    /// Parses a family string and instantiates it at `lambda`.
    pub fn parse(s: &str, lambda: f64) -> Result<Self> {
        s.parse::<FilterFamily>()?.at(lambda)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok(())
}

/// `g_λ(σ)` for `σ ≥ 0`.
pub fn apply_filter(sigma: f64, spec: &FilterSpec) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(filter_value(sigma, spec))
}

/// `g_λ(σ)` without argument validation.
pub(crate) fn filter_value(sigma: f64, spec: &FilterSpec) -> f64 {
    let lambda = spec.lambda();
    match *spec {
        FilterSpec::Tikhonov { lambda } => 1.0 / (sigma + lambda),
        FilterSpec::IteratedTikhonov { v, lambda } => {
            if sigma < SMALL_SIGMA * lambda {
                v as f64 / lambda
            } else {
                // 1 - (λ/(σ+λ))^v, without cancellation for small σ/λ.
                -(-(v as f64) * (sigma / lambda).ln_1p()).exp_m1() / sigma
            }
        }
        FilterSpec::CutOff { lambda } => {
            if sigma >= lambda {
                1.0 / sigma
            } else {
                0.0
            }
        }
        FilterSpec::Landweber { tau, t } => {
            if sigma < SMALL_SIGMA * lambda {
                tau * t as f64
            } else if tau * sigma <= 1.0 {
                let one_minus = -(t as f64 * (-tau * sigma).ln_1p()).exp_m1() / sigma;
                one_minus.min(tau * t as f64)
            } else {
                (1.0 - landweber_residual(tau, t, sigma)) / sigma
            }
        }
    }
}

/// `(1 − τσ)^t`, accurate when `τσ` is tiny.
fn landweber_residual(tau: f64, t: u64, sigma: f64) -> f64 {
    let base = 1.0 - tau * sigma;
    if base >= 0.0 {
        (t as f64 * (-tau * sigma).ln_1p()).exp()
    } else {
        base.powi(t as i32)
    }
}

/// `1 − σ g_λ(σ)`.
pub fn residual_factor(sigma: f64, spec: &FilterSpec) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(match *spec {
        FilterSpec::Tikhonov { lambda } => lambda / (sigma + lambda),
        FilterSpec::IteratedTikhonov { v, lambda } => (lambda / (sigma + lambda)).powi(v as i32),
        FilterSpec::CutOff { lambda } => {
            if sigma >= lambda {
                0.0
            } else {
                1.0
            }
        }
        FilterSpec::Landweber { tau, t } => landweber_residual(tau, t, sigma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        assert_eq!(
            apply_filter(1.0, &FilterSpec::tikhonov(1.0).unwrap()).unwrap(),
            0.5
        );
        assert_eq!(
            apply_filter(0.5, &FilterSpec::cut_off(1.0).unwrap()).unwrap(),
            0.0
        );
        assert_eq!(
            apply_filter(2.0, &FilterSpec::cut_off(1.0).unwrap()).unwrap(),
            0.5
        );
        let lw = FilterSpec::landweber(1.0, 1).unwrap();
        assert!((apply_filter(0.25, &lw).unwrap() - 1.0).abs() < 1e-15);
        assert!(apply_filter(-1e-3, &lw).is_err());
    }

    #[test]
    fn iterated_tikhonov_with_one_step_is_tikhonov() {
        for &lambda in &[1e-6, 1e-3, 0.1, 1.0] {
            let it = FilterSpec::iterated_tikhonov(1, lambda).unwrap();
            let tk = FilterSpec::tikhonov(lambda).unwrap();
            for &sigma in &[0.0, 1e-20, 1e-8, 1e-3, 0.5, 2.0] {
                let a = apply_filter(sigma, &it).unwrap();
                let b = apply_filter(sigma, &tk).unwrap();
                assert!((a - b).abs() <= 1e-14 * b, "{lambda} {sigma}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn iterated_tikhonov_closed_form() {
        let spec = FilterSpec::iterated_tikhonov(3, 0.2).unwrap();
        for &sigma in &[1e-6, 0.01, 0.3, 1.0] {
            let direct =
                ((sigma + 0.2f64).powi(3) - 0.2f64.powi(3)) / (sigma * (sigma + 0.2f64).powi(3));
            assert!((apply_filter(sigma, &spec).unwrap() - direct).abs() < 1e-9 * direct);
            let r = residual_factor(sigma, &spec).unwrap();
            assert!((r - (0.2 / (sigma + 0.2)).powi(3)).abs() < 1e-15);
            assert!((1.0 - sigma * apply_filter(sigma, &spec).unwrap() - r).abs() < 1e-14);
        }
        assert_eq!(apply_filter(0.0, &spec).unwrap(), 3.0 / 0.2);
    }

    #[test]
    fn landweber_limits_and_sum() {
        let spec = FilterSpec::landweber(0.5, 7).unwrap();
        assert_eq!(apply_filter(0.0, &spec).unwrap(), 3.5);
        let sigma: f64 = 0.3;
        let direct: f64 = (0..7).map(|i| 0.5 * (1.0f64 - 0.5 * sigma).powi(i)).sum();
        assert!((apply_filter(sigma, &spec).unwrap() - direct).abs() < 1e-14);
        assert!((spec.lambda() - 1.0 / 3.5).abs() < 1e-15);
        assert_eq!(
            spec.with_lambda(0.01).unwrap(),
            FilterSpec::Landweber { tau: 0.5, t: 200 }
        );
        assert_eq!(
            spec.with_lambda(100.0).unwrap(),
            FilterSpec::Landweber { tau: 0.5, t: 1 }
        );
    }

    #[test]
    fn qualification_and_constants() {
        assert_eq!(FilterSpec::tikhonov(0.1).unwrap().qualification(), 1.0);
        assert_eq!(
            FilterSpec::iterated_tikhonov(3, 0.1)
                .unwrap()
                .qualification(),
            3.0
        );
        assert_eq!(
            FilterSpec::landweber(1.0, 3).unwrap().qualification(),
            INFINITE_QUALIFICATION
        );
        assert_eq!(
            FilterSpec::cut_off(0.1).unwrap().qualification(),
            INFINITE_QUALIFICATION
        );
        assert_eq!(FilterSpec::iterated_tikhonov(4, 0.1).unwrap().b(), 4.0);
    }

    #[test]
    fn residual_examples() {
        let tk = FilterSpec::tikhonov(0.4).unwrap();
        assert!((residual_factor(0.6, &tk).unwrap() - 0.4).abs() < 1e-15);
        let co = FilterSpec::cut_off(0.4).unwrap();
        assert_eq!(residual_factor(0.6, &co).unwrap(), 0.0);
        assert_eq!(residual_factor(0.1, &co).unwrap(), 1.0);
    }

    #[test]
    fn parsing() {
        assert_eq!(
            FilterSpec::parse("tikhonov", 0.1).unwrap(),
            FilterSpec::Tikhonov { lambda: 0.1 }
        );
        assert_eq!(
            FilterSpec::parse("itik:3", 0.1).unwrap(),
            FilterSpec::IteratedTikhonov { v: 3, lambda: 0.1 }
        );
        assert_eq!(
            FilterSpec::parse("cutoff", 0.1).unwrap(),
            FilterSpec::CutOff { lambda: 0.1 }
        );
        assert_eq!(
            FilterSpec::parse("landweber:0.25:40", 0.1).unwrap(),
            FilterSpec::Landweber { tau: 0.25, t: 40 }
        );
        for bad in [
            "",
            "itik",
            "itik:0",
            "itik:x",
            "landweber:1",
            "landweber:-1:3",
            "landweber:1:0",
            "ridge",
        ] {
            assert!(
                matches!(FilterSpec::parse(bad, 0.1), Err(Error::Parse(_))),
                "{bad}"
            );
        }
        assert!(FilterSpec::parse("tikhonov", 0.0).is_err());
        for s in ["tikhonov", "itik:5", "cutoff", "landweber:0.5:12"] {
            assert_eq!(FilterSpec::parse(s, 0.3).unwrap().to_string(), s);
        }
    }
}
