//! CSV tables with JSON sidecars for points, quadrature rules and fits.
//!
//! Numbers are written as `{:.16e}`, which round-trips every `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{FitInfo, Fitted};
use crate::geometry::{PointSet, Vec3};
use crate::kernel::KernelSpec;
use crate::quadrature::{QuadratureRule, RuleSidecar};

/// Rows whose norm is within this of one are rescaled on load.
pub const LOAD_UNIT_TOL: f64 = 1e-6;

/// `rule.csv` → `rule.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != columns {
        return Err(Error::Parse(format!(
            "{}: expected header {}, found {}",
            path.display(),
            columns.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "{} row {}: bad number '{f}'",
                        path.display(),
                        line + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::Parse(format!(
                "{} row {}: expected {} fields",
                path.display(),
                line + 1,
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn write_table(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn points_of(rows: &[Vec<f64>], label: &str) -> Result<PointSet> {
    let pts: Vec<Vec3> = rows.iter().map(|r| [r[0], r[1], r[2]]).collect();
    PointSet::normalized(pts, label, LOAD_UNIT_TOL)
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "points".into(), |s| s.to_string_lossy().into_owned())
}

/// Loads an `x,y,z` table.
pub fn read_points(path: &Path) -> Result<PointSet> {
    points_of(&read_table(path, &["x", "y", "z"])?, &label_of(path))
}

pub fn write_points(path: &Path, ps: &PointSet) -> Result<()> {
    write_table(path, "x,y,z", ps.points().iter().map(|p| p.to_vec()))
}

/// Writes the `x,y,z,w` table and its sidecar.
pub fn write_rule(path: &Path, rule: &QuadratureRule, c_star: f64) -> Result<()> {
    write_table(
        path,
        "x,y,z,w",
        rule.points()
            .points()
            .iter()
            .zip(rule.weights())
            .map(|(p, w)| vec![p[0], p[1], p[2], *w]),
    )?;
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&RuleSidecar::for_rule(rule, c_star))?,
    )?;
    Ok(())
}

/// Loads a rule and re-certifies it at the sidecar's degree within `tol`.
pub fn read_rule(path: &Path, tol: f64) -> Result<QuadratureRule> {
    let rows = read_table(path, &["x", "y", "z", "w"])?;
    let sidecar: RuleSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let points = points_of(&rows, &label_of(path))?;
    QuadratureRule::new(
        points,
        rows.iter().map(|r| r[3]).collect(),
        sidecar.degree,
        tol,
    )
}

/// Sidecar of a fitted expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedSidecar {
    pub d: usize,
    pub gamma: f64,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    pub filter: String,
    pub lambda: Option<f64>,
}

pub fn write_fitted(path: &Path, f: &Fitted) -> Result<()> {
    write_table(
        path,
        "x,y,z,a",
        f.centers()
            .points()
            .iter()
            .zip(f.coeffs())
            .map(|(p, a)| vec![p[0], p[1], p[2], *a]),
    )?;
    let k = f.kernel();
    let sidecar = FittedSidecar {
        d: k.d(),
        gamma: k.gamma(),
        k_max: k.k_max(),
        filter: f.info().method.clone(),
        lambda: f.info().lambda,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_fitted(path: &Path) -> Result<Fitted> {
    let rows = read_table(path, &["x", "y", "z", "a"])?;
    let sidecar: FittedSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let kernel = KernelSpec::new(sidecar.d, sidecar.gamma, 1.0, sidecar.k_max)?;
    let info = FitInfo {
        method: sidecar.filter,
        lambda: sidecar.lambda,
        weights: None,
    };
    Fitted::new(
        points_of(&rows, &label_of(path))?,
        rows.iter().map(|r| r[3]).collect(),
        kernel,
        info,
    )
}

/// Loads a one-column table of values with the given header.
pub fn read_values(path: &Path, column: &str) -> Result<Vec<f64>> {
    Ok(read_table(path, &[column])?
        .into_iter()
        .map(|r| r[0])
        .collect())
}

/// Loads an `x,y,z,<column>` table as points plus values.
pub fn read_samples(path: &Path, column: &str) -> Result<(PointSet, Vec<f64>)> {
    let rows = read_table(path, &["x", "y", "z", column])?;
    if rows.is_empty() {
        return Err(invalid(format!("{} has no rows", path.display())));
    }
    Ok((
        points_of(&rows, &label_of(path))?,
        rows.iter().map(|r| r[3]).collect(),
    ))
}

pub fn write_samples(path: &Path, ps: &PointSet, column: &str, values: &[f64]) -> Result<()> {
    if values.len() != ps.len() {
        return Err(Error::LengthMismatch {
            expected: ps.len(),
            found: values.len(),
        });
    }
    write_table(
        path,
        &format!("x,y,z,{column}"),
        ps.points()
            .iter()
            .zip(values)
            .map(|(p, v)| vec![p[0], p[1], p[2], *v]),
    )
}
