//! Error metrics between a surrogate field and a reference field.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::microstructure::upsample_bilinear;
use crate::solver::{homogenize, SolutionField};

/// Below this reference mean magnitude the homogenized error is reported as
/// an absolute difference.
pub const HOMOGENIZED_GUARD: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    pub component: String,
    /// Root mean squared pointwise difference.
    pub err_mse: f64,
    pub err_max: f64,
    pub homogenized_rel: f64,
    /// Set when `homogenized_rel` holds an absolute difference.
    pub homogenized_absolute: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub components: Vec<ComponentError>,
}

impl ErrorReport {
    pub fn get(&self, name: &str) -> Option<&ComponentError> {
        self.components.iter().find(|c| c.component == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["component", "err_mse", "err_max", "homogenized_rel", "homogenized_absolute"])?;
        for c in &self.components {
            w.write_record([
                c.component.clone(),
                c.err_mse.to_string(),
                c.err_max.to_string(),
                c.homogenized_rel.to_string(),
                c.homogenized_absolute.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>12} {:>12} {:>14}", "component", "err_mse", "err_max", "homogenized")?;
        for c in &self.components {
            let tag = if c.homogenized_absolute { " (abs)" } else { "" };
            writeln!(
                f,
                "{:<10} {:>12.4e} {:>12.4e} {:>14.4e}{tag}",
                c.component, c.err_mse, c.err_max, c.homogenized_rel
            )?;
        }
        Ok(())
    }
}

fn component_error(name: &str, a: &[f64], b: &[f64]) -> ComponentError {
    let n = a.len() as f64;
    let mut sq = 0.0;
    let mut max: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        sq += d * d;
        max = max.max(d);
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (homogenized_rel, homogenized_absolute) = if mb.abs() < HOMOGENIZED_GUARD {
        ((ma - mb).abs(), true)
    } else {
        ((ma - mb).abs() / mb.abs(), false)
    };
    ComponentError { component: name.to_string(), err_mse: (sq / n).sqrt(), err_max: max, homogenized_rel, homogenized_absolute }
}

/// Per-component errors of `a` against reference `b` (displacements, then stresses).
pub fn compare_fields(a: &SolutionField, b: &SolutionField) -> Result<ErrorReport> {
    if a.dim != b.dim || a.u.len() != b.u.len() || a.stress.len() != b.stress.len() {
        return Err(Error::MeshMismatch(format!(
            "fields have {} and {} nodes",
            a.n_nodes(),
            b.n_nodes()
        )));
    }
    let names = a.component_names();
    Ok(ErrorReport {
        components: (0..a.n_components())
            .map(|c| component_error(names[c], &a.component(c), &b.component(c)))
            .collect(),
    })
}

/// [`compare_fields`] after bilinear upsampling of both fields to a
/// `target_n × target_n` grid.
pub fn compare_on_grid(a: &SolutionField, b: &SolutionField, target_n: usize) -> Result<ErrorReport> {
    compare_fields(&upsample_bilinear(a, target_n)?, &upsample_bilinear(b, target_n)?)
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Relative error of each homogenized stress component.
pub fn homogenized_stress_error(a: &SolutionField, b: &SolutionField) -> Vec<f64> {
    let ns = a.n_stress();
    let ma = homogenize(&a.stress, ns);
    let mb = homogenize(&b.stress, ns);
    ma.iter().zip(&mb).map(|(x, y)| (x - y).abs() / y.abs()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// Nodal values of one component along the grid line nearest `coordinate`.
/// `Axis::X` walks along x at fixed y.
pub fn extract_cross_section(
    mesh: &Mesh,
    field: &SolutionField,
    axis: Axis,
    coordinate: f64,
    component: usize,
) -> Result<Vec<(f64, f64)>> {
    let grid = mesh.grid().ok_or(Error::UnstructuredMesh)?;
    if field.n_nodes() != mesh.n_nodes() {
        return Err(Error::MeshMismatch("field does not live on this mesh".into()));
    }
    if component >= field.n_components() {
        return Err(Error::InvalidArgument(format!("component {component} out of range")));
    }
    let h = grid.spacing();
    if !(coordinate >= -0.5 * h && coordinate <= grid.side + 0.5 * h) {
        return Err(Error::InvalidArgument(format!("coordinate {coordinate} outside the domain")));
    }
    let n = grid.n;
    let line = ((coordinate / h).round() as usize).min(n - 1);
    let values = field.component(component);
    Ok((0..n)
        .map(|k| {
            let node = match axis {
                Axis::X => line * n + k,
                Axis::Y => k * n + line,
            };
            let pos = mesh.node(node)[match axis {
                Axis::X => 0,
                Axis::Y => 1,
            }];
            (pos, values[node])
        })
        .collect())
}
