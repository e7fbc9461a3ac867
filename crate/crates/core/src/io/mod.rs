//! File formats: legacy VTK export, CSV histories and JSON checkpoints.

mod checkpoint;
mod vtk;

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::deeponet::DeepOnetLoss;
use crate::error::Result;
use crate::fol::LossBreakdown;

pub use checkpoint::{checkpoint_kind, load_json, save_json, ModelKind, DeepOnetCheckpoint, FolCheckpoint, CHECKPOINT_VERSION};
pub use vtk::{solution_point_data, write_vtk, PointData};

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// `epoch,energy_term,dirichlet_term,total`, epochs counted from 1.
pub fn write_fol_history<W: Write>(out: W, history: &[LossBreakdown]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["epoch", "energy_term", "dirichlet_term", "total"])?;
    for (i, h) in history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), h.energy.to_string(), h.dirichlet.to_string(), h.total.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `epoch,total,loss_u,loss_v[,loss_w]`.
pub fn write_deeponet_history<W: Write>(out: W, history: &[DeepOnetLoss]) -> Result<()> {
    let mut w = csv_writer(out);
    let dim = history.first().map_or(2, |h| h.components.len());
    let mut header = vec!["epoch".to_string(), "total".to_string()];
    header.extend(["loss_u", "loss_v", "loss_w"].iter().take(dim).map(|s| s.to_string()));
    w.write_record(&header)?;
    for (i, h) in history.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), h.total.to_string()];
        row.extend(h.components.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Nodal table `node,x,y[,z],u,v[,w],sigma_*`.
pub fn write_solution_csv<W: Write>(out: W, mesh: &crate::mesh::Mesh, sol: &crate::solver::SolutionField) -> Result<()> {
    let mut w = csv_writer(out);
    let axes = ["x", "y", "z"];
    let mut header = vec!["node".to_string()];
    header.extend(axes[..mesh.dim()].iter().map(|s| s.to_string()));
    header.extend(sol.component_names().iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let comps: Vec<Vec<f64>> = (0..sol.n_components()).map(|c| sol.component(c)).collect();
    for i in 0..mesh.n_nodes() {
        let mut row = vec![i.to_string()];
        row.extend(mesh.node(i).iter().map(|x| x.to_string()));
        row.extend(comps.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
