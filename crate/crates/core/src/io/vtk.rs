use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::mesh::{ElementKind, Mesh};
use crate::solver::SolutionField;

/// One POINT_DATA array.
#[derive(Clone, Debug, PartialEq)]
pub enum PointData {
    Scalar(String, Vec<f64>),
    /// Interleaved components; 2D vectors are padded with a zero z.
    Vector(String, Vec<f64>),
}

/// `displacement`, optional `E`, and one scalar per stress component.
pub fn solution_point_data(sol: &SolutionField, e: Option<&[f64]>) -> Vec<PointData> {
    let mut data = vec![PointData::Vector("displacement".into(), sol.u.clone())];
    if let Some(e) = e {
        data.push(PointData::Scalar("E".into(), e.to_vec()));
    }
    let names = sol.component_names();
    for c in 0..sol.n_stress() {
        data.push(PointData::Scalar(names[sol.dim + c].into(), sol.stress_component(c)));
    }
    data
}

/// Legacy ASCII VTK: STRUCTURED_GRID for grids, UNSTRUCTURED_GRID otherwise.
pub fn write_vtk<W: Write>(mut out: W, mesh: &Mesh, title: &str, data: &[PointData]) -> Result<()> {
    let mut s = String::new();
    let dim = mesh.dim();
    let n = mesh.n_nodes();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII", title.replace('\n', " "));
    let point = |s: &mut String, i: usize| {
        let p = mesh.node(i);
        let z = if dim == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{} {} {}", p[0], p[1], z);
    };
    match (mesh.grid(), mesh.kind()) {
        (Some(g), ElementKind::Quad4) => {
            let _ = writeln!(s, "DATASET STRUCTURED_GRID\nDIMENSIONS {} {} 1\nPOINTS {n} double", g.n, g.n);
            (0..n).for_each(|i| point(&mut s, i));
        }
        _ => {
            let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID\nPOINTS {n} double");
            (0..n).for_each(|i| point(&mut s, i));
            let ne = mesh.n_elements();
            let _ = writeln!(s, "CELLS {ne} {}", ne * 5);
            for el in mesh.elements() {
                let _ = writeln!(s, "4 {} {} {} {}", el[0], el[1], el[2], el[3]);
            }
            let cell_type = match mesh.kind() {
                ElementKind::Quad4 => 9,
                ElementKind::Tet4 => 10,
            };
            let _ = writeln!(s, "CELL_TYPES {ne}");
            for _ in 0..ne {
                let _ = writeln!(s, "{cell_type}");
            }
        }
    }
    if !data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {n}");
    }
    for d in data {
        match d {
            PointData::Scalar(name, v) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{x}");
                }
            }
            PointData::Vector(name, v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for c in v.chunks_exact(dim) {
                    let z = if dim == 3 { c[2] } else { 0.0 };
                    let _ = writeln!(s, "{} {} {}", c[0], c[1], z);
                }
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}
