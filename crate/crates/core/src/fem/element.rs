use nalgebra::DMatrix;

use super::quadrature::QuadratureRule;
use super::DEGENERATE_DET;
use crate::error::{Error, Result};
use crate::mesh::{ElementKind, Mesh};

/// Shape function values at a parent point plus their parent-space gradients
/// (`grads[(i, a)] = ∂N_a/∂ξ_i`, one row per parent coordinate).
#[derive(Clone, Debug)]
pub struct ShapeEval {
    pub values: [f64; 4],
    pub grads: DMatrix<f64>,
}

/// Bilinear quad4 shape functions `N_a = ¼(1 ± ξ)(1 ± η)`, nodes counter-clockwise
/// from `(-1, -1)`.
pub fn shape_functions_quad4(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, &(sx, sy)) in SIGNS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
        dn[a] = [0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)];
    }
    (n, dn)
}

/// Linear tet4 shape functions on the reference tetrahedron.
pub fn shape_functions_tet4(p: [f64; 3]) -> ([f64; 4], [[f64; 3]; 4]) {
    let n = [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]];
    let dn = [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    (n, dn)
}

pub fn shape_functions(kind: ElementKind, p: [f64; 3]) -> ShapeEval {
    match kind {
        ElementKind::Quad4 => {
            let (values, dn) = shape_functions_quad4(p[0], p[1]);
            ShapeEval { values, grads: DMatrix::from_fn(2, 4, |i, a| dn[a][i]) }
        }
        ElementKind::Tet4 => {
            let (values, dn) = shape_functions_tet4(p);
            ShapeEval { values, grads: DMatrix::from_fn(3, 4, |i, a| dn[a][i]) }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Jacobian {
    /// `j[(i, k)] = ∂x_k/∂ξ_i`.
    pub j: DMatrix<f64>,
    pub det: f64,
    pub inv: DMatrix<f64>,
}

pub fn jacobian(mesh: &Mesh, element: usize, parent_grads: &DMatrix<f64>) -> Result<Jacobian> {
    let dim = mesh.dim();
    let nodes = mesh.element(element);
    let x = DMatrix::from_fn(4, dim, |a, k| mesh.node(nodes[a])[k]);
    let j = parent_grads * x;
    let det = j.determinant();
    if !(det > DEGENERATE_DET) {
        return Err(Error::DegenerateElement { element, det });
    }
    let inv = j
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateElement { element, det })?;
    Ok(Jacobian { j, det, inv })
}

/// Strain–displacement matrix. Voigt rows are `(ε_xx, ε_yy, γ_xy)` in 2D and
/// `(ε_xx, ε_yy, ε_zz, γ_yz, γ_xz, γ_xy)` in 3D; columns are interleaved per node.
pub fn b_matrix(inv_j: &DMatrix<f64>, parent_grads: &DMatrix<f64>) -> DMatrix<f64> {
    let dn = inv_j * parent_grads;
    let dim = dn.nrows();
    let n_nodes = dn.ncols();
    match dim {
        2 => {
            let mut b = DMatrix::zeros(3, 2 * n_nodes);
            for a in 0..n_nodes {
                let (dx, dy) = (dn[(0, a)], dn[(1, a)]);
                b[(0, 2 * a)] = dx;
                b[(1, 2 * a + 1)] = dy;
                b[(2, 2 * a)] = dy;
                b[(2, 2 * a + 1)] = dx;
            }
            b
        }
        3 => {
            let mut b = DMatrix::zeros(6, 3 * n_nodes);
            for a in 0..n_nodes {
                let (dx, dy, dz) = (dn[(0, a)], dn[(1, a)], dn[(2, a)]);
                let c = 3 * a;
                b[(0, c)] = dx;
                b[(1, c + 1)] = dy;
                b[(2, c + 2)] = dz;
                b[(3, c + 1)] = dz;
                b[(3, c + 2)] = dy;
                b[(4, c)] = dz;
                b[(4, c + 2)] = dx;
                b[(5, c)] = dy;
                b[(5, c + 1)] = dx;
            }
            b
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Plane-stress elasticity `E/(1−ν²)·[[1,ν,0],[ν,1,0],[0,0,(1−ν)/2]]`.
pub fn constitutive_plane_stress(e: f64, nu: f64) -> Result<DMatrix<f64>> {
    if !(e > 0.0 && e.is_finite() && nu.abs() < 1.0) {
        return Err(Error::InvalidMaterial { e, nu });
    }
    let f = e / (1.0 - nu * nu);
    Ok(DMatrix::from_row_slice(
        3,
        3,
        &[f, f * nu, 0.0, f * nu, f, 0.0, 0.0, 0.0, f * (1.0 - nu) / 2.0],
    ))
}

/// Smallest admissible `1 − 2ν` in 3D; closer to incompressibility is rejected.
const MIN_COMPRESSIBILITY: f64 = 1e-3;

/// Isotropic 3D elasticity from the Lamé constants.
pub fn constitutive_3d(e: f64, nu: f64) -> Result<DMatrix<f64>> {
    if !(e > 0.0 && e.is_finite() && nu > -1.0 && 1.0 - 2.0 * nu >= MIN_COMPRESSIBILITY) {
        return Err(Error::InvalidMaterial { e, nu });
    }
    let lambda = e * nu / ((1.0 - 2.0 * nu) * (1.0 + nu));
    let mu = e / (2.0 * (1.0 + nu));
    let mut c = DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] += 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    Ok(c)
}

pub fn constitutive(dim: usize, e: f64, nu: f64) -> Result<DMatrix<f64>> {
    match dim {
        2 => constitutive_plane_stress(e, nu),
        _ => constitutive_3d(e, nu),
    }
}

#[derive(Clone, Debug)]
pub struct ElementStiffness {
    pub element: usize,
    pub matrix: DMatrix<f64>,
}

/// `K_e = Σ_n w_n det J B^T C(E(ξ_n)) B` with E interpolated from the nodal values.
pub fn element_stiffness(
    mesh: &Mesh,
    element: usize,
    nodal_e: &[f64],
    nu: f64,
) -> Result<ElementStiffness> {
    if nodal_e.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: nodal_e.len() });
    }
    if let Some(&bad) = nodal_e.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidMaterial { e: bad, nu });
    }
    let matrix = integrate_stiffness(mesh, element, nodal_e, nu)?;
    Ok(ElementStiffness { element, matrix })
}

/// Quadrature of the element stiffness without positivity checks on `nodal_e`;
/// used with unit vectors to build the per-node basis matrices.
pub(crate) fn integrate_stiffness(
    mesh: &Mesh,
    element: usize,
    nodal_e: &[f64],
    nu: f64,
) -> Result<DMatrix<f64>> {
    let dim = mesh.dim();
    let m = 4 * dim;
    let rule = QuadratureRule::for_kind(mesh.kind());
    // Validate nu once with a unit modulus; C is linear in E.
    let c_unit = constitutive(dim, 1.0, nu)?;
    let mut k = DMatrix::zeros(m, m);
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let shape = shape_functions(mesh.kind(), *p);
        let jac = jacobian(mesh, element, &shape.grads)?;
        let b = b_matrix(&jac.inv, &shape.grads);
        let e_q: f64 = shape.values.iter().zip(nodal_e).map(|(n, e)| n * e).sum();
        let cb = &c_unit * &b;
        k += b.transpose() * cb * (w * jac.det * e_q);
    }
    Ok(k)
}
