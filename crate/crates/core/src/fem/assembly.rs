use nalgebra::DMatrix;

use super::element::{element_stiffness, integrate_stiffness};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Matrix-free global stiffness for a fixed mesh and Poisson ratio.
///
/// Each element keeps four basis matrices `K_e^(a)` (the stiffness obtained
/// with unit modulus at node `a` and zero elsewhere), so for any nodal field
/// `K_e(E) = Σ_a E_a K_e^(a)` without re-running quadrature.
#[derive(Clone, Debug)]
pub struct StiffnessOperator {
    dim: usize,
    n_nodes: usize,
    elements: Vec<[usize; 4]>,
    /// `basis[((e * 4 + a) * m + i) * m + j]`, `m = 4 * dim`.
    basis: Vec<f64>,
    nu: f64,
}

impl StiffnessOperator {
    pub fn new(mesh: &Mesh, nu: f64) -> Result<Self> {
        let dim = mesh.dim();
        let m = 4 * dim;
        let mut basis = Vec::with_capacity(mesh.n_elements() * 4 * m * m);
        for e in 0..mesh.n_elements() {
            for a in 0..4 {
                let mut unit = [0.0; 4];
                unit[a] = 1.0;
                let k = integrate_stiffness(mesh, e, &unit, nu)?;
                for i in 0..m {
                    for j in 0..m {
                        basis.push(k[(i, j)]);
                    }
                }
            }
        }
        Ok(StiffnessOperator {
            dim,
            n_nodes: mesh.n_nodes(),
            elements: mesh.elements().to_vec(),
            basis,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn check(&self, e_field: &[f64], u: &[f64]) -> Result<()> {
        if e_field.len() != self.n_nodes {
            return Err(Error::DimensionMismatch { expected: self.n_nodes, got: e_field.len() });
        }
        if u.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch { expected: self.n_dofs(), got: u.len() });
        }
        Ok(())
    }

    /// Dense element matrix for the nodal moduli `nodal_e` of element `e`.
    pub fn element_matrix(&self, e: usize, nodal_e: &[f64; 4]) -> Vec<f64> {
        let m = 4 * self.dim;
        let mut k = vec![0.0; m * m];
        for (a, &ea) in nodal_e.iter().enumerate() {
            let block = &self.basis[(e * 4 + a) * m * m..(e * 4 + a + 1) * m * m];
            for (kv, bv) in k.iter_mut().zip(block) {
                *kv += ea * bv;
            }
        }
        k
    }

    /// `out = K(E) u`, accumulated element by element.
    pub fn apply(&self, e_field: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(e_field, u)?;
        if out.len() != u.len() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: out.len() });
        }
        out.fill(0.0);
        let dim = self.dim;
        let m = 4 * dim;
        let mut ue = [0.0; 12];
        let mut re = [0.0; 12];
        for (e, nodes) in self.elements.iter().enumerate() {
            for (a, &node) in nodes.iter().enumerate() {
                ue[a * dim..(a + 1) * dim].copy_from_slice(&u[node * dim..(node + 1) * dim]);
            }
            re[..m].fill(0.0);
            for (a, &node) in nodes.iter().enumerate() {
                let ea = e_field[node];
                let block = &self.basis[(e * 4 + a) * m * m..(e * 4 + a + 1) * m * m];
                for (i, row) in block.chunks_exact(m).enumerate() {
                    let dot: f64 = row.iter().zip(&ue[..m]).map(|(k, x)| k * x).sum();
                    re[i] += ea * dot;
                }
            }
            for (a, &node) in nodes.iter().enumerate() {
                for c in 0..dim {
                    out[node * dim + c] += re[a * dim + c];
                }
            }
        }
        Ok(())
    }

    pub fn apply_vec(&self, e_field: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.apply(e_field, u, &mut out)?;
        Ok(out)
    }

    /// Strain energy `½ uᵀ K u`; `grad` receives `K u`.
    pub fn energy_and_gradient(&self, e_field: &[f64], u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.apply(e_field, u, grad)?;
        Ok(0.5 * u.iter().zip(grad.iter()).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn energy(&self, e_field: &[f64], u: &[f64]) -> Result<f64> {
        let mut grad = vec![0.0; u.len()];
        self.energy_and_gradient(e_field, u, &mut grad)
    }

    /// Diagonal of the assembled stiffness, for Jacobi preconditioning.
    pub fn diagonal(&self, e_field: &[f64]) -> Result<Vec<f64>> {
        if e_field.len() != self.n_nodes {
            return Err(Error::DimensionMismatch { expected: self.n_nodes, got: e_field.len() });
        }
        let dim = self.dim;
        let m = 4 * dim;
        let mut diag = vec![0.0; self.n_dofs()];
        for (e, nodes) in self.elements.iter().enumerate() {
            for (a, &node_a) in nodes.iter().enumerate() {
                let ea = e_field[node_a];
                let block = &self.basis[(e * 4 + a) * m * m..(e * 4 + a + 1) * m * m];
                for (b, &node_b) in nodes.iter().enumerate() {
                    for c in 0..dim {
                        let i = b * dim + c;
                        diag[node_b * dim + c] += ea * block[i * m + i];
                    }
                }
            }
        }
        Ok(diag)
    }
}

/// Global `K(E) u` for a one-off evaluation. Repeated use should keep a
/// [`StiffnessOperator`] around instead.
pub fn apply_global_stiffness(mesh: &Mesh, e_field: &[f64], nu: f64, u: &[f64]) -> Result<Vec<f64>> {
    StiffnessOperator::new(mesh, nu)?.apply_vec(e_field, u)
}

/// Dense global stiffness assembled from [`element_stiffness`] directly.
pub fn assemble_dense(mesh: &Mesh, e_field: &[f64], nu: f64) -> Result<DMatrix<f64>> {
    if e_field.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: e_field.len() });
    }
    let dim = mesh.dim();
    let n = mesh.n_dofs();
    let mut k = DMatrix::zeros(n, n);
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element(e);
        let nodal: Vec<f64> = nodes.iter().map(|&i| e_field[i]).collect();
        let ke = element_stiffness(mesh, e, &nodal, nu)?.matrix;
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                for ci in 0..dim {
                    for cj in 0..dim {
                        k[(na * dim + ci, nb * dim + cj)] += ke[(a * dim + ci, b * dim + cj)];
                    }
                }
            }
        }
    }
    Ok(k)
}
