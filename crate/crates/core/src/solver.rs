//! Reference FEM solutions: Dirichlet elimination plus Jacobi-preconditioned
//! conjugate gradients on the matrix-free stiffness, and nodal stress recovery.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_dense, b_matrix, constitutive, jacobian, shape_functions, QuadratureRule,
    StiffnessOperator,
};
use crate::mesh::{DofMap, Mesh};
use crate::microstructure::ElasticityField;

/// Relative residual at which CG stops.
pub const CG_TOLERANCE: f64 = 1e-10;
/// Iterations without a new best residual before CG gives up.
pub const CG_STALL_WINDOW: usize = 50;

/// Nodal displacements and recovered nodal stresses.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    pub dim: usize,
    /// Interleaved displacement DOFs, mm.
    pub u: Vec<f64>,
    /// Per node Voigt stress (3 components in 2D, 6 in 3D), MPa.
    pub stress: Vec<f64>,
}

impl SolutionField {
    pub fn n_nodes(&self) -> usize {
        self.u.len() / self.dim
    }

    pub fn n_stress(&self) -> usize {
        stress_components(self.dim)
    }

    pub fn displacement_component(&self, c: usize) -> Vec<f64> {
        self.u.iter().skip(c).step_by(self.dim).copied().collect()
    }

    pub fn stress_component(&self, c: usize) -> Vec<f64> {
        self.stress.iter().skip(c).step_by(self.n_stress()).copied().collect()
    }

    /// Component names in the order used by [`SolutionField::component`].
    pub fn component_names(&self) -> &'static [&'static str] {
        if self.dim == 2 {
            &["u", "v", "sigma_xx", "sigma_yy", "sigma_xy"]
        } else {
            &["u", "v", "w", "sigma_xx", "sigma_yy", "sigma_zz", "sigma_yz", "sigma_xz", "sigma_xy"]
        }
    }

    /// Displacement components first, then stress components.
    pub fn component(&self, c: usize) -> Vec<f64> {
        if c < self.dim {
            self.displacement_component(c)
        } else {
            self.stress_component(c - self.dim)
        }
    }

    pub fn n_components(&self) -> usize {
        self.dim + self.n_stress()
    }
}

pub fn stress_components(dim: usize) -> usize {
    if dim == 2 {
        3
    } else {
        6
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve `K_ff u_f = −K_fp u_p` and return the full displacement vector.
pub fn solve_displacement(
    op: &StiffnessOperator,
    dofs: &DofMap,
    e_field: &[f64],
) -> Result<(Vec<f64>, CgStats)> {
    let n = op.n_dofs();
    if dofs.n_dofs() != n {
        return Err(Error::DimensionMismatch { expected: n, got: dofs.n_dofs() });
    }
    if let Some(&bad) = e_field.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidMaterial { e: bad, nu: op.nu() });
    }
    let mask = dofs.prescribed_mask();
    let mut u = dofs.prescribed_vector();
    let free = dofs.free_dofs();
    if free.is_empty() {
        return Ok((u, CgStats { iterations: 0, relative_residual: 0.0 }));
    }

    let mut b = op.apply_vec(e_field, &u)?;
    for (bi, &p) in b.iter_mut().zip(mask) {
        *bi = if p { 0.0 } else { -*bi };
    }
    let inv_diag: Vec<f64> = op
        .diagonal(e_field)?
        .iter()
        .zip(mask)
        .map(|(&d, &p)| if p || d <= 0.0 { 0.0 } else { 1.0 / d })
        .collect();
    let mut apply_err = None;
    let (x, stats) = pcg(
        |p, q| {
            if let Err(e) = op.apply(e_field, p, q) {
                apply_err.get_or_insert(e);
            }
            for (qi, &m) in q.iter_mut().zip(mask) {
                if m {
                    *qi = 0.0;
                }
            }
        },
        &b,
        &inv_diag,
        10 * free.len(),
    )?;
    if let Some(e) = apply_err {
        return Err(e);
    }
    for &d in free {
        u[d] = x[d];
    }
    Ok((u, stats))
}

/// Preconditioned CG for `A x = b` from `x = 0`, with `M⁻¹ = diag(inv_diag)`.
fn pcg(
    mut matvec: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    inv_diag: &[f64],
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((x, CgStats { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut best = b_norm;
    let mut since_best = 0;
    for iter in 1..=max_iter {
        matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::SingularSystem(format!(
                "non-positive curvature {pq:e} at iteration {iter}"
            )));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = norm(&r);
        if res <= CG_TOLERANCE * b_norm {
            return Ok((x, CgStats { iterations: iter, relative_residual: res / b_norm }));
        }
        if res < best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= CG_STALL_WINDOW {
                return Err(Error::SingularSystem(format!(
                    "no progress for {CG_STALL_WINDOW} iterations (residual {:e})",
                    res / b_norm
                )));
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SingularSystem(format!(
        "no convergence within {max_iter} iterations (residual {:e})",
        best / b_norm
    )))
}

/// Full reference solution: CG displacement plus recovered nodal stress.
pub fn solve_reference(mesh: &Mesh, dofs: &DofMap, field: &ElasticityField) -> Result<SolutionField> {
    let op = StiffnessOperator::new(mesh, field.nu)?;
    solve_with_operator(&op, mesh, dofs, field)
}

pub fn solve_with_operator(
    op: &StiffnessOperator,
    mesh: &Mesh,
    dofs: &DofMap,
    field: &ElasticityField,
) -> Result<SolutionField> {
    let (u, _) = solve_displacement(op, dofs, &field.e)?;
    let stress = recover_stress(mesh, field, &u)?;
    Ok(SolutionField { dim: mesh.dim(), u, stress })
}

/// Dense LU solve of the same eliminated system. Quadratic memory; meant for
/// small meshes and for cross-checking the iterative path.
pub fn solve_dense(mesh: &Mesh, dofs: &DofMap, e_field: &[f64], nu: f64) -> Result<Vec<f64>> {
    let k = assemble_dense(mesh, e_field, nu)?;
    let up = DVector::from_vec(dofs.prescribed_vector());
    let kup = &k * &up;
    let free = dofs.free_dofs();
    let mut u = up.as_slice().to_vec();
    if free.is_empty() {
        return Ok(u);
    }
    let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
    let rhs = DVector::from_fn(free.len(), |i, _| -kup[free[i]]);
    let sol = kff
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("dense LU failed".into()))?;
    for (i, &d) in free.iter().enumerate() {
        u[d] = sol[i];
    }
    Ok(u)
}

/// Nodal stresses: `σ = C(E(ξ)) B(ξ) U_e` averaged over the quadrature points
/// of each element, then averaged onto nodes weighted by element measure.
pub fn recover_stress(mesh: &Mesh, field: &ElasticityField, u: &[f64]) -> Result<Vec<f64>> {
    let dim = mesh.dim();
    if u.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: u.len() });
    }
    if field.e.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: field.e.len() });
    }
    let ns = stress_components(dim);
    let rule = QuadratureRule::for_kind(mesh.kind());
    let c_unit = constitutive(dim, 1.0, field.nu)?;
    let mut acc = vec![0.0; mesh.n_nodes() * ns];
    let mut weight = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element(e);
        let ue = DVector::from_fn(4 * dim, |i, _| u[nodes[i / dim] * dim + i % dim]);
        let mut sigma_e = DVector::zeros(ns);
        for p in &rule.points {
            let shape = shape_functions(mesh.kind(), *p);
            let jac = jacobian(mesh, e, &shape.grads)?;
            let b = b_matrix(&jac.inv, &shape.grads);
            let e_q: f64 = shape.values.iter().zip(&nodes).map(|(n, &i)| n * field.e[i]).sum();
            sigma_e += &c_unit * (b * &ue) * e_q;
        }
        sigma_e /= rule.len() as f64;
        let measure = mesh.element_measure(e);
        for &node in &nodes {
            weight[node] += measure;
            for c in 0..ns {
                acc[node * ns + c] += measure * sigma_e[c];
            }
        }
    }
    for (node, w) in weight.iter().enumerate() {
        if *w > 0.0 {
            for c in 0..ns {
                acc[node * ns + c] /= w;
            }
        }
    }
    Ok(acc)
}

/// Arithmetic mean of each component of an interleaved nodal array.
pub fn homogenize(values: &[f64], n_components: usize) -> Vec<f64> {
    let n = values.len() / n_components;
    let mut mean = vec![0.0; n_components];
    for chunk in values.chunks_exact(n_components) {
        for (m, v) in mean.iter_mut().zip(chunk) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DirichletBc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniaxial_bcs(mesh: &mut Mesh) -> Vec<DirichletBc> {
        mesh.insert_node_set("origin", vec![0]).unwrap();
        vec![
            DirichletBc::new("left", 0, 0.0),
            DirichletBc::new("origin", 1, 0.0),
            DirichletBc::new("right", 0, 0.05),
        ]
    }

    #[test]
    fn homogeneous_bar_is_exact() {
        let mut mesh = Mesh::structured_grid(11, 1.0).unwrap();
        let bcs = uniaxial_bcs(&mut mesh);
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        let field = ElasticityField::uniform(mesh.n_nodes(), 1.0, 0.0);
        let sol = solve_reference(&mesh, &dofs, &field).unwrap();
        for i in 0..mesh.n_nodes() {
            let x = mesh.node(i)[0];
            assert!((sol.u[2 * i] - 0.05 * x).abs() < 1e-11);
            assert!(sol.u[2 * i + 1].abs() < 1e-11);
            assert!((sol.stress[3 * i] - 0.05).abs() < 1e-10);
            assert!(sol.stress[3 * i + 1].abs() < 1e-10 && sol.stress[3 * i + 2].abs() < 1e-10);
        }
    }

    #[test]
    fn fully_prescribed_needs_no_solve() {
        let mesh = Mesh::structured_grid(2, 1.0).unwrap();
        let bcs: Vec<_> = ["left", "right"]
            .iter()
            .flat_map(|s| [DirichletBc::new(s, 0, 0.1), DirichletBc::new(s, 1, -0.2)])
            .collect();
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        let op = StiffnessOperator::new(&mesh, 0.3).unwrap();
        let (u, stats) = solve_displacement(&op, &dofs, &[1.0; 4]).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(u, dofs.prescribed_vector());
    }

    #[test]
    fn cg_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mesh = Mesh::structured_grid(9, 1.0).unwrap();
        let bcs = [
            DirichletBc::new("left", 0, 0.0),
            DirichletBc::new("left", 1, 0.0),
            DirichletBc::new("right", 0, 0.05),
            DirichletBc::new("right", 1, 0.05),
        ];
        let dofs = DofMap::new(&mesh, &bcs).unwrap();
        let e: Vec<f64> = (0..81).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.1 }).collect();
        let op = StiffnessOperator::new(&mesh, 0.3).unwrap();
        let (u_cg, _) = solve_displacement(&op, &dofs, &e).unwrap();
        let u_lu = solve_dense(&mesh, &dofs, &e, 0.3).unwrap();
        let diff: f64 = u_cg.iter().zip(&u_lu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm(&u_lu));
    }

    #[test]
    fn indefinite_system_is_reported_singular() {
        let res = pcg(|p, q| {
            q[0] = p[0];
            q[1] = -p[1];
        }, &[1.0, 1.0], &[1.0, 1.0], 20);
        assert!(matches!(res, Err(Error::SingularSystem(_))));
    }

    #[test]
    fn iteration_cap_is_reported_singular() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let res = pcg(|p, q| {
            for i in 0..4 {
                q[i] = diag[i] * p[i];
            }
        }, &[1.0; 4], &[1.0; 4], 2);
        assert!(matches!(res, Err(Error::SingularSystem(_))));
    }

    #[test]
    fn stress_scales_with_displacement() {
        let mesh = Mesh::structured_grid(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = ElasticityField::new((0..16).map(|_| rng.gen_range(0.1..1.0)).collect(), 0.3);
        let u: Vec<f64> = (0..32).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let s1 = recover_stress(&mesh, &field, &u).unwrap();
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let s2 = recover_stress(&mesh, &field, &u2).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shared_edge_stress_is_measure_weighted() {
        // Two unit elements side by side, E = 1 on the left cell and 0.1 on the right.
        let coords = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0];
        let elements = vec![[0, 1, 4, 3], [1, 2, 5, 4]];
        let mesh = Mesh::from_parts(2, coords, elements, crate::mesh::ElementKind::Quad4).unwrap();
        let field = ElasticityField::new(vec![1.0, 0.55, 0.1, 1.0, 0.55, 0.1], 0.0);
        let u = vec![0.0, 0.0, 0.1, 0.0, 0.3, 0.0, 0.0, 0.0, 0.1, 0.0, 0.3, 0.0];
        let s = recover_stress(&mesh, &field, &u).unwrap();
        // Left cell: ε_xx = 0.1, mean E = (1 + 0.55 + 0.55 + 1) / 4.
        let left = 0.1 * (1.0 + 0.55) / 2.0;
        // Right cell: ε_xx = 0.2, mean E = (0.55 + 0.1) / 2.
        let right = 0.2 * (0.55 + 0.1) / 2.0;
        assert!((s[0] - left).abs() < 1e-14);
        assert!((s[3 * 2] - right).abs() < 1e-14);
        assert!((s[3] - 0.5 * (left + right)).abs() < 1e-14);
    }

    #[test]
    fn homogenize_means() {
        assert_eq!(homogenize(&[2.0, 5.0, 2.0, 5.0], 2), vec![2.0, 5.0]);
        let mesh = Mesh::structured_grid(11, 1.0).unwrap();
        let xs: Vec<f64> = (0..mesh.n_nodes()).map(|i| mesh.node(i)[0]).collect();
        assert!((homogenize(&xs, 1)[0] - 0.5).abs() < 1e-15);
    }
}
