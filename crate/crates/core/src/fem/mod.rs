//! Element-level FEM for small-strain linear elasticity.
//!
//! Quad4 elements use bilinear shape functions with 2×2 Gauss quadrature;
//! tet4 elements are constant-strain with a single centroid point. Young's
//! modulus is nodal and interpolated to quadrature points with the shape
//! functions, so the stiffness is linear in the nodal moduli. That linearity
//! is what [`StiffnessOperator`] exploits: it stores one basis matrix per
//! element node and rebuilds `K_e(E) = Σ_a E_a K_e^(a)` on the fly.

mod assembly;
mod element;
mod quadrature;

pub use assembly::{apply_global_stiffness, assemble_dense, StiffnessOperator};
pub use element::{
    b_matrix, constitutive, constitutive_3d, constitutive_plane_stress, element_stiffness,
    jacobian, shape_functions, shape_functions_quad4, shape_functions_tet4, ElementStiffness,
    Jacobian, ShapeEval,
};
pub use quadrature::QuadratureRule;

/// Threshold below which `det J` counts as a degenerate element.
pub const DEGENERATE_DET: f64 = 1e-14;
