//! Finite operator learning for heterogeneous linear elasticity.
//!
//! Neural surrogates map nodal Young's-modulus fields to nodal displacements
//! and are trained on the discretized FEM energy rather than on labelled
//! solutions. The crate also carries the reference FEM solver used to judge
//! them, microstructure generators, a data-driven DeepONet baseline and the
//! error metrics used to compare all of them.

pub mod deeponet;
pub mod error;
pub mod fem;
pub mod fol;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod microstructure;
pub mod neural;
pub mod solver;

pub use error::{Error, Result};
pub use fem::StiffnessOperator;
pub use mesh::{DirichletBc, DofMap, ElementKind, Mesh};
pub use microstructure::{ElasticityField, FourierLayout, FourierSpec, SampleSet};
pub use solver::SolutionField;
