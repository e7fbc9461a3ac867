//! Versioned JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fol_core::deeponet::DeepOnetConfig;
use fol_core::fol::FolConfig;
use fol_core::mesh::{DirichletBc, DofMap, Mesh};
use fol_core::microstructure::{FourierLayout, FourierSpec, DEFAULT_COEFF_RANGE};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Grid { n: usize, side: f64 },
    TetCube { cells: usize, side: f64 },
    /// NODES/ELEMS text file, relative to the config file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub e_hard: f64,
    pub e_soft: f64,
    pub nu: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub beta: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material { e_hard: 1.0, e_soft: 0.1, nu: 0.3, e_min: 0.1, e_max: 1.0, beta: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Sampling {
    /// Thresholded smooth random fields on the grid.
    TwoPhase { n_samples: usize },
    /// Uniform Fourier coefficients; default frequencies per dimension.
    Fourier {
        n_samples: usize,
        #[serde(default = "default_range")]
        range: (f64, f64),
        #[serde(default)]
        freqs: Option<Vec<Vec<f64>>>,
    },
}

fn default_range() -> (f64, f64) {
    DEFAULT_COEFF_RANGE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub material: Material,
    pub bcs: Vec<DirichletBc>,
    pub sampling: Sampling,
    #[serde(default)]
    pub fol: Option<FolConfig>,
    #[serde(default)]
    pub deeponet: Option<DeepOnetConfig>,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let MeshSpec::File { path: p } = &mut cfg.mesh {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies CLI overrides; the seed propagates into trainer configs.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            if let Some(f) = &mut self.fol {
                f.seed = s;
            }
            if let Some(d) = &mut self.deeponet {
                d.seed = s;
            }
        }
        if let Some(o) = out {
            self.out = o;
        }
        self
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        let m = &self.material;
        if !(m.e_soft > 0.0 && m.e_hard > 0.0 && m.e_min > 0.0 && m.e_max > m.e_min) {
            bail!("material moduli must be positive with e_max > e_min");
        }
        if !(m.nu > -1.0 && m.nu < 0.5) {
            bail!("nu must lie in (-1, 0.5)");
        }
        match &self.mesh {
            MeshSpec::Grid { n, side } if *n < 2 || *side <= 0.0 => bail!("grid needs n >= 2 and side > 0"),
            MeshSpec::TetCube { cells, side } if *cells == 0 || *side <= 0.0 => bail!("tet cube needs cells >= 1 and side > 0"),
            _ => {}
        }
        let n = match &self.sampling {
            Sampling::TwoPhase { n_samples } => {
                if !matches!(self.mesh, MeshSpec::Grid { .. }) {
                    bail!("two-phase sampling needs a grid mesh");
                }
                *n_samples
            }
            Sampling::Fourier { n_samples, range, .. } => {
                if !(range.0 < range.1) {
                    bail!("coefficient range must be increasing");
                }
                *n_samples
            }
        };
        if n == 0 {
            bail!("n_samples must be positive");
        }
        if let Some(f) = &self.fol {
            f.validate()?;
            if f.nu != m.nu {
                bail!("fol.nu ({}) differs from material.nu ({})", f.nu, m.nu);
            }
        }
        if let Some(d) = &self.deeponet {
            d.validate()?;
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> anyhow::Result<Mesh> {
        Ok(match &self.mesh {
            MeshSpec::Grid { n, side } => Mesh::structured_grid(*n, *side)?,
            MeshSpec::TetCube { cells, side } => Mesh::tet_cube(*cells, *side)?,
            MeshSpec::File { path } => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Mesh::parse_tet(&text)?
            }
        })
    }

    pub fn build_dofs(&self, mesh: &Mesh) -> anyhow::Result<DofMap> {
        Ok(DofMap::new(mesh, &self.bcs)?)
    }

    /// Coefficient-free Fourier template for this run's dimension and material.
    pub fn fourier_template(&self, dim: usize) -> Option<FourierSpec> {
        let Sampling::Fourier { freqs, .. } = &self.sampling else { return None };
        let mut spec = if dim == 2 { FourierSpec::default_2d(vec![]) } else { FourierSpec::default_3d(vec![]) };
        if let Some(f) = freqs {
            spec.freqs = f.clone();
            spec.layout = FourierLayout::Reduced;
        }
        spec.beta = self.material.beta;
        spec.e_min = self.material.e_min;
        spec.e_max = self.material.e_max;
        spec.coeffs = vec![0.0; spec.n_coeffs()];
        Some(spec)
    }
}
