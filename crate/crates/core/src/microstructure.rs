//! Elasticity fields for training and testing: seeded two-phase morphologies,
//! grid resampling, and the Fourier parameterization with sigmoidal projection.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::shape_functions_quad4;
use crate::mesh::Mesh;
use crate::solver::SolutionField;

/// Nodal Young's modulus (MPa) with a uniform Poisson ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticityField {
    pub e: Vec<f64>,
    pub nu: f64,
}

impl ElasticityField {
    pub fn new(e: Vec<f64>, nu: f64) -> Self {
        ElasticityField { e, nu }
    }

    pub fn uniform(n_nodes: usize, e: f64, nu: f64) -> Self {
        ElasticityField { e: vec![e; n_nodes], nu }
    }

    /// Every value finite, positive and inside `[e_min, e_max]`.
    pub fn check_bounds(&self, e_min: f64, e_max: f64) -> Result<()> {
        match self.e.iter().find(|&&v| !(v.is_finite() && v > 0.0 && v >= e_min && v <= e_max)) {
            Some(&bad) => Err(Error::InvalidMaterial { e: bad, nu: self.nu }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ElasticityField { e: self.e.iter().map(|v| v * factor).collect(), nu: self.nu }
    }
}

/// Per-sample seed: `seed` mixed with the sample index, so any subset of a
/// set can be regenerated independently of the others.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Rows hold nodal moduli.
    Field,
    /// Rows hold Fourier coefficients.
    Fourier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub phase_fraction: Option<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub kind: SampleKind,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stable sort by phase fraction (samples without one go last).
    pub fn sort_by_phase_fraction(&mut self) {
        self.samples.sort_by(|a, b| {
            let key = |s: &Sample| s.phase_fraction.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b))
        });
    }

    /// CSV with a header row. Field sets: `id,phase_fraction,e0..`; Fourier
    /// sets: `id,c0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let width = self.samples.first().map_or(0, |s| s.values.len());
        let mut header = vec!["id".to_string()];
        let prefix = match self.kind {
            SampleKind::Field => {
                header.push("phase_fraction".into());
                "e"
            }
            SampleKind::Fourier => "c",
        };
        header.extend((0..width).map(|i| format!("{prefix}{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.id.to_string()];
            if self.kind == SampleKind::Field {
                row.push(s.phase_fraction.map_or(String::new(), |p| p.to_string()));
            }
            row.extend(s.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let kind = if headers.get(1) == Some("phase_fraction") {
            SampleKind::Field
        } else {
            SampleKind::Fourier
        };
        let skip = if kind == SampleKind::Field { 2 } else { 1 };
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad number `{s}`") })
            };
            let id = rec
                .get(0)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or(Error::Parse { line, msg: "bad id".into() })?;
            let phase_fraction = match kind {
                SampleKind::Field => match rec.get(1).map(str::trim) {
                    Some("") | None => None,
                    Some(s) => Some(parse(s)?),
                },
                SampleKind::Fourier => None,
            };
            let values = rec.iter().skip(skip).map(parse).collect::<Result<Vec<_>>>()?;
            samples.push(Sample { id, phase_fraction, values });
        }
        Ok(SampleSet { kind, seed, samples })
    }
}

/// Smooth random field: a normalized sum of randomly oriented cosine waves.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothRandomField {
    /// `(kx, ky, amplitude, phase)`, wave numbers in rad/mm.
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothRandomField {
    /// Between 4 and 8 waves with up to 3 cycles per unit length along each axis.
    pub fn random(rng: &mut impl Rng) -> Self {
        let count = rng.gen_range(4..=8);
        let waves = (0..count)
            .map(|_| {
                let kx = 2.0 * PI * rng.gen_range(-3.0..3.0);
                let ky = 2.0 * PI * rng.gen_range(-3.0..3.0);
                let amp = rng.gen_range(0.5..1.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                (kx, ky, amp, phase)
            })
            .collect();
        SmoothRandomField { waves }
    }

    /// Value in `[-1, 1]`.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let total: f64 = self.waves.iter().map(|w| w.2).sum();
        self.waves.iter().map(|&(kx, ky, a, p)| a * (kx * x + ky * y + p).cos()).sum::<f64>() / total
    }

    /// Nodes where the field is at or above `level` take `e_hard`, the rest `e_soft`.
    /// Returns the moduli and the hard-phase fraction.
    pub fn threshold(&self, mesh: &Mesh, level: f64, e_hard: f64, e_soft: f64) -> (Vec<f64>, f64) {
        let mut hard = 0usize;
        let e = (0..mesh.n_nodes())
            .map(|i| {
                let p = mesh.node(i);
                if self.evaluate(p[0], p[1]) >= level {
                    hard += 1;
                    e_hard
                } else {
                    e_soft
                }
            })
            .collect();
        (e, hard as f64 / mesh.n_nodes() as f64)
    }
}

/// Seeded two-phase morphologies on an `grid_n × grid_n` unit grid.
pub fn generate_two_phase_samples(
    n_samples: usize,
    grid_n: usize,
    e_hard: f64,
    e_soft: f64,
    seed: u64,
) -> Result<SampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if !(e_hard > e_soft && e_soft > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "phases must satisfy E_hard > E_soft > 0 (got {e_hard}, {e_soft})"
        )));
    }
    let mesh = Mesh::structured_grid(grid_n, 1.0)?;
    let samples = (0..n_samples as u64)
        .map(|i| {
            let id = sample_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(id);
            let field = SmoothRandomField::random(&mut rng);
            let level = rng.gen_range(-0.6..0.6);
            let (values, fraction) = field.threshold(&mesh, level, e_hard, e_soft);
            Sample { id, phase_fraction: Some(fraction), values }
        })
        .collect();
    Ok(SampleSet { kind: SampleKind::Field, seed, samples })
}

fn grid_n_of(len: usize) -> Result<usize> {
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len || n < 2 {
        return Err(Error::DimensionMismatch { expected: n * n, got: len });
    }
    Ok(n)
}

/// Max-pool a fine structured-grid field onto a coarser grid over the same
/// square. Each coarse node takes the maximum over the fine nodes within half
/// a coarse spacing (Chebyshev distance), which favours the stiff phase.
pub fn downsample(field: &ElasticityField, target_n: usize) -> Result<ElasticityField> {
    let fine_n = grid_n_of(field.e.len())?;
    if target_n < 2 || target_n > fine_n {
        return Err(Error::DimensionMismatch { expected: fine_n, got: target_n });
    }
    let ratio = (fine_n - 1) as f64 / (target_n - 1) as f64;
    let radius = ratio / 2.0 + 1e-9;
    let mut e = Vec::with_capacity(target_n * target_n);
    for cy in 0..target_n {
        for cx in 0..target_n {
            // Work in fine-index units.
            let (fx, fy) = (cx as f64 * ratio, cy as f64 * ratio);
            let lo = |c: f64| (c - radius).ceil().max(0.0) as usize;
            let hi = |c: f64| ((c + radius).floor() as usize).min(fine_n - 1);
            let mut m = f64::NEG_INFINITY;
            for iy in lo(fy)..=hi(fy) {
                for ix in lo(fx)..=hi(fx) {
                    m = m.max(field.e[iy * fine_n + ix]);
                }
            }
            e.push(m);
        }
    }
    Ok(ElasticityField { e, nu: field.nu })
}

/// Bilinear interpolation of interleaved nodal data (`n_comp` values per node)
/// from one structured grid resolution to another over the same square.
pub fn interpolate_grid(values: &[f64], n_comp: usize, target_n: usize) -> Result<Vec<f64>> {
    if n_comp == 0 || !values.len().is_multiple_of(n_comp) {
        return Err(Error::DimensionMismatch { expected: n_comp, got: values.len() });
    }
    let source_n = grid_n_of(values.len() / n_comp)?;
    if target_n < 2 {
        return Err(Error::InvalidArgument("target grid needs at least 2 nodes per side".into()));
    }
    let map = |i: usize| {
        // Source-index coordinate, exact whenever the nodes coincide.
        let t = (i * (source_n - 1)) as f64 / (target_n - 1) as f64;
        let cell = (t.floor() as usize).min(source_n - 2);
        (cell, 2.0 * (t - cell as f64) - 1.0)
    };
    let mut out = Vec::with_capacity(target_n * target_n * n_comp);
    for j in 0..target_n {
        let (cy, eta) = map(j);
        for i in 0..target_n {
            let (cx, xi) = map(i);
            let (n, _) = shape_functions_quad4(xi, eta);
            let corners = [
                cy * source_n + cx,
                cy * source_n + cx + 1,
                (cy + 1) * source_n + cx + 1,
                (cy + 1) * source_n + cx,
            ];
            for c in 0..n_comp {
                out.push(corners.iter().zip(&n).map(|(&k, w)| w * values[k * n_comp + c]).sum());
            }
        }
    }
    Ok(out)
}

/// Bilinear upsampling of displacements and stresses to a `target_n` grid.
pub fn upsample_bilinear(solution: &SolutionField, target_n: usize) -> Result<SolutionField> {
    if solution.dim != 2 {
        return Err(Error::UnstructuredMesh);
    }
    Ok(SolutionField {
        dim: 2,
        u: interpolate_grid(&solution.u, 2, target_n)?,
        stress: interpolate_grid(&solution.stress, solution.n_stress(), target_n)?,
    })
}

/// Which Fourier terms carry coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourierLayout {
    /// Constant plus one all-cosine product per frequency combination.
    Reduced,
    /// Constant plus `A, B, C, D` (sin·cos, cos·sin, sin·sin, cos·cos) per
    /// frequency pair; 2D only.
    Full,
}

/// Continuous modulus field `E = (E_max − E_min)·sigmoid(β(E_f − ½)) + E_min`
/// with `E_f` a sum of sine/cosine products at fixed frequencies.
///
/// Frequency combinations enumerate the axes with x outermost, so the reduced
/// 2D layout is `[c, D(fx0,fy0), D(fx0,fy1), …, D(fx2,fy2)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    /// Frequencies (rad/mm) per axis.
    pub freqs: Vec<Vec<f64>>,
    pub layout: FourierLayout,
    pub coeffs: Vec<f64>,
    pub beta: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl FourierSpec {
    /// The 2D setup used for the parametric studies: fx = {3, 5, 7},
    /// fy = {2, 4, 7}, reduced layout (10 coefficients), β = 1, E ∈ (0.1, 1.0).
    pub fn default_2d(coeffs: Vec<f64>) -> Self {
        FourierSpec {
            freqs: vec![vec![3.0, 5.0, 7.0], vec![2.0, 4.0, 7.0]],
            layout: FourierLayout::Reduced,
            coeffs,
            beta: 1.0,
            e_min: 0.1,
            e_max: 1.0,
        }
    }

    /// The 3D setup: {2, 4, 6} on every axis, reduced layout (28 coefficients).
    pub fn default_3d(coeffs: Vec<f64>) -> Self {
        FourierSpec {
            freqs: vec![vec![2.0, 4.0, 6.0]; 3],
            layout: FourierLayout::Reduced,
            coeffs,
            beta: 1.0,
            e_min: 0.1,
            e_max: 1.0,
        }
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Self {
        FourierSpec { coeffs, ..self.clone() }
    }

    fn n_combinations(&self) -> usize {
        self.freqs.iter().map(Vec::len).product()
    }

    pub fn n_coeffs(&self) -> usize {
        let per = match self.layout {
            FourierLayout::Reduced => 1,
            FourierLayout::Full => 4,
        };
        1 + per * self.n_combinations()
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() < 2 || self.freqs.len() > 3 || self.freqs.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("need 2 or 3 non-empty frequency lists".into()));
        }
        if self.layout == FourierLayout::Full && self.freqs.len() != 2 {
            return Err(Error::InvalidArgument("full layout is only defined in 2D".into()));
        }
        if self.coeffs.len() != self.n_coeffs() {
            return Err(Error::DimensionMismatch { expected: self.n_coeffs(), got: self.coeffs.len() });
        }
        if !(self.e_min < self.e_max && self.e_min > 0.0) {
            return Err(Error::InvalidArgument("need 0 < E_min < E_max".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument("beta must be positive".into()));
        }
        Ok(())
    }

    /// Basis values at `x` in coefficient order (first entry is the constant 1).
    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_coeffs());
        out.push(1.0);
        let dims = self.freqs.len();
        let mut idx = vec![0usize; dims];
        for _ in 0..self.n_combinations() {
            let arg = |axis: usize| self.freqs[axis][idx[axis]] * x[axis];
            match self.layout {
                FourierLayout::Reduced => {
                    out.push((0..dims).map(|a| arg(a).cos()).product());
                }
                FourierLayout::Full => {
                    let (sx, cx) = arg(0).sin_cos();
                    let (sy, cy) = arg(1).sin_cos();
                    out.extend_from_slice(&[sx * cy, cx * sy, sx * sy, cx * cy]);
                }
            }
            // Odometer increment, last axis fastest.
            for a in (0..dims).rev() {
                idx[a] += 1;
                if idx[a] < self.freqs[a].len() {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// `E_f(x)` before projection.
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.basis(x).iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }

    pub fn project(&self, raw: f64) -> f64 {
        (self.e_max - self.e_min) * sigmoid(self.beta * (raw - 0.5)) + self.e_min
    }

    /// Inverse of [`FourierSpec::project`], with `E` clamped away from the bounds.
    pub fn unproject(&self, e: f64) -> f64 {
        let span = self.e_max - self.e_min;
        let eps = 1e-6 * span;
        let s = (e.clamp(self.e_min + eps, self.e_max - eps) - self.e_min) / span;
        0.5 + (s / (1.0 - s)).ln() / self.beta
    }

    pub fn modulus(&self, x: &[f64]) -> f64 {
        self.project(self.raw(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluate a Fourier spec at every mesh node.
pub fn fourier_field(spec: &FourierSpec, mesh: &Mesh, nu: f64) -> Result<ElasticityField> {
    spec.validate()?;
    if spec.freqs.len() != mesh.dim() {
        return Err(Error::DimensionMismatch { expected: mesh.dim(), got: spec.freqs.len() });
    }
    let e = (0..mesh.n_nodes()).map(|i| spec.modulus(mesh.node(i))).collect();
    Ok(ElasticityField { e, nu })
}

/// Default per-coefficient sampling range.
pub const DEFAULT_COEFF_RANGE: (f64, f64) = (-16.0, 18.0);

/// Uniform draws per coefficient within `ranges`, one sub-seeded stream per sample.
pub fn sample_fourier_coeffs(n_samples: usize, ranges: &[(f64, f64)], seed: u64) -> Result<SampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if let Some(bad) = ranges.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(Error::InvalidArgument(format!("bad coefficient range {bad:?}")));
    }
    let samples = (0..n_samples as u64)
        .map(|i| {
            let id = sample_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(id);
            let values = ranges.iter().map(|&(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
            Sample { id, phase_fraction: None, values }
        })
        .collect();
    Ok(SampleSet { kind: SampleKind::Fourier, seed, samples })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierFit {
    pub coeffs: Vec<f64>,
    /// RMS misfit of `E_f` over the nodes.
    pub residual: f64,
    /// Condition estimate of the normal-equation matrix.
    pub condition: f64,
}

/// Maximum tolerated normal-equation condition estimate.
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Least-squares fit of the pre-projection field `E_f` (recovered through the
/// clamped inverse sigmoid) onto the basis of `template`.
pub fn fit_fourier_coeffs(
    field: &ElasticityField,
    mesh: &Mesh,
    template: &FourierSpec,
) -> Result<FourierFit> {
    if field.e.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: field.e.len() });
    }
    if mesh.grid().is_none() {
        return Err(Error::UnstructuredMesh);
    }
    let m = template.n_coeffs();
    let rows = mesh.n_nodes();
    let a = DMatrix::from_fn(rows, m, |i, j| template.basis(mesh.node(i))[j]);
    let y = DVector::from_iterator(rows, field.e.iter().map(|&e| template.unproject(e)));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_FIT_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let resid = &a * &c - &y;
    let residual = (resid.norm_squared() / rows as f64).sqrt();
    Ok(FourierFit { coeffs: c.iter().copied().collect(), residual, condition })
}
