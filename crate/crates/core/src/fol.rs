//! Finite operator learning: networks from elasticity inputs to nodal
//! displacements, trained on the discretized FEM energy instead of labelled
//! solutions.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::StiffnessOperator;
use crate::mesh::{DofMap, Mesh};
use crate::microstructure::{fourier_field, sample_seed, ElasticityField, FourierSpec, SampleKind, SampleSet};
use crate::neural::{adam_step_flat, Activation, AdamState, Mlp, MlpRecord, Params, SubnetBank};
use crate::solver::{recover_stress, SolutionField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Dirichlet values enforced by a weighted L1 penalty.
    SoftBc,
    /// Prescribed DOFs are dropped from the network output.
    HardBc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One scalar network per output DOF.
    SubnetBank,
    SingleNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    NodalE,
    FourierCoeffs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolConfig {
    pub mode: BcMode,
    pub architecture: Architecture,
    pub encoding: InputEncoding,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the Dirichlet penalty (soft mode only).
    pub a_b: f64,
    pub nu: f64,
    pub seed: u64,
    /// Network inputs are `input_scale · input`; the modulus field is built
    /// from the unscaled input.
    #[serde(default = "unit_scale")]
    pub input_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for FolConfig {
    /// Soft-BC subnet bank over nodal moduli, 4000 epochs at 5e-4, batch 100.
    fn default() -> Self {
        FolConfig {
            mode: BcMode::SoftBc,
            architecture: Architecture::SubnetBank,
            encoding: InputEncoding::NodalE,
            hidden: vec![10, 10],
            activation: Activation::Swish,
            batch_size: 100,
            epochs: 4000,
            learning_rate: 5e-4,
            a_b: 10.0,
            nu: 0.3,
            seed: 0,
            input_scale: 1.0,
        }
    }
}

impl FolConfig {
    /// Fourier-coefficient input, hard BCs, one `[300, 300]` network, batch 1,
    /// lr 1e-3, 5000 epochs.
    pub fn fourier_default() -> Self {
        FolConfig {
            mode: BcMode::HardBc,
            architecture: Architecture::SingleNet,
            encoding: InputEncoding::FourierCoeffs,
            hidden: vec![300, 300],
            batch_size: 1,
            epochs: 5000,
            learning_rate: 1e-3,
            input_scale: 0.0625,
            ..FolConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.mode == BcMode::SoftBc && !(self.a_b > 0.0) {
            return Err(Error::InvalidArgument("a_b must be positive in soft-BC mode".into()));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::InvalidArgument("input_scale must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layers must be non-empty and non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub energy: f64,
    pub dirichlet: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.energy += s * other.energy;
        self.dirichlet += s * other.dirichlet;
        self.total += s * other.total;
    }
}

/// Mesh, boundary conditions and the stiffness operator they share.
#[derive(Clone, Debug)]
pub struct FolProblem {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub op: StiffnessOperator,
}

impl FolProblem {
    pub fn new(mesh: Mesh, dofs: DofMap, nu: f64) -> Result<Self> {
        if dofs.n_dofs() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: dofs.n_dofs() });
        }
        let op = StiffnessOperator::new(&mesh, nu)?;
        Ok(FolProblem { mesh, dofs, op })
    }

    pub fn nu(&self) -> f64 {
        self.op.nu()
    }

    /// Number of network outputs for the given BC mode.
    pub fn n_outputs(&self, mode: BcMode) -> usize {
        match mode {
            BcMode::SoftBc => self.dofs.n_dofs(),
            BcMode::HardBc => self.dofs.free_dofs().len(),
        }
    }

    /// Full DOF vector from a network output.
    pub fn assemble_u(&self, mode: BcMode, output: &[f64]) -> Vec<f64> {
        match mode {
            BcMode::SoftBc => output.to_vec(),
            BcMode::HardBc => {
                let mut u = self.dofs.prescribed_vector();
                for (&d, &v) in self.dofs.free_dofs().iter().zip(output) {
                    u[d] = v;
                }
                u
            }
        }
    }
}

/// `½UᵀK(E)U` plus, in soft mode, `a_b·Σ|U_i − Ū_i|/n_db` over prescribed
/// DOFs. Returns the loss and its gradient with respect to the full `U`.
pub fn fol_loss(
    problem: &FolProblem,
    e_field: &[f64],
    u_pred: &[f64],
    mode: BcMode,
    a_b: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let n = problem.dofs.n_dofs();
    if u_pred.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u_pred.len() });
    }
    let mut u = u_pred.to_vec();
    if mode == BcMode::HardBc {
        problem.dofs.apply_prescribed(&mut u);
    }
    let mut grad = vec![0.0; n];
    let energy = problem.op.energy_and_gradient(e_field, &u, &mut grad)?;
    let mut dirichlet = 0.0;
    match mode {
        BcMode::HardBc => {
            for &d in problem.dofs.prescribed().keys() {
                grad[d] = 0.0;
            }
        }
        BcMode::SoftBc => {
            let n_db = problem.dofs.n_constrained_nodes();
            if n_db > 0 {
                let w = a_b / n_db as f64;
                for (&d, &target) in problem.dofs.prescribed() {
                    let diff = u[d] - target;
                    dirichlet += w * diff.abs();
                    // sign(0) = 0: exact subgradient choice at the kink.
                    if diff != 0.0 {
                        grad[d] += w * diff.signum();
                    }
                }
            }
        }
    }
    Ok((LossBreakdown { energy, dirichlet, total: energy + dirichlet }, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub enum FolNetwork {
    Single(Mlp),
    Bank(SubnetBank),
}

impl FolNetwork {
    pub fn n_inputs(&self) -> usize {
        match self {
            FolNetwork::Single(m) => m.n_inputs(),
            FolNetwork::Bank(b) => b.n_inputs(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            FolNetwork::Single(m) => m.n_outputs(),
            FolNetwork::Bank(b) => b.n_outputs(),
        }
    }

    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            FolNetwork::Single(m) => m.predict_batch(x),
            FolNetwork::Bank(b) => Ok(b.forward_batch(x)?.0),
        }
    }

    pub fn zeros_like(&self) -> FolNetwork {
        match self {
            FolNetwork::Single(m) => FolNetwork::Single(m.zeros_like()),
            FolNetwork::Bank(b) => FolNetwork::Bank(b.zeros_like()),
        }
    }

    /// Forward then backward into `grads`, with an output-gradient callback
    /// that sees the whole output batch.
    fn forward_backward<F>(&self, x: &DMatrix<f64>, grads: &mut FolNetwork, dl_dy: F) -> Result<()>
    where
        F: FnOnce(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        match (self, grads) {
            (FolNetwork::Single(m), FolNetwork::Single(g)) => {
                let (y, tape) = m.forward_batch(x)?;
                m.backward_into(&tape, &dl_dy(&y)?, g, false)?;
            }
            (FolNetwork::Bank(b), FolNetwork::Bank(g)) => {
                let (y, tape) = b.forward_batch(x)?;
                b.backward_into(&tape, &dl_dy(&y)?, g)?;
            }
            _ => return Err(Error::InvalidArgument("gradient buffer has the wrong architecture".into())),
        }
        Ok(())
    }
}

impl Params for FolNetwork {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            FolNetwork::Single(m) => m.visit(f),
            FolNetwork::Bank(b) => b.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            FolNetwork::Single(m) => m.visit_mut(f),
            FolNetwork::Bank(b) => b.visit_mut(f),
        }
    }
}

/// A network plus everything needed to turn an input vector into a field.
#[derive(Clone, Debug, PartialEq)]
pub struct FolModel {
    pub config: FolConfig,
    pub network: FolNetwork,
    /// Template for Fourier-coefficient inputs (frequencies, β, bounds).
    pub fourier: Option<FourierSpec>,
}

impl FolModel {
    pub fn init(config: &FolConfig, problem: &FolProblem, fourier: Option<FourierSpec>) -> Result<Self> {
        config.validate()?;
        let n_in = match config.encoding {
            InputEncoding::NodalE => problem.mesh.n_nodes(),
            InputEncoding::FourierCoeffs => {
                let spec = fourier
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("Fourier encoding needs a FourierSpec".into()))?;
                spec.validate()?;
                spec.n_coeffs()
            }
        };
        let n_out = problem.n_outputs(config.mode);
        if n_out == 0 {
            return Err(Error::InvalidArgument("no free outputs to learn".into()));
        }
        let network = match config.architecture {
            Architecture::SingleNet => {
                let mut sizes = vec![n_in];
                sizes.extend_from_slice(&config.hidden);
                sizes.push(n_out);
                FolNetwork::Single(Mlp::init(&sizes, config.activation, config.seed)?)
            }
            Architecture::SubnetBank => FolNetwork::Bank(SubnetBank::init(
                n_in,
                &config.hidden,
                n_out,
                config.activation,
                config.seed,
            )?),
        };
        Ok(FolModel { config: config.clone(), network, fourier })
    }

    /// Nodal moduli described by an input vector.
    pub fn elasticity(&self, problem: &FolProblem, input: &[f64]) -> Result<ElasticityField> {
        if input.len() != self.network.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.network.n_inputs(), got: input.len() });
        }
        match self.config.encoding {
            InputEncoding::NodalE => Ok(ElasticityField::new(input.to_vec(), problem.nu())),
            InputEncoding::FourierCoeffs => {
                let spec = self.fourier.as_ref().expect("checked at init").with_coeffs(input.to_vec());
                fourier_field(&spec, &problem.mesh, problem.nu())
            }
        }
    }

    pub fn predict_u(&self, problem: &FolProblem, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.network.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.network.n_inputs(), got: input.len() });
        }
        let x = DMatrix::from_column_slice(input.len(), 1, input) * self.config.input_scale;
        let y = self.network.predict_batch(&x)?;
        Ok(problem.assemble_u(self.config.mode, y.as_slice()))
    }

    /// Displacements and recovered stresses for one input.
    pub fn predict(&self, problem: &FolProblem, input: &[f64]) -> Result<SolutionField> {
        let field = self.elasticity(problem, input)?;
        let u = self.predict_u(problem, input)?;
        let stress = recover_stress(&problem.mesh, &field, &u)?;
        Ok(SolutionField { dim: problem.mesh.dim(), u, stress })
    }

    /// Mean loss over a batch and the gradient of that mean with respect to
    /// all parameters. `inputs` and `e_fields` are paired per sample.
    pub fn loss_and_gradient(
        &self,
        problem: &FolProblem,
        inputs: &[&[f64]],
        e_fields: &[&[f64]],
        ids: &[u64],
    ) -> Result<(LossBreakdown, FolNetwork)> {
        let mut grads = self.network.zeros_like();
        let loss = self.loss_and_gradient_into(problem, inputs, e_fields, ids, &mut grads)?;
        Ok((loss, grads))
    }

    /// [`FolModel::loss_and_gradient`] writing into a reusable buffer.
    pub fn loss_and_gradient_into(
        &self,
        problem: &FolProblem,
        inputs: &[&[f64]],
        e_fields: &[&[f64]],
        ids: &[u64],
        grads: &mut FolNetwork,
    ) -> Result<LossBreakdown> {
        let n_in = self.network.n_inputs();
        let bsz = inputs.len();
        let mut x = DMatrix::zeros(n_in, bsz);
        for (j, inp) in inputs.iter().enumerate() {
            if inp.len() != n_in {
                return Err(Error::DimensionMismatch { expected: n_in, got: inp.len() });
            }
            x.column_mut(j).copy_from_slice(inp);
        }
        if self.config.input_scale != 1.0 {
            x *= self.config.input_scale;
        }
        let mode = self.config.mode;
        let a_b = self.config.a_b;
        let mut mean = LossBreakdown::default();
        self.network.forward_backward(&x, grads, |y| {
            let mut dy = DMatrix::zeros(y.nrows(), bsz);
            let scale = 1.0 / bsz as f64;
            for j in 0..bsz {
                let u = problem.assemble_u(mode, y.column(j).as_slice());
                let (loss, g) = fol_loss(problem, e_fields[j], &u, mode, a_b)?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss { sample: ids[j] });
                }
                mean.add_scaled(&loss, scale);
                let mut col = dy.column_mut(j);
                match mode {
                    BcMode::SoftBc => {
                        for (c, gi) in col.iter_mut().zip(&g) {
                            *c = gi * scale;
                        }
                    }
                    BcMode::HardBc => {
                        for (c, &d) in col.iter_mut().zip(problem.dofs.free_dofs()) {
                            *c = g[d] * scale;
                        }
                    }
                }
            }
            Ok(dy)
        })?;
        Ok(mean)
    }
}

/// Model, optimizer state and history; training can be resumed from any
/// epoch boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FolTrainer {
    pub model: FolModel,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub history: Vec<LossBreakdown>,
}

/// Training inputs with their nodal moduli precomputed.
pub struct FolDataset {
    pub ids: Vec<u64>,
    pub inputs: Vec<Vec<f64>>,
    pub e_fields: Vec<Vec<f64>>,
}

impl FolDataset {
    pub fn from_samples(model: &FolModel, problem: &FolProblem, samples: &SampleSet) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        let expected = match model.config.encoding {
            InputEncoding::NodalE => SampleKind::Field,
            InputEncoding::FourierCoeffs => SampleKind::Fourier,
        };
        if samples.kind != expected {
            return Err(Error::InvalidArgument(format!(
                "{:?} samples do not fit {:?} encoding",
                samples.kind, model.config.encoding
            )));
        }
        let mut ds = FolDataset { ids: vec![], inputs: vec![], e_fields: vec![] };
        for s in &samples.samples {
            let field = model.elasticity(problem, &s.values)?;
            ds.ids.push(s.id);
            ds.inputs.push(s.values.clone());
            ds.e_fields.push(field.e);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4500;

impl FolTrainer {
    pub fn new(model: FolModel) -> Self {
        let adam = AdamState::for_params(&model.network);
        FolTrainer { model, adam, epochs_done: 0, history: Vec::new() }
    }

    /// Visiting order of the samples in a given epoch.
    pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ SHUFFLE_STREAM, epoch as u64));
        order.shuffle(&mut rng);
        order
    }

    /// Run `epochs` more epochs; `on_epoch` sees each finished epoch's mean loss.
    pub fn train(
        &mut self,
        problem: &FolProblem,
        data: &FolDataset,
        epochs: usize,
        mut on_epoch: impl FnMut(usize, &LossBreakdown),
    ) -> Result<()> {
        let bs = self.model.config.batch_size;
        if bs > data.len() {
            return Err(Error::InvalidArgument(format!(
                "batch_size {bs} exceeds sample count {}",
                data.len()
            )));
        }
        let lr = self.model.config.learning_rate;
        let mut grads = self.model.network.zeros_like();
        let mut flat = Vec::with_capacity(self.adam.m.len());
        for _ in 0..epochs {
            let order = Self::epoch_order(self.model.config.seed, self.epochs_done, data.len());
            let mut epoch_loss = LossBreakdown::default();
            for batch in order.chunks(bs) {
                let inputs: Vec<&[f64]> = batch.iter().map(|&i| data.inputs[i].as_slice()).collect();
                let fields: Vec<&[f64]> = batch.iter().map(|&i| data.e_fields[i].as_slice()).collect();
                let ids: Vec<u64> = batch.iter().map(|&i| data.ids[i]).collect();
                let loss = self.model.loss_and_gradient_into(problem, &inputs, &fields, &ids, &mut grads)?;
                grads.flatten_into(&mut flat);
                adam_step_flat(&mut self.model.network, &flat, &mut self.adam, lr)?;
                epoch_loss.add_scaled(&loss, batch.len() as f64 / data.len() as f64);
            }
            self.epochs_done += 1;
            self.history.push(epoch_loss);
            on_epoch(self.epochs_done, &epoch_loss);
        }
        Ok(())
    }
}

/// Serialized network, row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NetworkRecord {
    Single { net: MlpRecord },
    Bank { subnets: Vec<MlpRecord> },
}

impl From<&FolNetwork> for NetworkRecord {
    fn from(n: &FolNetwork) -> Self {
        match n {
            FolNetwork::Single(m) => NetworkRecord::Single { net: m.into() },
            FolNetwork::Bank(b) => NetworkRecord::Bank { subnets: b.subnets().iter().map(MlpRecord::from).collect() },
        }
    }
}

impl TryFrom<&NetworkRecord> for FolNetwork {
    type Error = Error;

    fn try_from(r: &NetworkRecord) -> Result<Self> {
        Ok(match r {
            NetworkRecord::Single { net } => FolNetwork::Single(net.try_into()?),
            NetworkRecord::Bank { subnets } => {
                let nets = subnets.iter().map(Mlp::try_from).collect::<Result<Vec<_>>>()?;
                FolNetwork::Bank(SubnetBank::from_subnets(&nets)?)
            }
        })
    }
}
