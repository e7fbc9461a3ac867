//! Data-driven DeepONet baseline: a branch net over nodal moduli and a trunk
//! net over coordinates, combined per displacement component by dot products
//! over equal-length slices of their final layers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fol::FolTrainer;
use crate::mesh::Mesh;
use crate::microstructure::{sample_seed, ElasticityField};
use crate::neural::{adam_step, Activation, AdamState, Mlp, MlpRecord, Params};
use crate::solver::{recover_stress, SolutionField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepOnetConfig {
    /// Hidden widths shared by branch and trunk.
    pub hidden: Vec<usize>,
    /// Latent width per displacement component.
    pub p: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DeepOnetConfig {
    /// Six hidden layers of 20, final width 20 (p = 10), swish, lr 5e-4,
    /// batch 100, 4000 epochs.
    fn default() -> Self {
        DeepOnetConfig {
            hidden: vec![20; 6],
            p: 10,
            activation: Activation::Swish,
            batch_size: 100,
            epochs: 4000,
            learning_rate: 5e-4,
            seed: 0,
        }
    }
}

impl DeepOnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("p and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnet {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub p: usize,
    /// Number of displacement components (2 or 3).
    pub dim: usize,
}

/// Mean squared error of one batch, total and per displacement component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetLoss {
    pub total: f64,
    pub components: Vec<f64>,
}

impl DeepOnet {
    pub fn init(config: &DeepOnetConfig, n_sensors: usize, dim: usize) -> Result<Self> {
        config.validate()?;
        let width = dim * config.p;
        let sizes = |n_in: usize| {
            let mut s = vec![n_in];
            s.extend_from_slice(&config.hidden);
            s.push(width);
            s
        };
        Ok(DeepOnet {
            branch: Mlp::init(&sizes(n_sensors), config.activation, sample_seed(config.seed, 0))?,
            trunk: Mlp::init(&sizes(dim), config.activation, sample_seed(config.seed, 1))?,
            p: config.p,
            dim,
        })
    }

    pub fn from_parts(branch: Mlp, trunk: Mlp, p: usize) -> Result<Self> {
        let dim = trunk.n_inputs();
        if branch.n_outputs() != dim * p || trunk.n_outputs() != dim * p || p == 0 {
            return Err(Error::InvalidArgument(format!(
                "branch/trunk outputs ({}, {}) must both equal {dim}·p = {}",
                branch.n_outputs(),
                trunk.n_outputs(),
                dim * p
            )));
        }
        Ok(DeepOnet { branch, trunk, p, dim })
    }

    pub fn n_sensors(&self) -> usize {
        self.branch.n_inputs()
    }

    /// Displacement components at one coordinate.
    pub fn eval(&self, e_values: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let b = self.branch.predict_batch(&DMatrix::from_column_slice(e_values.len(), 1, e_values))?;
        let t = self.trunk.predict_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok((0..self.dim)
            .map(|c| (c * self.p..(c + 1) * self.p).map(|k| b[k] * t[k]).sum())
            .collect())
    }

    fn trunk_input(mesh: &Mesh) -> DMatrix<f64> {
        DMatrix::from_column_slice(mesh.dim(), mesh.n_nodes(), mesh.coords())
    }

    /// Interleaved nodal displacements on every mesh node.
    pub fn predict_u(&self, mesh: &Mesh, e_values: &[f64]) -> Result<Vec<f64>> {
        if mesh.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: mesh.dim() });
        }
        let b = self.branch.predict_batch(&DMatrix::from_column_slice(e_values.len(), 1, e_values))?;
        let t = self.trunk.predict_batch(&Self::trunk_input(mesh))?;
        let mut u = vec![0.0; mesh.n_dofs()];
        for j in 0..mesh.n_nodes() {
            for c in 0..self.dim {
                u[j * self.dim + c] = (c * self.p..(c + 1) * self.p).map(|k| b[k] * t[(k, j)]).sum();
            }
        }
        Ok(u)
    }

    pub fn predict(&self, mesh: &Mesh, field: &ElasticityField) -> Result<SolutionField> {
        let u = self.predict_u(mesh, &field.e)?;
        let stress = recover_stress(mesh, field, &u)?;
        Ok(SolutionField { dim: mesh.dim(), u, stress })
    }

    /// Mean over samples and nodes of the summed squared component errors,
    /// with gradients for branch and trunk.
    pub fn loss_and_gradient(
        &self,
        mesh: &Mesh,
        e_fields: &[&[f64]],
        targets: &[&[f64]],
    ) -> Result<(DeepOnetLoss, DeepOnet)> {
        let bsz = e_fields.len();
        let n = mesh.n_nodes();
        let n_s = self.n_sensors();
        let mut xb = DMatrix::zeros(n_s, bsz);
        for (i, e) in e_fields.iter().enumerate() {
            if e.len() != n_s {
                return Err(Error::DimensionMismatch { expected: n_s, got: e.len() });
            }
            if targets[i].len() != n * self.dim {
                return Err(Error::DimensionMismatch { expected: n * self.dim, got: targets[i].len() });
            }
            xb.column_mut(i).copy_from_slice(e);
        }
        let (b, btape) = self.branch.forward_batch(&xb)?;
        let (t, ttape) = self.trunk.forward_batch(&Self::trunk_input(mesh))?;
        let scale = 1.0 / (bsz * n) as f64;
        let mut loss = DeepOnetLoss { total: 0.0, components: vec![0.0; self.dim] };
        let mut db = DMatrix::zeros(b.nrows(), bsz);
        let mut dt = DMatrix::zeros(t.nrows(), n);
        for c in 0..self.dim {
            let bc = b.rows(c * self.p, self.p);
            let tc = t.rows(c * self.p, self.p);
            // pred[i, j] for sample i, node j.
            let mut r = bc.tr_mul(&tc);
            for i in 0..bsz {
                for j in 0..n {
                    r[(i, j)] -= targets[i][j * self.dim + c];
                }
            }
            let sq = r.norm_squared() * scale;
            loss.components[c] = sq;
            loss.total += sq;
            r *= 2.0 * scale;
            db.rows_mut(c * self.p, self.p).copy_from(&(tc * r.transpose()));
            dt.rows_mut(c * self.p, self.p).copy_from(&(bc * &r));
        }
        let grads = DeepOnet {
            branch: self.branch.backward(&btape, &db)?,
            trunk: self.trunk.backward(&ttape, &dt)?,
            p: self.p,
            dim: self.dim,
        };
        Ok((loss, grads))
    }
}

impl Params for DeepOnet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.branch.visit(f);
        self.trunk.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.branch.visit_mut(f);
        self.trunk.visit_mut(f);
    }
}

/// Paired inputs and FEM displacements.
#[derive(Clone, Debug, Default)]
pub struct DeepOnetDataset {
    pub ids: Vec<u64>,
    pub e_fields: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl DeepOnetDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnetTrainer {
    pub config: DeepOnetConfig,
    pub net: DeepOnet,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub history: Vec<DeepOnetLoss>,
}

impl DeepOnetTrainer {
    pub fn new(config: DeepOnetConfig, net: DeepOnet) -> Self {
        let adam = AdamState::for_params(&net);
        DeepOnetTrainer { config, net, adam, epochs_done: 0, history: Vec::new() }
    }

    pub fn train(
        &mut self,
        mesh: &Mesh,
        data: &DeepOnetDataset,
        epochs: usize,
        mut on_epoch: impl FnMut(usize, &DeepOnetLoss),
    ) -> Result<()> {
        let bs = self.config.batch_size;
        if data.is_empty() || bs > data.len() {
            return Err(Error::InvalidArgument(format!(
                "batch_size {bs} does not fit {} samples",
                data.len()
            )));
        }
        for _ in 0..epochs {
            let order = FolTrainer::epoch_order(self.config.seed, self.epochs_done, data.len());
            let mut epoch = DeepOnetLoss { total: 0.0, components: vec![0.0; self.net.dim] };
            for batch in order.chunks(bs) {
                let e: Vec<&[f64]> = batch.iter().map(|&i| data.e_fields[i].as_slice()).collect();
                let y: Vec<&[f64]> = batch.iter().map(|&i| data.targets[i].as_slice()).collect();
                let (loss, grads) = self.net.loss_and_gradient(mesh, &e, &y)?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss { sample: data.ids[batch[0]] });
                }
                adam_step(&mut self.net, &grads, &mut self.adam, self.config.learning_rate)?;
                let w = batch.len() as f64 / data.len() as f64;
                epoch.total += w * loss.total;
                for (a, b) in epoch.components.iter_mut().zip(&loss.components) {
                    *a += w * b;
                }
            }
            self.epochs_done += 1;
            on_epoch(self.epochs_done, &epoch);
            self.history.push(epoch);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetRecord {
    pub p: usize,
    pub branch: MlpRecord,
    pub trunk: MlpRecord,
}

impl From<&DeepOnet> for DeepOnetRecord {
    fn from(n: &DeepOnet) -> Self {
        DeepOnetRecord { p: n.p, branch: (&n.branch).into(), trunk: (&n.trunk).into() }
    }
}

impl TryFrom<&DeepOnetRecord> for DeepOnet {
    type Error = Error;

    fn try_from(r: &DeepOnetRecord) -> Result<Self> {
        DeepOnet::from_parts((&r.branch).try_into()?, (&r.trunk).try_into()?, r.p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Layer;
    use nalgebra::DVector;

    fn small() -> DeepOnet {
        let cfg = DeepOnetConfig { hidden: vec![5, 4], p: 2, seed: 3, ..Default::default() };
        DeepOnet::init(&cfg, 9, 2).unwrap()
    }

    #[test]
    fn zero_branch_gives_zero_output() {
        let mut net = small();
        net.branch.visit_mut(&mut |s| s.fill(0.0));
        assert_eq!(net.eval(&[0.5; 9], &[0.3, 0.7]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dot_product_arithmetic() {
        let constant = |vals: &[f64], n_in: usize| Mlp {
            layers: vec![Layer {
                weights: DMatrix::zeros(2, n_in),
                bias: DVector::from_column_slice(vals),
                activation: Activation::Linear,
            }],
        };
        let net = DeepOnet::from_parts(constant(&[2.0, 3.0], 4), constant(&[0.5, -1.0], 2), 1).unwrap();
        assert_eq!(net.eval(&[1.0; 4], &[0.0, 0.0]).unwrap(), vec![1.0, -3.0]);
    }

    #[test]
    fn matches_naive_double_loop() {
        let net = small();
        let e: Vec<f64> = (0..9).map(|i| 0.1 + 0.1 * i as f64).collect();
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let u = net.predict_u(&mesh, &e).unwrap();
        for j in 0..9 {
            let b = net.branch.forward(&e).unwrap().0;
            let t = net.trunk.forward(mesh.node(j)).unwrap().0;
            for c in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += b[c * 2 + k] * t[c * 2 + k];
                }
                assert!((u[j * 2 + c] - s).abs() <= 1e-14 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_in_branch_output() {
        let net = small();
        let mut scaled = net.clone();
        let last = scaled.branch.layers.last_mut().unwrap();
        last.weights *= 3.0;
        last.bias *= 3.0;
        let a = net.eval(&[0.4; 9], &[0.2, 0.9]).unwrap();
        let b = scaled.eval(&[0.4; 9], &[0.2, 0.9]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - 3.0 * x).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = small();
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let e1: Vec<f64> = (0..9).map(|i| 0.1 + 0.1 * i as f64).collect();
        let e2: Vec<f64> = (0..9).map(|i| 1.0 - 0.1 * i as f64).collect();
        let y1: Vec<f64> = (0..18).map(|i| 0.01 * i as f64).collect();
        let y2: Vec<f64> = (0..18).map(|i| -0.02 * (i % 5) as f64).collect();
        let es = [e1.as_slice(), e2.as_slice()];
        let ys = [y1.as_slice(), y2.as_slice()];
        let (_, g) = net.loss_and_gradient(&mesh, &es, &ys).unwrap();
        let analytic = g.flatten();
        let base = net.flatten();
        let mut probe = net.clone();
        let h = 1e-6;
        let gmax = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..base.len() {
            let mut th = base.clone();
            th[i] += h;
            probe.set_flat(&th);
            let fp = probe.loss_and_gradient(&mesh, &es, &ys).unwrap().0.total;
            th[i] -= 2.0 * h;
            probe.set_flat(&th);
            let fm = probe.loss_and_gradient(&mesh, &es, &ys).unwrap().0.total;
            let fd = (fp - fm) / (2.0 * h);
            let scale = analytic[i].abs().max(1e-3 * gmax);
            assert!((fd - analytic[i]).abs() <= 1e-5 * scale, "param {i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn memorizes_one_sample() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let cfg = DeepOnetConfig { hidden: vec![10, 10], p: 4, batch_size: 1, learning_rate: 2e-3, seed: 1, ..Default::default() };
        let net = DeepOnet::init(&cfg, 9, 2).unwrap();
        let target: Vec<f64> = (0..9).flat_map(|j| {
            let x = mesh.node(j);
            [0.05 * x[0], 0.02 * x[0] * x[1]]
        }).collect();
        let data = DeepOnetDataset { ids: vec![0], e_fields: vec![vec![0.5; 9]], targets: vec![target] };
        let mut t = DeepOnetTrainer::new(cfg, net);
        t.train(&mesh, &data, 3000, |_, _| {}).unwrap();
        let last = t.history.last().unwrap().total;
        assert!(last < 1e-6, "final mse {last}");
    }

    #[test]
    fn same_seed_same_history() {
        let mesh = Mesh::structured_grid(3, 1.0).unwrap();
        let cfg = DeepOnetConfig { hidden: vec![6], p: 2, batch_size: 2, seed: 5, ..Default::default() };
        let data = DeepOnetDataset {
            ids: vec![0, 1, 2],
            e_fields: (0..3).map(|i| vec![0.2 + 0.2 * i as f64; 9]).collect(),
            targets: (0..3).map(|i| vec![0.01 * i as f64; 18]).collect(),
        };
        let run = || {
            let mut t = DeepOnetTrainer::new(cfg.clone(), DeepOnet::init(&cfg, 9, 2).unwrap());
            t.train(&mesh, &data, 5, |_, _| {}).unwrap();
            t
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn record_round_trip() {
        let net = small();
        assert_eq!(DeepOnet::try_from(&DeepOnetRecord::from(&net)).unwrap(), net);
    }
}
