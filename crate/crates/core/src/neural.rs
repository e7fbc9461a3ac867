//! Dense feed-forward networks with batched forward/backward passes and Adam.
//!
//! Batches are column-major: an input batch is an `n_inputs × batch` matrix and
//! every layer maps `z = W a + b` column by column. Gradients come back in the
//! same shape as the parameters (an [`Mlp`] or [`SubnetBank`] of derivatives),
//! summed over the batch.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::{sample_seed, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
    /// `x·σ(x)`.
    Swish,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Swish => x * sigmoid(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
        }
    }
}

/// Visits parameter buffers in a fixed order; Adam and checkpointing rely on it.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.flatten_into(&mut out);
        out
    }

    /// Refills `out`, reusing its allocation.
    fn flatten_into(&self, out: &mut Vec<f64>) {
        out.clear();
        self.visit(&mut |s| out.extend_from_slice(s));
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `outputs × inputs`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Fully connected network; the last layer is linear unless built otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// `inputs[l]` feeds layer `l` (so `inputs[0]` is the network input).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<DMatrix<f64>>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> DMatrix<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    // Row-major fill so the draw order matches the checkpoint layout.
    let vals: Vec<f64> = (0..fan_out * fan_in).map(|_| rng.gen_range(-limit..limit)).collect();
    DMatrix::from_row_slice(fan_out, fan_in, &vals)
}

impl Mlp {
    /// Glorot-uniform weights and zero biases; `activation` on hidden layers,
    /// linear output.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = layer_sizes.len() - 1;
        let layers = (0..n)
            .map(|l| Layer {
                weights: glorot(&mut rng, layer_sizes[l + 1], layer_sizes[l]),
                bias: DVector::zeros(layer_sizes[l + 1]),
                activation: if l + 1 == n { Activation::Linear } else { activation },
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.n_inputs()];
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        sizes
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let (y, tape) = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok((y.as_slice().to_vec(), tape))
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tape)> {
        if x.nrows() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: x.nrows() });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = &layer.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let out = z.map(|v| layer.activation.apply(v));
            inputs.push(std::mem::replace(&mut a, out));
            pre.push(z);
        }
        Ok((a, Tape { inputs, pre }))
    }

    /// Output only, without keeping a tape.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: x.nrows() });
        }
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = &layer.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            z.apply(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(a)
    }

    /// Parameter gradients summed over the batch, given `dL/dy` per column.
    pub fn backward(&self, tape: &Tape, dl_dy: &DMatrix<f64>) -> Result<Mlp> {
        Ok(self.backward_with_input_grad(tape, dl_dy, false)?.0)
    }

    /// Like [`Mlp::backward`], optionally also returning `dL/dx`.
    pub fn backward_with_input_grad(
        &self,
        tape: &Tape,
        dl_dy: &DMatrix<f64>,
        want_input_grad: bool,
    ) -> Result<(Mlp, Option<DMatrix<f64>>)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(tape, dl_dy, &mut grads, want_input_grad)?;
        Ok((grads, dx))
    }

    /// Overwrites `grads` (shaped like `self`) with the parameter gradients.
    pub fn backward_into(
        &self,
        tape: &Tape,
        dl_dy: &DMatrix<f64>,
        grads: &mut Mlp,
        want_input_grad: bool,
    ) -> Result<Option<DMatrix<f64>>> {
        if tape.pre.len() != self.layers.len()
            || tape.pre.iter().zip(&self.layers).any(|(z, l)| z.nrows() != l.weights.nrows())
        {
            return Err(Error::StaleTape("tape does not match network layout".into()));
        }
        let batch = tape.inputs[0].ncols();
        if dl_dy.nrows() != self.n_outputs() || dl_dy.ncols() != batch {
            return Err(Error::StaleTape(format!(
                "output gradient is {}×{}, expected {}×{batch}",
                dl_dy.nrows(),
                dl_dy.ncols(),
                self.n_outputs()
            )));
        }
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| g.weights.shape() != l.weights.shape())
        {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: grads.n_params() });
        }
        let mut delta = dl_dy.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Linear {
                delta.zip_apply(&tape.pre[l], |d, z| *d *= layer.activation.derivative(z));
            }
            let g = &mut grads.layers[l];
            g.weights.gemm(1.0, &delta, &tape.inputs[l].transpose(), 0.0);
            g.bias.fill(0.0);
            for col in delta.column_iter() {
                g.bias += col;
            }
            if l > 0 || want_input_grad {
                delta = layer.weights.tr_mul(&delta);
            }
        }
        Ok(want_input_grad.then_some(delta))
    }
}

impl Params for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weights.as_slice());
            f(l.bias.as_slice());
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.weights.as_mut_slice());
            f(l.bias.as_mut_slice());
        }
    }
}

/// One independent scalar-output network per output, all reading the same input.
///
/// Stored stacked for speed: the first layers of all subnets form one
/// `(S·h1) × n_in` matrix, and every later layer is block diagonal with one
/// `h_out × h_in` block per subnet.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnetBank {
    n_inputs: usize,
    n_subnets: usize,
    /// Hidden widths followed by the scalar output (always 1).
    widths: Vec<usize>,
    activation: Activation,
    first_w: DMatrix<f64>,
    first_b: DVector<f64>,
    /// Per later layer: column-major blocks, `S × h_out × h_in` values.
    block_w: Vec<Vec<f64>>,
    block_b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct BankTape {
    input: DMatrix<f64>,
    /// Pre-activations per layer (first layer then blocks), `S·h × batch`.
    pre: Vec<DMatrix<f64>>,
    /// Post-activations per layer.
    post: Vec<DMatrix<f64>>,
}

impl SubnetBank {
    /// `n_subnets` networks `n_inputs → hidden… → 1`, subnet `s` initialised
    /// exactly like `Mlp::init` with a seed derived from `(seed, s)`.
    pub fn init(
        n_inputs: usize,
        hidden: &[usize],
        n_subnets: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if hidden.is_empty() || n_subnets == 0 {
            return Err(Error::InvalidArgument("subnet bank needs hidden layers and subnets".into()));
        }
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let subnets = (0..n_subnets as u64)
            .map(|s| Mlp::init(&sizes, activation, sample_seed(seed, s)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_subnets(&subnets)
    }

    pub fn from_subnets(subnets: &[Mlp]) -> Result<Self> {
        let first = subnets.first().ok_or(Error::InvalidArgument("no subnets".into()))?;
        let sizes = first.layer_sizes();
        if sizes.len() < 3 || *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("subnets need ≥1 hidden layer and scalar output".into()));
        }
        let activation = first.layers[0].activation;
        for s in subnets {
            if s.layer_sizes() != sizes
                || s.layers[..s.layers.len() - 1].iter().any(|l| l.activation != activation)
                || s.layers.last().unwrap().activation != Activation::Linear
            {
                return Err(Error::InvalidArgument("subnets must share one layout".into()));
            }
        }
        let n_subnets = subnets.len();
        let h1 = sizes[1];
        let mut first_w = DMatrix::zeros(n_subnets * h1, sizes[0]);
        let mut first_b = DVector::zeros(n_subnets * h1);
        for (s, net) in subnets.iter().enumerate() {
            first_w.rows_mut(s * h1, h1).copy_from(&net.layers[0].weights);
            first_b.rows_mut(s * h1, h1).copy_from(&net.layers[0].bias);
        }
        let mut block_w = Vec::new();
        let mut block_b = Vec::new();
        for l in 1..sizes.len() - 1 {
            let mut w = Vec::with_capacity(n_subnets * sizes[l] * sizes[l + 1]);
            let mut b = Vec::with_capacity(n_subnets * sizes[l + 1]);
            for net in subnets {
                w.extend_from_slice(net.layers[l].weights.as_slice());
                b.extend_from_slice(net.layers[l].bias.as_slice());
            }
            block_w.push(w);
            block_b.push(b);
        }
        Ok(SubnetBank {
            n_inputs: sizes[0],
            n_subnets,
            widths: sizes[1..].to_vec(),
            activation,
            first_w,
            first_b,
            block_w,
            block_b,
        })
    }

    pub fn subnet(&self, s: usize) -> Mlp {
        let h1 = self.widths[0];
        let mut layers = vec![Layer {
            weights: self.first_w.rows(s * h1, h1).into_owned(),
            bias: self.first_b.rows(s * h1, h1).into_owned(),
            activation: self.activation,
        }];
        for (l, (w, b)) in self.block_w.iter().zip(&self.block_b).enumerate() {
            let (hi, ho) = (self.widths[l], self.widths[l + 1]);
            let last = l + 2 == self.widths.len();
            layers.push(Layer {
                weights: DMatrix::from_column_slice(ho, hi, &w[s * ho * hi..(s + 1) * ho * hi]),
                bias: DVector::from_column_slice(&b[s * ho..(s + 1) * ho]),
                activation: if last { Activation::Linear } else { self.activation },
            });
        }
        Mlp { layers }
    }

    pub fn subnets(&self) -> Vec<Mlp> {
        (0..self.n_subnets).map(|s| self.subnet(s)).collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_subnets
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[..self.widths.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |s| s.fill(0.0));
        z
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, BankTape)> {
        if x.nrows() != self.n_inputs {
            return Err(Error::DimensionMismatch { expected: self.n_inputs, got: x.nrows() });
        }
        let batch = x.ncols();
        let mut z = &self.first_w * x;
        for mut col in z.column_iter_mut() {
            col += &self.first_b;
        }
        let mut pre = Vec::with_capacity(self.widths.len());
        let mut post = Vec::with_capacity(self.widths.len());
        let a = z.map(|v| self.activation.apply(v));
        pre.push(z);
        post.push(a);
        let n_blocks = self.block_w.len();
        for l in 0..n_blocks {
            let (hi, ho) = (self.widths[l], self.widths[l + 1]);
            let act = if l + 1 == n_blocks { Activation::Linear } else { self.activation };
            let w = &self.block_w[l];
            let b = &self.block_b[l];
            let a_prev = post.last().unwrap();
            let mut z = DMatrix::zeros(self.n_subnets * ho, batch);
            for col in 0..batch {
                let ain = a_prev.column(col);
                let mut zout = z.column_mut(col);
                for s in 0..self.n_subnets {
                    let ws = &w[s * ho * hi..(s + 1) * ho * hi];
                    let ai = &ain.as_slice()[s * hi..(s + 1) * hi];
                    for o in 0..ho {
                        zout[s * ho + o] = b[s * ho + o];
                    }
                    for (i, &av) in ai.iter().enumerate() {
                        let wcol = &ws[i * ho..(i + 1) * ho];
                        for o in 0..ho {
                            zout[s * ho + o] += wcol[o] * av;
                        }
                    }
                }
            }
            let a = z.map(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        let y = post.last().unwrap().clone();
        Ok((y, BankTape { input: x.clone(), pre, post }))
    }

    pub fn backward(&self, tape: &BankTape, dl_dy: &DMatrix<f64>) -> Result<SubnetBank> {
        let mut grads = self.zeros_like();
        self.backward_into(tape, dl_dy, &mut grads)?;
        Ok(grads)
    }

    /// Overwrites `grads` (shaped like `self`) with the parameter gradients.
    pub fn backward_into(&self, tape: &BankTape, dl_dy: &DMatrix<f64>, grads: &mut SubnetBank) -> Result<()> {
        let batch = tape.input.ncols();
        if tape.pre.len() != self.widths.len() || dl_dy.nrows() != self.n_subnets || dl_dy.ncols() != batch {
            return Err(Error::StaleTape("tape or gradient does not match the subnet bank".into()));
        }
        if grads.widths != self.widths || grads.n_subnets != self.n_subnets || grads.n_inputs != self.n_inputs {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: grads.n_params() });
        }
        for (w, b) in grads.block_w.iter_mut().zip(grads.block_b.iter_mut()) {
            w.fill(0.0);
            b.fill(0.0);
        }
        let n_blocks = self.block_w.len();
        let mut delta = dl_dy.clone();
        for l in (0..n_blocks).rev() {
            let (hi, ho) = (self.widths[l], self.widths[l + 1]);
            if l + 1 != n_blocks {
                let act = self.activation;
                delta.zip_apply(&tape.pre[l + 1], |d, z| *d *= act.derivative(z));
            }
            let a_prev = &tape.post[l];
            let w = &self.block_w[l];
            let gw = &mut grads.block_w[l];
            let gb = &mut grads.block_b[l];
            let mut d_prev = DMatrix::zeros(self.n_subnets * hi, batch);
            for col in 0..batch {
                let ain = a_prev.column(col);
                let dcol = delta.column(col);
                let mut dp = d_prev.column_mut(col);
                for s in 0..self.n_subnets {
                    let ds = &dcol.as_slice()[s * ho..(s + 1) * ho];
                    let ai = &ain.as_slice()[s * hi..(s + 1) * hi];
                    for o in 0..ho {
                        gb[s * ho + o] += ds[o];
                    }
                    for i in 0..hi {
                        let base = s * ho * hi + i * ho;
                        let mut acc = 0.0;
                        for o in 0..ho {
                            gw[base + o] += ds[o] * ai[i];
                            acc += w[base + o] * ds[o];
                        }
                        dp[s * hi + i] = acc;
                    }
                }
            }
            delta = d_prev;
        }
        let act = self.activation;
        delta.zip_apply(&tape.pre[0], |d, z| *d *= act.derivative(z));
        grads.first_w.gemm(1.0, &delta, &tape.input.transpose(), 0.0);
        grads.first_b.fill(0.0);
        for col in delta.column_iter() {
            grads.first_b += col;
        }
        Ok(())
    }
}

impl Params for SubnetBank {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.first_w.as_slice());
        f(self.first_b.as_slice());
        for (w, b) in self.block_w.iter().zip(&self.block_b) {
            f(w);
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.first_w.as_mut_slice());
        f(self.first_b.as_mut_slice());
        for (w, b) in self.block_w.iter_mut().zip(self.block_b.iter_mut()) {
            f(w);
            f(b);
        }
    }
}

/// Adam moments and hyperparameters (β1 = 0.9, β2 = 0.999, ε = 1e-8 by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn for_params<P: Params + ?Sized>(params: &P) -> Self {
        Self::new(params.n_params())
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
pub fn adam_step<P: Params + ?Sized, G: Params + ?Sized>(
    params: &mut P,
    grads: &G,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    adam_step_flat(params, &grads.flatten(), state, lr)
}

/// [`adam_step`] with the gradient already flattened in visiting order.
pub fn adam_step_flat<P: Params + ?Sized>(params: &mut P, g: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if g.len() != state.m.len() || params.n_params() != g.len() {
        return Err(Error::DimensionMismatch { expected: state.m.len(), got: g.len() });
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let step_size = lr / (1.0 - b1.powf(state.step as f64));
    let inv_sqrt_c2 = 1.0 / (1.0 - b2.powf(state.step as f64)).sqrt();
    let (m, v) = (&mut state.m, &mut state.v);
    let mut off = 0;
    params.visit_mut(&mut |p| {
        let end = off + p.len();
        for (((pk, mk), vk), &gk) in p.iter_mut().zip(&mut m[off..end]).zip(&mut v[off..end]).zip(&g[off..end]) {
            *mk = b1 * *mk + (1.0 - b1) * gk;
            *vk = b2 * *vk + (1.0 - b2) * gk * gk;
            *pk -= step_size * *mk / (vk.sqrt() * inv_sqrt_c2 + eps);
        }
        off = end;
    });
    Ok(())
}

/// Serializable layer with row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layers: Vec<LayerRecord>,
}

impl From<&Mlp> for MlpRecord {
    fn from(net: &Mlp) -> Self {
        MlpRecord {
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.weights.ncols(),
                    outputs: l.weights.nrows(),
                    activation: l.activation,
                    weights: l.weights.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<&MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: &MlpRecord) -> Result<Self> {
        let mut layers = Vec::with_capacity(rec.layers.len());
        for (i, l) in rec.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Checkpoint(format!("layer {i} has inconsistent sizes")));
            }
            if i > 0 && rec.layers[i - 1].outputs != l.inputs {
                return Err(Error::Checkpoint(format!("layer {i} does not chain")));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights),
                bias: DVector::from_column_slice(&l.bias),
                activation: l.activation,
            });
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint("network has no layers".into()));
        }
        Ok(Mlp { layers })
    }
}
