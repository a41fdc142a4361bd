//! Small dense networks with exact reverse-mode gradients and Adam.
//!
//! Batches are row-major `batch x dim` slices. A [`Tape`] records the
//! activations of one forward pass and is bound to the parameter generation
//! it was computed with; backpropagating it after the parameters changed is
//! an error.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `k * tanh(z)`.
    TanhScaled { k: f64 },
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::TanhScaled { k } => k * z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::TanhScaled { k } => {
                let t = a / k;
                k * (1.0 - t * t)
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(n_in: usize, n_out: usize, activation: Activation, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if w.len() != n_in * n_out || b.len() != n_out {
            return Err(Error::Shape(format!(
                "layer {n_in}->{n_out} needs {} weights and {n_out} biases, got {} and {}",
                n_in * n_out,
                w.len(),
                b.len()
            )));
        }
        Ok(Self {
            n_in,
            n_out,
            activation,
            w,
            b,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations of one forward pass. `acts[0]` is the input batch and
/// `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Tape {
    net_id: u64,
    generation: u64,
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// `[w0, b0, w1, b1, ...]`, the order used by [`DenseNet::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.w
            .iter()
            .zip(&self.b)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.w
            .iter_mut()
            .zip(self.b.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].n_out, pair[1].n_in
                )));
            }
        }
        let net = Self {
            layers,
            id: fresh_id(),
            generation: 0,
        };
        net.check_finite()?;
        Ok(net)
    }

    /// Seeded network over `dims`, one activation per layer. He-uniform for
    /// ReLU layers, Xavier-uniform otherwise, zero biases.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &act) in activations.iter().enumerate() {
            let (n_in, n_out) = (dims[i], dims[i + 1]);
            let bound = match act {
                Activation::Relu => (6.0 / n_in as f64).sqrt(),
                _ => (6.0 / (n_in + n_out) as f64).sqrt(),
            };
            let w = (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(Layer::new(n_in, n_out, act, w, vec![0.0; n_out])?);
        }
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite())) {
            Ok(())
        } else {
            Err(Error::Optim("non-finite network parameter".into()))
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.num_params(), p.len())));
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x = it.next().unwrap_or(0.0));
        }
        self.generation += 1;
        Ok(())
    }

    /// Mutable access to `[w0, b0, w1, b1, ...]`; invalidates outstanding tapes.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }

    /// Forward pass over a row-major batch.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Tape> {
        let n_in = self.input_dim();
        if batch == 0 || x.len() != batch * n_in {
            return Err(Error::Shape(format!(
                "input of length {} is not a batch of {batch} x {n_in}",
                x.len()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let input = acts.last().expect("non-empty");
            let mut out = vec![0.0; batch * l.n_out];
            for bi in 0..batch {
                let row = &input[bi * l.n_in..(bi + 1) * l.n_in];
                let orow = &mut out[bi * l.n_out..(bi + 1) * l.n_out];
                for (o, y) in orow.iter_mut().enumerate() {
                    let z = dot(&l.w[o * l.n_in..(o + 1) * l.n_in], row) + l.b[o];
                    *y = l.activation.apply(z);
                }
            }
            acts.push(out);
        }
        Ok(Tape {
            net_id: self.id,
            generation: self.generation,
            batch,
            acts,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let tape = self.forward_batch(x, 1)?;
        Ok((tape.output().to_vec(), tape))
    }

    /// Output only, without keeping a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Gradients of all parameters and of the input batch, given the
    /// upstream gradient with respect to the output batch.
    pub fn backward(&self, tape: &Tape, dy: &[f64]) -> Result<(Grads, Vec<f64>)> {
        if tape.net_id != self.id || tape.generation != self.generation {
            return Err(Error::Tape("tape was recorded against different parameters".into()));
        }
        let batch = tape.batch;
        if dy.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, expected {}",
                dy.len(),
                batch * self.output_dim()
            )));
        }
        let mut grads = Grads::zeros_like(self);
        let mut upstream = dy.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let input = &tape.acts[li];
            let output = &tape.acts[li + 1];
            let dz: Vec<f64> = upstream
                .iter()
                .zip(output)
                .map(|(g, &a)| g * l.activation.grad_from_output(a))
                .collect();
            let gw = &mut grads.w[li];
            let gb = &mut grads.b[li];
            let mut dx = vec![0.0; batch * l.n_in];
            for bi in 0..batch {
                let row = &input[bi * l.n_in..(bi + 1) * l.n_in];
                let dxrow = &mut dx[bi * l.n_in..(bi + 1) * l.n_in];
                for o in 0..l.n_out {
                    let g = dz[bi * l.n_out + o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    axpy(g, row, &mut gw[o * l.n_in..(o + 1) * l.n_in]);
                    axpy(g, &l.w[o * l.n_in..(o + 1) * l.n_in], dxrow);
                }
            }
            upstream = dx;
        }
        Ok((grads, upstream))
    }

    pub fn adam_step(&mut self, opt: &mut Adam, grads: &Grads) -> Result<()> {
        let g = grads.tensors();
        let mut p = self.tensors_mut();
        opt.step(&mut p, &g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: each step also applies `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![],
            v: vec![],
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One update of `params` in place. Moments are allocated on first use
    /// and must keep the same shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape("parameter and gradient shapes differ".into()));
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Optim("non-finite gradient".into()));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * weight_decay * p[i];
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// On-disk form of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub net: DenseNet,
    pub optimizer: Option<Adam>,
    pub seed: u64,
    pub config_hash: String,
}

impl NetCheckpoint {
    pub fn new(net: &DenseNet, optimizer: Option<&Adam>, seed: u64, config_hash: &str) -> Self {
        Self {
            dims: net.dims(),
            activations: net.layers().iter().map(|l| l.activation).collect(),
            net: net.clone(),
            optimizer: optimizer.cloned(),
            seed,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: NetCheckpoint = serde_json::from_str(s)?;
        let net = DenseNet::from_layers(ck.net.layers.clone())?;
        if net.dims() != ck.dims {
            return Err(Error::Shape("checkpoint dims disagree with its layers".into()));
        }
        Ok(Self { net, ..ck })
    }
}
