//! Small feed-forward network kernel.
//!
//! Everything is batched and row-major: a batch of `n` inputs of width `d` is a
//! flat `&[f64]` of length `n * d`. A single sample is simply a batch of one.
//! Dense products go through `matrixmultiply`; the rest is plain loops.

mod adam;
mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    compare_with_finite_differences, grad_check, relative_error, GradCheckReport, FD_STEP, REL_ERROR_FLOOR,
};
pub use tape::{GradientTape, Trace};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Checkpoint format version written by [`Mlp::to_json`].
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("output gradient length mismatch: expected {expected}, got {actual}")]
    GradientShape { expected: usize, actual: usize },
    #[error("non-finite input value at position {index}")]
    NonFiniteInput { index: usize },
    #[error("backward called without a forward cache for this network")]
    MissingForwardCache,
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("layer {layer} expects input width {expected} but previous layer produces {actual}")]
    InconsistentLayers {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer}: {what}")]
    MalformedLayer { layer: usize, what: String },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint decode failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `y`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Activation of a whole layer, either shared by every unit or chosen per unit
/// (the actor head squashes its two outputs differently).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerActivation {
    Uniform(Activation),
    PerUnit(Vec<Activation>),
}

impl LayerActivation {
    #[inline]
    pub fn of(&self, unit: usize) -> Activation {
        match self {
            LayerActivation::Uniform(a) => *a,
            LayerActivation::PerUnit(v) => v[unit],
        }
    }

    pub fn uses(&self, act: Activation) -> bool {
        match self {
            LayerActivation::Uniform(a) => *a == act,
            LayerActivation::PerUnit(v) => v.contains(&act),
        }
    }
}

/// Fully connected layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: LayerActivation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: LayerActivation,
    ) -> Result<Self> {
        let layer = Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        };
        layer.validate(0)?;
        Ok(layer)
    }

    /// Uniform(-bound, bound) initialisation of weights and biases.
    pub fn uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        bound: f64,
        activation: LayerActivation,
        rng: &mut R,
    ) -> Self {
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        }
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let bad = |what: String| Err(NnError::MalformedLayer { layer, what });
        if self.in_dim == 0 || self.out_dim == 0 {
            return bad("zero-width layer".into());
        }
        if self.weights.len() != self.in_dim * self.out_dim {
            return bad(format!(
                "weights have {} entries, expected {}",
                self.weights.len(),
                self.in_dim * self.out_dim
            ));
        }
        if self.bias.len() != self.out_dim {
            return bad(format!(
                "bias has {} entries, expected {}",
                self.bias.len(),
                self.out_dim
            ));
        }
        if let LayerActivation::PerUnit(v) = &self.activation {
            if v.len() != self.out_dim {
                return bad(format!("{} unit activations for {} units", v.len(), self.out_dim));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> &LayerActivation {
        &self.activation
    }

    /// `pre = x W^T + b`, `post = act(pre)` for a batch.
    fn forward_into(&self, x: &[f64], batch: usize, pre: &mut Vec<f64>, post: &mut Vec<f64>) {
        let (i, o) = (self.in_dim, self.out_dim);
        pre.clear();
        pre.reserve(batch * o);
        for _ in 0..batch {
            pre.extend_from_slice(&self.bias);
        }
        // pre[b, o] += sum_i x[b, i] * w[o, i]
        gemm(batch, i, o, 1.0, x, i, 1, &self.weights, 1, i, 1.0, pre, o, 1);
        post.clear();
        post.reserve(batch * o);
        match &self.activation {
            LayerActivation::Uniform(a) => post.extend(pre.iter().map(|&z| a.apply(z))),
            LayerActivation::PerUnit(acts) => post.extend(pre.iter().enumerate().map(|(k, &z)| acts[k % o].apply(z))),
        }
    }
}

/// Layer widths, hidden activation and per-unit output activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output: Vec<Activation>,
}

impl MlpShape {
    pub fn new(input_dim: usize, hidden: &[usize], hidden_activation: Activation, output: Vec<Activation>) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            hidden_activation,
            output,
        }
    }
}

/// Final-layer init bound, following the usual DDPG convention.
pub const FINAL_LAYER_INIT: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Fan-in uniform initialisation on hidden layers, `±3e-3` on the output layer.
    pub fn new<R: Rng + ?Sized>(shape: &MlpShape, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(shape.hidden.len() + 1);
        let mut width = shape.input_dim;
        for &h in &shape.hidden {
            let bound = 1.0 / (width as f64).sqrt();
            layers.push(Dense::uniform(
                width,
                h,
                bound,
                LayerActivation::Uniform(shape.hidden_activation),
                rng,
            ));
            width = h;
        }
        let head = if shape.output.iter().all(|a| *a == shape.output[0]) {
            LayerActivation::Uniform(shape.output[0])
        } else {
            LayerActivation::PerUnit(shape.output.clone())
        };
        layers.push(Dense::uniform(width, shape.output.len(), FINAL_LAYER_INIT, head, rng));
        Self { layers }
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(NnError::MalformedLayer {
                layer: 0,
                what: "network has no layers".into(),
            });
        }
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate(k)?;
            if k > 0 && layer.in_dim != self.layers[k - 1].out_dim {
                return Err(NnError::InconsistentLayers {
                    layer: k,
                    expected: layer.in_dim,
                    actual: self.layers[k - 1].out_dim,
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter blocks in canonical order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Reads parameter `index` in the flat canonical order.
    pub fn param(&self, mut index: usize) -> f64 {
        for block in self.params() {
            if index < block.len() {
                return block[index];
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for block in self.params_mut() {
            if index < block.len() {
                block[index] = value;
                return;
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }

    /// Zeroes the output layer's weights and biases.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.len() - 1;
        self.layers[last].weights.fill(0.0);
        self.layers[last].bias.fill(0.0);
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<()> {
        let expected = self.input_dim() * batch;
        if input.len() != expected || batch == 0 {
            return Err(NnError::DimensionMismatch {
                expected,
                actual: input.len(),
            });
        }
        if let Some(index) = input.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput { index });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(input, 1)
    }

    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_input(input, batch)?;
        let mut pre = Vec::new();
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, batch, &mut pre, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass that keeps every intermediate needed by [`Mlp::backward`].
    pub fn forward_trace(&self, input: &[f64], batch: usize) -> Result<Trace> {
        self.check_input(input, batch)?;
        let mut trace = Trace::new(self.layer_sizes(), batch, input.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut pre = Vec::new();
            let mut post = Vec::new();
            let x = if k == 0 { &trace.input } else { &trace.post[k - 1] };
            layer.forward_into(x, batch, &mut pre, &mut post);
            trace.pre.push(pre);
            trace.post.push(post);
        }
        Ok(trace)
    }

    /// Gradients of `sum(output * output_grad)` with respect to every parameter and
    /// the input, for the batch recorded in `trace`.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::zeros(self, trace.batch);
        self.backward_into(trace, output_grad, &mut tape, true)?;
        Ok(tape)
    }

    /// Accumulates parameter gradients into `tape`; the input gradient is
    /// overwritten when `want_input` is set and left untouched otherwise.
    pub fn backward_into(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        tape: &mut GradientTape,
        want_input: bool,
    ) -> Result<()> {
        self.backward_impl(trace, output_grad, false, tape, want_input)
    }

    /// Like [`Mlp::backward_into`], but `pre_grad` is taken with respect to the
    /// output layer's pre-activations rather than its outputs.
    pub fn backward_pre_into(
        &self,
        trace: &Trace,
        pre_grad: &[f64],
        tape: &mut GradientTape,
        want_input: bool,
    ) -> Result<()> {
        self.backward_impl(trace, pre_grad, true, tape, want_input)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        output_is_pre: bool,
        tape: &mut GradientTape,
        want_input: bool,
    ) -> Result<()> {
        if trace.is_empty() || trace.sizes != self.layer_sizes() {
            return Err(NnError::MissingForwardCache);
        }
        let batch = trace.batch;
        if output_grad.len() != batch * self.output_dim() {
            return Err(NnError::GradientShape {
                expected: batch * self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if tape.weights.len() != self.layers.len() {
            return Err(NnError::GradientShape {
                expected: self.layers.len(),
                actual: tape.weights.len(),
            });
        }
        let mut delta = output_grad.to_vec();
        let mut prev_delta = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (i, o) = (layer.in_dim, layer.out_dim);
            // dL/dz = dL/dy * act'(z)
            let pre = &trace.pre[k];
            let post = &trace.post[k];
            if !(output_is_pre && k + 1 == self.layers.len()) {
                for (idx, d) in delta.iter_mut().enumerate() {
                    let act = layer.activation.of(idx % o);
                    *d *= act.derivative(pre[idx], post[idx]);
                }
            }
            let x = if k == 0 { &trace.input } else { &trace.post[k - 1] };
            // dW[o, i] += sum_b dz[b, o] * x[b, i]
            gemm(o, batch, i, 1.0, &delta, 1, o, x, i, 1, 1.0, &mut tape.weights[k], i, 1);
            let db = &mut tape.biases[k];
            for row in delta.chunks_exact(o) {
                for (acc, d) in db.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            if k > 0 || want_input {
                // dx[b, i] = sum_o dz[b, o] * w[o, i]
                prev_delta.clear();
                prev_delta.resize(batch * i, 0.0);
                gemm(
                    batch,
                    o,
                    i,
                    1.0,
                    &delta,
                    o,
                    1,
                    &layer.weights,
                    i,
                    1,
                    0.0,
                    &mut prev_delta,
                    i,
                    1,
                );
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        if want_input {
            tape.input.clear();
            tape.input.extend_from_slice(&delta);
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        debug_assert_eq!(self.layer_sizes(), source.layer_sizes());
        for (dst, src) in self.params_mut().into_iter().zip(source.params()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    /// Euclidean distance between two networks' parameter vectors.
    pub fn param_distance(&self, other: &Mlp) -> f64 {
        self.params()
            .into_iter()
            .zip(other.params())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layers: self.layers.clone(),
        })
        .expect("network serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(NnError::UnsupportedVersion(ckpt.format_version));
        }
        Self::from_layers(ckpt.layers)
    }
}

/// `C = alpha * A B + beta * C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= span(m, k, rsa, csa));
    assert!(b.len() >= span(k, n, rsb, csb));
    assert!(c.len() >= span(m, n, rsc, csc));
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
