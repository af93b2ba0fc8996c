use super::{Activation, Mlp};

/// Cached intermediates of one batched forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub(super) sizes: Vec<usize>,
    pub(super) batch: usize,
    pub(super) input: Vec<f64>,
    pub(super) pre: Vec<Vec<f64>>,
    pub(super) post: Vec<Vec<f64>>,
}

impl Trace {
    pub(super) fn new(sizes: Vec<usize>, batch: usize, input: Vec<f64>) -> Self {
        Self {
            sizes,
            batch,
            input,
            pre: Vec::new(),
            post: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.post.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output for the whole batch, row-major.
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Output-layer pre-activations, row-major.
    pub fn output_pre(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Smallest |pre-activation| over all relu units; `inf` when there are none.
    pub fn min_relu_margin(&self, net: &Mlp) -> f64 {
        let mut best = f64::INFINITY;
        for (layer, pre) in net.layers().iter().zip(&self.pre) {
            if !layer.activation().uses(Activation::Relu) {
                continue;
            }
            let o = layer.out_dim();
            for (k, z) in pre.iter().enumerate() {
                if layer.activation().of(k % o) == Activation::Relu {
                    best = best.min(z.abs());
                }
            }
        }
        best
    }
}

/// Gradient buffers shaped exactly like an [`Mlp`]'s parameters, plus the
/// gradient with respect to the (batched) input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl GradientTape {
    pub fn zeros(net: &Mlp, batch: usize) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.bias().len()]).collect(),
            input: vec![0.0; batch * net.input_dim()],
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
        self.input.fill(0.0);
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| *v == 0.0)) && self.input.iter().all(|v| *v == 0.0)
    }

    /// Whether every buffer has the shape of `net`'s matching parameter.
    pub fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers().len()
            && net
                .layers()
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| w.len() == l.weights().len() && b.len() == l.bias().len())
    }

    /// Parameter-gradient blocks in the same order as [`Mlp::params`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
        self.input.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_scaled(&mut self, other: &GradientTape, factor: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks().into_iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}
