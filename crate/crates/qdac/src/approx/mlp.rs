//! Dense MLP with flat parameter storage and hand-written backprop.

use super::ApproxError;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Output-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    /// Squashes to (0, 1); used by the Lagrange-multiplier network.
    Sigmoid,
}

/// Architecture of a dense MLP: layer widths from input to output plus the
/// two nonlinearity choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Widths `[input, hidden..., output]`; at least two entries, all nonzero.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// Validated constructor.
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self, ApproxError> {
        if layer_sizes.len() < 2 {
            return Err(ApproxError::InvalidSpec(format!(
                "need at least [input, output] widths, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(ApproxError::InvalidSpec(format!(
                "zero-width layer in {:?}",
                layer_sizes
            )));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// Convenience: `[input, hidden..., output]` with ReLU hidden units and a
    /// linear output.
    pub fn relu_linear(layer_sizes: Vec<usize>) -> Result<Self, ApproxError> {
        Self::new(layer_sizes, Activation::Relu, OutputActivation::Linear)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated: >= 2 layers")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: `sum over layers of (fan_in * fan_out + fan_out)`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Widest layer, used to size scratch buffers.
    fn max_width(&self) -> usize {
        *self.layer_sizes.iter().max().expect("non-empty")
    }

    /// Flat offset of layer `l`'s weight block; biases follow the weights.
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Reusable per-spec buffers for forward/backward passes. Holding one of
/// these outside a training loop keeps the hot path allocation-free.
#[derive(Debug, Clone)]
pub struct Scratch {
    /// Post-activation values per layer; `post[0]` is the input copy and
    /// `post[depth]` the network output.
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Scratch {
    pub fn new(spec: &MlpSpec) -> Self {
        Scratch {
            post: spec.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; spec.max_width()],
            delta_next: vec![0.0; spec.max_width()],
        }
    }

    /// Output slice of the most recent forward pass.
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("non-empty")
    }
}

/// Four-accumulator dot product: deterministic association order, good
/// instruction-level parallelism, and autovectorizes cleanly.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
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
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// A dense MLP: spec plus one flat parameter vector.
///
/// Layout per weight layer `l` (fan-in `n_in`, fan-out `n_out`): the weight
/// matrix row-major as `[out][in]`, immediately followed by the `n_out`
/// biases. Layers are concatenated in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    /// Fan-in uniform initialization: weights from
    /// `U(-1/sqrt(fan_in), +1/sqrt(fan_in))`, biases zero. Deterministic in
    /// `seed`; identical seeds give bit-identical parameters.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = vec![0.0; spec.param_count()];
        for l in 0..spec.depth() {
            let n_in = spec.layer_sizes[l];
            let n_out = spec.layer_sizes[l + 1];
            let bound = 1.0 / (n_in as f64).sqrt();
            let off = spec.layer_offset(l);
            for w in params[off..off + n_in * n_out].iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            // biases stay zero
        }
        Mlp { spec, params }
    }

    /// Wrap an existing flat parameter vector (e.g. from a checkpoint).
    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, ApproxError> {
        if params.len() != spec.param_count() {
            return Err(ApproxError::DimensionMismatch {
                what: "parameter vector",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(&self.spec)
    }

    /// Forward pass into a reusable scratch; returns the output slice length.
    /// The output itself lives in `scratch.output()`.
    pub fn forward_scratch(&self, input: &[f64], scratch: &mut Scratch) {
        debug_assert_eq!(input.len(), self.spec.input_dim(), "MLP input dim");
        scratch.post[0].copy_from_slice(input);
        for l in 0..self.spec.depth() {
            let n_in = self.spec.layer_sizes[l];
            let n_out = self.spec.layer_sizes[l + 1];
            let off = self.spec.layer_offset(l);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (lo, hi) = scratch.post.split_at_mut(l + 1);
            let x = &lo[l];
            let y = &mut hi[0];
            let last = l + 1 == self.spec.depth();
            for o in 0..n_out {
                let z = dot(&weights[o * n_in..(o + 1) * n_in], x) + biases[o];
                y[o] = if last {
                    match self.spec.output_activation {
                        OutputActivation::Linear => z,
                        OutputActivation::Sigmoid => sigmoid(z),
                    }
                } else {
                    match self.spec.hidden_activation {
                        Activation::Relu => z.max(0.0),
                        Activation::Tanh => z.tanh(),
                    }
                };
            }
        }
    }

    /// Allocating forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut scratch = self.scratch();
        self.forward_scratch(input, &mut scratch);
        scratch.output().to_vec()
    }

    /// Reverse pass for the scalar `<upstream, f(input)>`.
    ///
    /// `scratch` must hold the forward pass of the same `input`; `upstream`
    /// is the gradient with respect to the network *output* (post output
    /// activation). Parameter gradients are *accumulated* into `param_grad`
    /// (callers batching over samples zero it once and divide afterwards);
    /// the input gradient is *written* to `input_grad` if provided.
    pub fn backward_scratch(
        &self,
        scratch: &mut Scratch,
        upstream: &[f64],
        param_grad: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(upstream.len(), self.spec.output_dim(), "upstream dim");
        debug_assert_eq!(param_grad.len(), self.spec.param_count(), "grad dim");

        // Seed delta with d(loss)/d(pre-activation of output layer).
        let out = scratch.post.last().expect("non-empty");
        match self.spec.output_activation {
            OutputActivation::Linear => scratch.delta[..out.len()].copy_from_slice(upstream),
            OutputActivation::Sigmoid => {
                for (d, (&u, &y)) in scratch.delta.iter_mut().zip(upstream.iter().zip(out)) {
                    *d = u * y * (1.0 - y);
                }
            }
        }
        self.backprop_from_delta(scratch, param_grad, input_grad.as_deref_mut());
    }

    /// Reverse pass where `upstream_pre` is already the gradient with respect
    /// to the output layer's *pre-activation*. This sidesteps the sigmoid
    /// chain rule for losses (like cross-entropy) whose pre-activation
    /// gradient is numerically benign while the post-activation one is not.
    pub fn backward_scratch_pre_activation(
        &self,
        scratch: &mut Scratch,
        upstream_pre: &[f64],
        param_grad: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(upstream_pre.len(), self.spec.output_dim());
        scratch.delta[..upstream_pre.len()].copy_from_slice(upstream_pre);
        self.backprop_from_delta(scratch, param_grad, input_grad.as_deref_mut());
    }

    /// Shared reverse sweep once `scratch.delta` holds the output layer's
    /// pre-activation gradient.
    fn backprop_from_delta(
        &self,
        scratch: &mut Scratch,
        param_grad: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
    ) {
        for l in (0..self.spec.depth()).rev() {
            let n_in = self.spec.layer_sizes[l];
            let n_out = self.spec.layer_sizes[l + 1];
            let off = self.spec.layer_offset(l);
            let weights = &self.params[off..off + n_in * n_out];
            let (gw, gb) = {
                let g = &mut param_grad[off..off + n_in * n_out + n_out];
                g.split_at_mut(n_in * n_out)
            };
            let x = &scratch.post[l];

            let need_input_grad = l > 0 || input_grad.is_some();
            scratch.delta_next[..n_in].fill(0.0);
            for o in 0..n_out {
                let d = scratch.delta[o];
                gb[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = &weights[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                if need_input_grad {
                    let dx = &mut scratch.delta_next[..n_in];
                    for i in 0..n_in {
                        grow[i] += d * x[i];
                        dx[i] += d * row[i];
                    }
                } else {
                    for i in 0..n_in {
                        grow[i] += d * x[i];
                    }
                }
            }

            if l > 0 {
                // Chain through the hidden activation of layer l (its output
                // is post[l]).
                let h = &scratch.post[l];
                for i in 0..n_in {
                    let deriv = match self.spec.hidden_activation {
                        Activation::Relu => {
                            if h[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Activation::Tanh => 1.0 - h[i] * h[i],
                    };
                    scratch.delta[i] = scratch.delta_next[i] * deriv;
                }
            } else if let Some(ig) = input_grad.as_deref_mut() {
                ig.copy_from_slice(&scratch.delta_next[..n_in]);
            }
        }
    }

    /// Allocating reverse pass: returns `(param_grad, input_grad)` of the
    /// scalar `<upstream, f(input)>`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut scratch = self.scratch();
        self.forward_scratch(input, &mut scratch);
        let mut pg = vec![0.0; self.spec.param_count()];
        let mut ig = vec![0.0; self.spec.input_dim()];
        self.backward_scratch(&mut scratch, upstream, &mut pg, Some(&mut ig));
        (pg, ig)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
