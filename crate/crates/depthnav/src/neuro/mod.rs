//! Minimal neural engine: 1D convolution, dense layers, ReLU, reverse-mode
//! gradients, and Adam.
//!
//! Parameters and activations are stored in the scalar type `F` (f32 for
//! training, f64 where finite-difference comparisons need the headroom);
//! every reduction accumulates in f64 regardless of storage type.

mod adam;
mod gradcheck;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::grad_check;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Storage scalar for network parameters and activations.
pub trait Scalar: Copy + PartialEq + PartialOrd + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite_val(self) -> bool;
    fn zero() -> Self;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn zero() -> Self {
        0.0
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn zero() -> Self {
        0.0
    }
}

/// Layer kind and shape. Data layout is channel-major: a `(ch, len)`
/// activation stores channel `c` at `[c*len .. (c+1)*len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (no padding) 1D convolution.
    Conv1d {
        filter_len: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    },
    /// Fully connected layer over the flattened input.
    Dense { inputs: usize, outputs: usize },
    Relu,
}

/// Weight and bias storage for one layer; both empty for ReLU.
/// Weight layouts: dense `w[o*inputs + i]`; conv
/// `w[(o*in_ch + c)*filter_len + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors<F> {
    pub w: Vec<F>,
    pub b: Vec<F>,
}

/// Gradient accumulator mirroring a network's parameter shapes, in f64.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerTensors<f64>>,
}

impl NetGrads {
    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

/// Activation record from a forward pass, consumed by `backward`.
/// `acts[i]` is the input to layer `i`; the last entry is the output.
#[derive(Debug, Clone)]
pub struct Tape<F> {
    acts: Vec<Vec<F>>,
    version: u64,
}

impl<F> Tape<F> {
    pub fn output(&self) -> &[F] {
        self.acts.last().expect("tape always holds the input")
    }
}

/// Channel/length shape tracking through the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    ch: usize,
    len: usize,
}

impl Dims {
    fn flat(&self) -> usize {
        self.ch * self.len
    }
}

fn conv_out_len(len: usize, filter_len: usize, stride: usize) -> usize {
    (len - filter_len) / stride + 1
}

/// A sequential network. An empty spec list is the identity function.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<F> {
    specs: Vec<LayerSpec>,
    layers: Vec<LayerTensors<F>>,
    dims: Vec<Dims>,
    version: u64,
}

impl<F: Scalar> Net<F> {
    /// Validate the layer composition for `input_len` scalars of input
    /// (treated as one channel) and allocate zeroed parameters.
    pub fn zeros(specs: Vec<LayerSpec>, input_len: usize) -> Result<Self> {
        if input_len == 0 {
            return Err(Error::Shape("input length must be > 0".into()));
        }
        let mut dims = vec![Dims {
            ch: 1,
            len: input_len,
        }];
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let cur = *dims.last().expect("non-empty");
            let (next, tensors) = match *spec {
                LayerSpec::Conv1d {
                    filter_len,
                    in_ch,
                    out_ch,
                    stride,
                } => {
                    if stride == 0 || filter_len == 0 || in_ch == 0 || out_ch == 0 {
                        return Err(Error::Shape(format!("layer {i}: conv dims must be > 0")));
                    }
                    if in_ch != cur.ch {
                        return Err(Error::Shape(format!(
                            "layer {i}: conv expects {in_ch} channels, input has {}",
                            cur.ch
                        )));
                    }
                    if filter_len > cur.len {
                        return Err(Error::Shape(format!(
                            "layer {i}: filter {filter_len} longer than input {}",
                            cur.len
                        )));
                    }
                    (
                        Dims {
                            ch: out_ch,
                            len: conv_out_len(cur.len, filter_len, stride),
                        },
                        LayerTensors {
                            w: vec![F::zero(); out_ch * in_ch * filter_len],
                            b: vec![F::zero(); out_ch],
                        },
                    )
                }
                LayerSpec::Dense { inputs, outputs } => {
                    if inputs == 0 || outputs == 0 {
                        return Err(Error::Shape(format!("layer {i}: dense dims must be > 0")));
                    }
                    if inputs != cur.flat() {
                        return Err(Error::Shape(format!(
                            "layer {i}: dense expects {inputs} inputs, previous layer yields {}",
                            cur.flat()
                        )));
                    }
                    (
                        Dims {
                            ch: 1,
                            len: outputs,
                        },
                        LayerTensors {
                            w: vec![F::zero(); outputs * inputs],
                            b: vec![F::zero(); outputs],
                        },
                    )
                }
                LayerSpec::Relu => (
                    cur,
                    LayerTensors {
                        w: vec![],
                        b: vec![],
                    },
                ),
            };
            dims.push(next);
            layers.push(tensors);
        }
        Ok(Net {
            specs,
            layers,
            dims,
            version: 0,
        })
    }

    /// He-uniform weight init (limit sqrt(6/fan_in)), zero biases.
    pub fn he_init(specs: Vec<LayerSpec>, input_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut net = Self::zeros(specs, input_len)?;
        for (spec, tensors) in net.specs.iter().zip(net.layers.iter_mut()) {
            let fan_in = match *spec {
                LayerSpec::Conv1d {
                    filter_len, in_ch, ..
                } => in_ch * filter_len,
                LayerSpec::Dense { inputs, .. } => inputs,
                LayerSpec::Relu => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut tensors.w {
                *w = F::from_f64(rng.gen_range(-limit..limit));
            }
        }
        Ok(net)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[LayerTensors<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerTensors<F>] {
        // Callers mutating parameters directly must bump_version().
        &mut self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn input_len(&self) -> usize {
        self.dims[0].flat()
    }

    pub fn output_len(&self) -> usize {
        self.dims.last().expect("non-empty").flat()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Deep, independent copy.
    pub fn clone_params(&self) -> Self {
        self.clone()
    }

    /// Zeroed gradient accumulator matching this network.
    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerTensors {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &[F]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "input length {} does not match network input {}",
                input.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    fn apply_layer(&self, idx: usize, input: &[F]) -> Vec<F> {
        let spec = self.specs[idx];
        let tensors = &self.layers[idx];
        let in_dims = self.dims[idx];
        let out_dims = self.dims[idx + 1];
        match spec {
            LayerSpec::Dense { inputs, outputs } => {
                let mut out = Vec::with_capacity(outputs);
                for o in 0..outputs {
                    let row = &tensors.w[o * inputs..(o + 1) * inputs];
                    let mut acc = tensors.b[o].to_f64();
                    for (w, x) in row.iter().zip(input) {
                        acc += w.to_f64() * x.to_f64();
                    }
                    out.push(F::from_f64(acc));
                }
                out
            }
            LayerSpec::Conv1d {
                filter_len,
                in_ch,
                out_ch,
                stride,
            } => {
                let in_len = in_dims.len;
                let out_len = out_dims.len;
                let mut out = vec![F::zero(); out_ch * out_len];
                for o in 0..out_ch {
                    for j in 0..out_len {
                        let mut acc = tensors.b[o].to_f64();
                        let base = j * stride;
                        for c in 0..in_ch {
                            let w_off = (o * in_ch + c) * filter_len;
                            let x_off = c * in_len + base;
                            for k in 0..filter_len {
                                acc += tensors.w[w_off + k].to_f64()
                                    * input[x_off + k].to_f64();
                            }
                        }
                        out[o * out_len + j] = F::from_f64(acc);
                    }
                }
                out
            }
            LayerSpec::Relu => input
                .iter()
                .map(|&x| if x.to_f64() > 0.0 { x } else { F::zero() })
                .collect(),
        }
    }

    /// Forward pass retaining the activation tape for `backward`.
    pub fn forward(&self, input: &[F]) -> Result<(Vec<F>, Tape<F>)> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.specs.len() + 1);
        acts.push(input.to_vec());
        for i in 0..self.specs.len() {
            let next = self.apply_layer(i, acts.last().expect("non-empty"));
            acts.push(next);
        }
        let out = acts.last().expect("non-empty").clone();
        Ok((
            out,
            Tape {
                acts,
                version: self.version,
            },
        ))
    }

    /// Forward pass without a tape; cheaper for target/evaluation passes.
    pub fn infer(&self, input: &[F]) -> Result<Vec<F>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        for i in 0..self.specs.len() {
            cur = self.apply_layer(i, &cur);
        }
        Ok(cur)
    }

    /// Reverse-mode gradients. Accumulates parameter gradients into
    /// `grads` (callers batch by reusing the accumulator) and returns the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        tape: &Tape<F>,
        output_grad: &[f64],
        grads: &mut NetGrads,
    ) -> Result<Vec<f64>> {
        if tape.version != self.version {
            return Err(Error::Usage(format!(
                "stale tape: recorded at version {}, parameters now at {}",
                tape.version, self.version
            )));
        }
        if output_grad.len() != self.output_len() {
            return Err(Error::Shape(format!(
                "output gradient length {} does not match network output {}",
                output_grad.len(),
                self.output_len()
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient accumulator mismatch".into()));
        }

        let mut g_out = output_grad.to_vec();
        for i in (0..self.specs.len()).rev() {
            let input = &tape.acts[i];
            let g_in = match self.specs[i] {
                LayerSpec::Dense { inputs, outputs } => {
                    let tensors = &self.layers[i];
                    let gl = &mut grads.layers[i];
                    let mut g_in = vec![0.0f64; inputs];
                    for o in 0..outputs {
                        let g = g_out[o];
                        gl.b[o] += g;
                        let row = &tensors.w[o * inputs..(o + 1) * inputs];
                        let grow = &mut gl.w[o * inputs..(o + 1) * inputs];
                        for idx in 0..inputs {
                            grow[idx] += g * input[idx].to_f64();
                            g_in[idx] += g * row[idx].to_f64();
                        }
                    }
                    g_in
                }
                LayerSpec::Conv1d {
                    filter_len,
                    in_ch,
                    out_ch,
                    stride,
                } => {
                    let in_len = self.dims[i].len;
                    let out_len = self.dims[i + 1].len;
                    let tensors = &self.layers[i];
                    let gl = &mut grads.layers[i];
                    let mut g_in = vec![0.0f64; in_ch * in_len];
                    for o in 0..out_ch {
                        for j in 0..out_len {
                            let g = g_out[o * out_len + j];
                            if g == 0.0 {
                                continue;
                            }
                            gl.b[o] += g;
                            let base = j * stride;
                            for c in 0..in_ch {
                                let w_off = (o * in_ch + c) * filter_len;
                                let x_off = c * in_len + base;
                                for k in 0..filter_len {
                                    gl.w[w_off + k] += g * input[x_off + k].to_f64();
                                    g_in[x_off + k] += g * tensors.w[w_off + k].to_f64();
                                }
                            }
                        }
                    }
                    g_in
                }
                LayerSpec::Relu => g_out
                    .iter()
                    .zip(input)
                    .map(|(&g, &x)| if x.to_f64() > 0.0 { g } else { 0.0 })
                    .collect(),
            };
            g_out = g_in;
        }
        Ok(g_out)
    }
}
