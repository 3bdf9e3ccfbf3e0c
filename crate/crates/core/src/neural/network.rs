use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::head::HeadSpec;
use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" | "rectifier" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Shape of one parameter network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: HeadSpec,
    /// Nonnegative weights everywhere, and only the head's input-dependent
    /// outputs see the input. Every such output is then nondecreasing in
    /// every input coordinate.
    pub monotone: bool,
}

impl NetworkSpec {
    pub fn new(input: usize, hidden: Vec<usize>, head: HeadSpec) -> Self {
        Self {
            input,
            hidden,
            activation: Activation::Relu,
            head,
            monotone: false,
        }
    }

    pub fn outputs(&self) -> usize {
        self.head.raw_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden.contains(&0) || self.outputs() == 0 {
            return Err(Error::Config(format!(
                "network widths must be >= 1 (input {}, hidden {:?}, outputs {})",
                self.input,
                self.hidden,
                self.outputs()
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.outputs());
        w
    }
}

/// Dense affine layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Gradients with the same layout as the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<Layer>,
}

impl NetworkGrads {
    pub fn zeros_like(state: &NetworkState) -> Self {
        Self {
            layers: state.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.values_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &NetworkGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.values_mut().zip(b.values()).for_each(|(x, y)| *x += y);
        }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug)]
pub struct ForwardTape {
    version: u64,
    // layer inputs; index 0 is the network input
    inputs: Vec<Matrix>,
    // pre-activations of hidden layers
    pre: Vec<Matrix>,
}

impl ForwardTape {
    pub fn rows(&self) -> usize {
        self.inputs[0].rows
    }
}

/// Weights, optimizer moments and step counter of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
    pub first_moment: Vec<Layer>,
    pub second_moment: Vec<Layer>,
    pub step: u64,
    // bumped on every weight change; ties tapes to the weights they saw
    version: u64,
    // last-layer rows allowed to depend on the input
    live_rows: Vec<bool>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
const OUTPUT_GAIN: f64 = 0.1;

impl NetworkState {
    /// Fan-in scaled uniform weights, zero biases. `stream` selects an
    /// independent random stream (one per stage).
    pub fn init(spec: NetworkSpec, seed: u64, stream: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let widths = spec.widths();
        let n_layers = widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let (fan_in, fan_out) = (widths[li], widths[li + 1]);
            let gain = match spec.activation {
                Activation::Relu => 6.0,
                Activation::Tanh => 3.0,
            };
            let mut bound = (gain / fan_in as f64).sqrt();
            if li + 1 == n_layers {
                bound *= OUTPUT_GAIN;
            }
            let mut layer = Layer::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
            layers.push(layer);
        }
        Self::from_layers(spec, layers)
    }

    /// Wraps explicit weights; moments start at zero.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::Contract(format!(
                "expected {} layers, got {}",
                widths.len() - 1,
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != widths[i]
                || l.outputs != widths[i + 1]
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::Contract(format!("layer {i} shape does not match the spec")));
            }
            if l.values().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("layer {i} has non-finite weights")));
            }
        }
        let live_rows = if spec.monotone {
            spec.head.input_dependent()
        } else {
            vec![true; spec.outputs()]
        };
        let zeros: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let mut state = Self {
            spec,
            first_moment: zeros.clone(),
            second_moment: zeros,
            layers,
            step: 0,
            version: 0,
            live_rows,
        };
        if state.spec.monotone {
            for l in &mut state.layers {
                l.weights.iter_mut().for_each(|w| *w = w.abs());
            }
            state.project();
        }
        Ok(state)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    /// Mutable view of every weight and bias, in layer order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    fn project(&mut self) {
        if !self.spec.monotone {
            return;
        }
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for (r, row) in layer.weights.chunks_mut(layer.inputs).enumerate() {
                if li == last && !self.live_rows[r] {
                    row.iter_mut().for_each(|w| *w = 0.0);
                } else {
                    row.iter_mut().for_each(|w| *w = w.max(0.0));
                }
            }
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardTape)> {
        if x.cols != self.spec.input {
            return Err(Error::Contract(format!(
                "network expects {} input columns, got {}",
                self.spec.input, x.cols
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut current = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &current);
            inputs.push(current);
            if li < last {
                let act = self.spec.activation;
                let a = Matrix {
                    rows: z.rows,
                    cols: z.cols,
                    data: z.data.iter().map(|&v| act.apply(v)).collect(),
                };
                pre.push(std::mem::replace(&mut z, a));
            }
            current = z;
        }
        Ok((
            current,
            ForwardTape {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Reverse pass. Returns weight gradients and gradients with respect to
    /// the network input.
    ///
    /// Gradients are exact even for monotone networks; the sign and zero
    /// constraints are enforced by projection in [`Self::adam_step`].
    pub fn backward(&self, tape: ForwardTape, upstream: &Matrix) -> Result<(NetworkGrads, Matrix)> {
        if tape.version != self.version {
            return Err(Error::Contract(
                "forward tape does not belong to the current weights".into(),
            ));
        }
        if upstream.rows != tape.rows() || upstream.cols != self.spec.outputs() {
            return Err(Error::Contract(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows,
                upstream.cols,
                tape.rows(),
                self.spec.outputs()
            )));
        }
        let mut grads = NetworkGrads::zeros_like(self);
        let mut delta = upstream.clone();
        let act = self.spec.activation;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &tape.inputs[li];
            let g = &mut grads.layers[li];
            for r in 0..delta.rows {
                let drow = delta.row(r);
                let xrow = input.row(r);
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let wrow = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, &xv) in wrow.iter_mut().zip(xrow) {
                        *w += d * xv;
                    }
                }
            }
            let mut next = Matrix::zeros(delta.rows, layer.inputs);
            for r in 0..delta.rows {
                let drow = delta.row(r);
                let nrow = next.row_mut(r);
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in nrow.iter_mut().zip(wrow) {
                        *n += d * w;
                    }
                }
            }
            if li > 0 {
                let pre = &tape.pre[li - 1];
                let out = &tape.inputs[li];
                for ((n, &p), &y) in next.data.iter_mut().zip(&pre.data).zip(&out.data) {
                    *n *= act.derivative(p, y);
                }
            }
            delta = next;
        }
        Ok((grads, delta))
    }

    /// One adaptive-moment update with bias correction.
    pub fn adam_step(&mut self, grads: &NetworkGrads, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Contract("gradient layer count mismatch".into()));
        }
        for (li, (g, l)) in grads.layers.iter().zip(&self.layers).enumerate() {
            if g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len() {
                return Err(Error::Contract(format!("gradient shape mismatch in layer {li}")));
            }
            if let Some(pos) = g.values().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in layer {li} at entry {pos} (step {})",
                    self.step
                )));
            }
        }
        self.step += 1;
        self.version += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for li in 0..self.layers.len() {
            let g = &grads.layers[li];
            let params = self.layers[li].values_mut();
            let m = self.first_moment[li].values_mut();
            let v = self.second_moment[li].values_mut();
            for (((p, m), v), &g) in params.zip(m).zip(v).zip(g.values()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        self.project();
        Ok(())
    }
}

fn affine(layer: &Layer, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows, layer.outputs);
    for r in 0..x.rows {
        let xrow = x.row(r);
        let orow = out.row_mut(r);
        for (o, slot) in orow.iter_mut().enumerate() {
            let wrow = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            let dot: f64 = wrow.iter().zip(xrow).map(|(w, v)| w * v).sum();
            *slot = dot + layer.bias[o];
        }
    }
    out
}
