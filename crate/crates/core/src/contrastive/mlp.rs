//! Fully-connected ReLU stacks with optional identity skips and exact backprop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Skip-connection topology of a backbone.
///
/// * `Full`: every layer computes `ReLU(W u + b) + u`.
/// * `Block`: layers are grouped in consecutive pairs and the skip spans the
///   pair, `ReLU(W₂ ReLU(W₁ u + b₁) + b₂) + u`. With an odd depth the last
///   layer forms a block of one.
/// * `None`: plain feed-forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    Full,
    Block,
    None,
}

impl ResidualMode {
    pub const ALL: [ResidualMode; 3] = [ResidualMode::Full, ResidualMode::Block, ResidualMode::None];

    pub fn name(self) -> &'static str {
        match self {
            ResidualMode::Full => "full",
            ResidualMode::Block => "block",
            ResidualMode::None => "none",
        }
    }
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ResidualMode::Full),
            "block" => Ok(ResidualMode::Block),
            "none" => Ok(ResidualMode::None),
            other => Err(Error::config(format!("unknown residual mode {other:?}"))),
        }
    }
}

/// One affine layer, `weight` is out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero bias.
    pub fn he_normal(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        Self {
            weight: Matrix::from_fn(outputs, inputs, |_, _| std * rng.normal()),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    // Rows of `x` are samples.
    fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul_t(&self.weight);
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }
}

/// A stack of dense layers. Every layer is followed by ReLU except the last
/// one when `linear_output` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub residual: ResidualMode,
    pub linear_output: bool,
}

/// Gradients with the same layout as [`Mlp::layers`].
pub type MlpGrad = Vec<Dense>;

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    pub output: Matrix,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>, residual: ResidualMode, linear_output: bool) -> Result<Self> {
        let mlp = Self {
            layers,
            residual,
            linear_output,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::config(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::config("bias length does not match layer width"));
            }
        }
        for (end, src) in self.skip_sources().into_iter().enumerate() {
            if let Some(src) = src {
                let (inp, out) = (self.layers[src].inputs(), self.layers[end].outputs());
                if inp != out {
                    return Err(Error::config(format!(
                        "{} residual skip into layer {end} needs matching widths, got {inp} -> {out}",
                        self.residual.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn has_relu(&self, layer: usize) -> bool {
        !(self.linear_output && layer + 1 == self.layers.len())
    }

    /// For each layer, the index of the layer whose input is added to its output.
    fn skip_sources(&self) -> Vec<Option<usize>> {
        let n = self.layers.len();
        (0..n)
            .map(|l| match self.residual {
                ResidualMode::None => None,
                ResidualMode::Full => Some(l),
                ResidualMode::Block if l % 2 == 1 => Some(l - 1),
                ResidualMode::Block if l + 1 == n => Some(l),
                ResidualMode::Block => None,
            })
            .collect()
    }

    /// Forward pass on a batch whose rows are samples.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        self.forward_trace(x).output
    }

    pub fn forward_trace(&self, x: &Matrix) -> Trace {
        assert_eq!(x.cols(), self.input_dim(), "input width mismatch");
        let skips = self.skip_sources();
        let mut inputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&current);
            let mut out = if self.has_relu(l) { z.map(relu) } else { z.clone() };
            if let Some(src) = skips[l] {
                let skip = if src == l { &current } else { &inputs[src] };
                for (o, s) in out.as_mut_slice().iter_mut().zip(skip.as_slice()) {
                    *o += s;
                }
            }
            inputs.push(current);
            pre.push(z);
            current = out;
        }
        Trace {
            inputs,
            pre,
            output: current,
        }
    }

    /// Backpropagates `grad_out` (same shape as the traced output).
    /// Returns the parameter gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, trace: &Trace, grad_out: &Matrix) -> (MlpGrad, Matrix) {
        let n = self.layers.len();
        let skips = self.skip_sources();
        let mut pending: Vec<Option<Matrix>> = vec![None; n];
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut g = grad_out.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if let Some(src) = skips[l] {
                accumulate(&mut pending[src], &g);
            }
            let mut dz = g;
            if self.has_relu(l) {
                for (d, z) in dz.as_mut_slice().iter_mut().zip(trace.pre[l].as_slice()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let weight = dz.t_matmul(&trace.inputs[l]);
            let mut bias = vec![0.0; layer.outputs()];
            for i in 0..dz.rows() {
                for (b, v) in bias.iter_mut().zip(dz.row(i)) {
                    *b += v;
                }
            }
            let mut g_in = dz.matmul(&layer.weight);
            if let Some(extra) = pending[l].take() {
                for (a, b) in g_in.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                    *a += b;
                }
            }
            grads.push(Dense { weight, bias });
            g = g_in;
        }
        grads.reverse();
        (grads, g)
    }

    /// Visits every parameter tensor together with its gradient.
    pub fn for_each_param<'a>(&'a mut self, grads: &'a MlpGrad, mut f: impl FnMut(&mut [f64], &[f64])) {
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            f(layer.weight.as_mut_slice(), grad.weight.as_slice());
            f(&mut layer.bias, &grad.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: &Matrix) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
        None => *slot = Some(g.clone()),
    }
}
