use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{self, Matrix};
use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }
}

/// Shape of a fully connected network. Hidden layers use `activation`; the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation) -> Self {
        MlpSpec {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::usage("network input and output widths must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::usage("network needs at least one hidden layer, all widths >= 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Offsets of one layer inside [`MlpParams::flat`]. The weight block is
/// `fan_in × fan_out` row-major and is followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

/// Flat parameter vector of one network plus its layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub flat: Vec<f64>,
    pub layout: Vec<LayerLayout>,
}

/// Gradient shaped like an [`MlpParams::flat`] (or any flat parameter block).
#[derive(Debug, Clone, PartialEq)]
pub struct Grad {
    pub flat: Vec<f64>,
}

impl Grad {
    pub fn zeros(len: usize) -> Self {
        Grad { flat: vec![0.0; len] }
    }

    pub fn norm_squared(&self) -> f64 {
        self.flat.iter().map(|g| g * g).sum()
    }

    pub fn scale(&mut self, c: f64) {
        self.flat.iter_mut().for_each(|g| *g *= c);
    }
}

fn layout_for(spec: &MlpSpec) -> Vec<LayerLayout> {
    let mut offset = 0;
    spec.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let l = LayerLayout {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset = l.end();
            l
        })
        .collect()
}

/// `rows × cols` matrix with orthonormal rows or columns (whichever is
/// shorter), scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * q[(i, j)]);
        }
    }
    out
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layout = layout_for(spec);
        let len = layout.last().map_or(0, LayerLayout::end);
        MlpParams {
            flat: vec![0.0; len],
            layout,
        }
    }

    /// Orthogonal weights (gain √2 on hidden layers, `output_gain` on the
    /// output layer) and zero biases.
    pub fn init_orthogonal(spec: &MlpSpec, output_gain: f64, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = Self::zeros(spec);
        let n = params.layout.len();
        for (k, l) in params.layout.clone().iter().enumerate() {
            let gain = if k + 1 == n {
                output_gain
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal(l.fan_in, l.fan_out, gain, rng);
            params.flat[l.weight_offset..l.bias_offset].copy_from_slice(&w);
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.layout != layout_for(spec) {
            return Err(Error::usage("parameter layout does not match the network spec"));
        }
        Ok(())
    }

    fn weight(&self, l: &LayerLayout) -> &[f64] {
        &self.flat[l.weight_offset..l.bias_offset]
    }

    fn bias(&self, l: &LayerLayout) -> &[f64] {
        &self.flat[l.bias_offset..l.end()]
    }

    /// Output for every row of `input`.
    pub fn forward_batch(&self, spec: &MlpSpec, input: &Matrix) -> Result<Matrix> {
        self.check(spec)?;
        if input.cols() != spec.input_dim {
            return Err(Error::usage(format!(
                "network expects {} inputs, got {}",
                spec.input_dim,
                input.cols()
            )));
        }
        let n = self.layout.len();
        let mut x = input.clone();
        for (k, l) in self.layout.iter().enumerate() {
            x = matrix::affine(&x, self.weight(l), self.bias(l));
            if k + 1 < n {
                x = x.map(|v| spec.activation.apply(v));
            }
        }
        Ok(x)
    }

    /// Records the network on `tape`. With `trainable = false` the weights
    /// enter as constants, so gradients still flow to `input` but no work is
    /// spent on the weights themselves.
    pub fn on_tape(&self, tape: &mut Tape, spec: &MlpSpec, input: Var, trainable: bool) -> MlpVars {
        let n = self.layout.len();
        let mut x = input;
        let mut layers = Vec::with_capacity(n);
        for (k, l) in self.layout.iter().enumerate() {
            let w = Matrix::from_vec(l.fan_in, l.fan_out, self.weight(l).to_vec());
            let b = Matrix::row_vector(self.bias(l));
            let (w, b) = if trainable {
                (tape.param(w), tape.param(b))
            } else {
                (tape.constant(w), tape.constant(b))
            };
            x = tape.affine(x, w, b);
            if k + 1 < n {
                x = match spec.activation {
                    Activation::Tanh => tape.tanh(x),
                    Activation::Relu => tape.relu(x),
                };
            }
            layers.push((w, b));
        }
        MlpVars { layers, output: x }
    }
}

/// Tape handles of one recorded network.
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    pub output: Var,
}

impl MlpVars {
    /// Gathers the weight and bias gradients into a flat [`Grad`].
    pub fn grad(&self, grads: &Gradients, params: &MlpParams) -> Grad {
        let mut out = Grad::zeros(params.len());
        for ((w, b), l) in self.layers.iter().zip(&params.layout) {
            if let Some(g) = grads.get(*w) {
                out.flat[l.weight_offset..l.bias_offset].copy_from_slice(g.as_slice());
            }
            if let Some(g) = grads.get(*b) {
                out.flat[l.bias_offset..l.end()].copy_from_slice(g.as_slice());
            }
        }
        out
    }
}

/// Single-input forward pass.
pub fn mlp_forward(params: &MlpParams, spec: &MlpSpec, input: &[f64]) -> Result<Vec<f64>> {
    Ok(params.forward_batch(spec, &Matrix::row_vector(input))?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_parameters_give_zero_output() {
        for act in [Activation::Tanh, Activation::Relu] {
            let spec = MlpSpec::new(4, &[8, 8], 3, act);
            let params = MlpParams::zeros(&spec);
            assert_eq!(
                mlp_forward(&params, &spec, &[1.0, -2.0, 0.5, 3.0]).unwrap(),
                vec![0.0; 3]
            );
        }
    }

    #[test]
    fn identity_layer_applies_tanh() {
        let spec = MlpSpec::new(3, &[3], 3, Activation::Tanh);
        let mut params = MlpParams::zeros(&spec);
        let first = params.layout[0];
        for i in 0..3 {
            params.flat[first.weight_offset + i * 3 + i] = 1.0;
        }
        let second = params.layout[1];
        for i in 0..3 {
            params.flat[second.weight_offset + i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.2, 2.0];
        let y = mlp_forward(&params, &spec, &x).unwrap();
        for (yi, xi) in y.iter().zip(x) {
            assert_eq!(*yi, xi.tanh());
        }
    }

    #[test]
    fn forward_is_pure() {
        let spec = MlpSpec::new(13, &[64, 64], 7, Activation::Tanh);
        let params = MlpParams::init_orthogonal(&spec, 1.0, &mut rng::seeded(0)).unwrap();
        let x: Vec<f64> = (0..13).map(|i| i as f64 * 0.1 - 0.6).collect();
        let a = mlp_forward(&params, &spec, &x).unwrap();
        let b = mlp_forward(&params, &spec, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_a_usage_error() {
        let spec = MlpSpec::new(4, &[8], 2, Activation::Relu);
        let params = MlpParams::zeros(&spec);
        assert!(matches!(mlp_forward(&params, &spec, &[1.0; 3]), Err(Error::Usage(_))));
        let other = MlpSpec::new(4, &[9], 2, Activation::Relu);
        assert!(mlp_forward(&params, &other, &[1.0; 4]).is_err());
        assert!(MlpSpec::new(4, &[], 2, Activation::Relu).validate().is_err());
    }

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let spec = MlpSpec::new(13, &[64], 7, Activation::Tanh);
        let params = MlpParams::init_orthogonal(&spec, 1.0, &mut rng::seeded(3)).unwrap();
        // output layer is 64x7 with gain 1: columns orthonormal
        let l = params.layout[1];
        let w = &params.flat[l.weight_offset..l.bias_offset];
        for a in 0..7 {
            for b in 0..7 {
                let dot: f64 = (0..64).map(|i| w[i * 7 + a] * w[i * 7 + b]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
        // biases start at zero
        assert!(params.flat[l.bias_offset..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let spec = MlpSpec::new(5, &[6, 4], 2, Activation::Relu);
        let params = MlpParams::init_orthogonal(&spec, 1.0, &mut rng::seeded(1)).unwrap();
        let input = Matrix::from_rows(&[[0.1, 0.2, -0.3, 0.4, 0.5], [1.0, -1.0, 0.0, 2.0, 0.3]]);
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let vars = params.on_tape(&mut tape, &spec, x, true);
        assert_eq!(tape.value(vars.output), &params.forward_batch(&spec, &input).unwrap());
    }
}
