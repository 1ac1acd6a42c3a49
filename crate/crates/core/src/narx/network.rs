//! Layered forward pass and parameter Jacobian for the supported networks.

use super::{Activation, NarxModel};

/// Which vector a layer consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerInput {
    /// Output of the previous layer (the regressor for the first layer).
    Previous,
    /// Regressor concatenated with the previous layer's output.
    RegressorAndPrevious,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub input: LayerInput,
    pub act: Activation,
    /// Start of this layer's weights in the flat parameter vector; the
    /// `rows * cols` row-major weights are followed by `rows` biases.
    pub offset: usize,
}

impl LayerShape {
    pub fn n_params(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.rows * self.cols]
    }

    pub fn biases<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.rows * self.cols;
        &params[start..start + self.rows]
    }
}

/// Scratch buffers reused across samples.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    input: Vec<f64>,
}

impl Workspace {
    pub fn for_model(model: &NarxModel) -> Self {
        let layers = model.layers();
        Self {
            pre: layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            act: layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            delta: layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            input: Vec::with_capacity(layers.iter().map(|l| l.cols).max().unwrap_or(0)),
        }
    }
}

fn layer_input(ws_act: &[Vec<f64>], x: &[f64], index: usize, shape: &LayerShape, buf: &mut Vec<f64>) {
    buf.clear();
    if index == 0 {
        buf.extend_from_slice(x);
        return;
    }
    if shape.input == LayerInput::RegressorAndPrevious {
        buf.extend_from_slice(x);
    }
    buf.extend_from_slice(&ws_act[index - 1]);
}

/// Network output for a normalized regressor; fills `ws` for a later
/// [`backward`] call.
pub fn forward(model: &NarxModel, x: &[f64], ws: &mut Workspace) -> f64 {
    let params = model.params();
    let layers = model.layers();
    let mut input = std::mem::take(&mut ws.input);
    for (l, shape) in layers.iter().enumerate() {
        layer_input(&ws.act, x, l, shape, &mut input);
        let w = shape.weights(params);
        let b = shape.biases(params);
        for i in 0..shape.rows {
            let row = &w[i * shape.cols..(i + 1) * shape.cols];
            let n = row.iter().zip(&input).fold(b[i], |s, (wi, xi)| s + wi * xi);
            ws.pre[l][i] = n;
            ws.act[l][i] = shape.act.apply(n);
        }
    }
    ws.input = input;
    ws.act[layers.len() - 1][0]
}

/// Gradient of the network output with respect to every parameter, written
/// into `grad` (length `n_params`). Requires a preceding [`forward`] on the
/// same `x`.
pub fn backward(model: &NarxModel, x: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
    let params = model.params();
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut input = std::mem::take(&mut ws.input);

    ws.delta[last][0] = layers[last].act.derivative(ws.pre[last][0], ws.act[last][0]);
    for l in (0..=last).rev() {
        let shape = &layers[l];
        layer_input(&ws.act, x, l, shape, &mut input);
        let (wg, rest) = grad[shape.offset..shape.offset + shape.n_params()].split_at_mut(shape.rows * shape.cols);
        for i in 0..shape.rows {
            let d = ws.delta[l][i];
            for (g, xi) in wg[i * shape.cols..(i + 1) * shape.cols].iter_mut().zip(&input) {
                *g = d * xi;
            }
            rest[i] = d;
        }
        if l == 0 {
            break;
        }
        let w = shape.weights(params);
        let skip = match shape.input {
            LayerInput::Previous => 0,
            LayerInput::RegressorAndPrevious => x.len(),
        };
        let (lower, upper) = ws.delta.split_at_mut(l);
        let below = &mut lower[l - 1];
        let prev = &layers[l - 1];
        for (j, dj) in below.iter_mut().enumerate() {
            let back: f64 = (0..shape.rows).map(|i| w[i * shape.cols + skip + j] * upper[0][i]).sum();
            *dj = back * prev.act.derivative(ws.pre[l - 1][j], ws.act[l - 1][j]);
        }
    }
    ws.input = input;
}
