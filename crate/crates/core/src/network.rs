//! Fully connected ReLU network with a scalar output.
//!
//! Layer `k` is stored as one `q_k x (q_{k-1} + 1)` matrix whose last column
//! is the bias, so the network evaluates
//! `W_L σ̃(… W_2 σ̃(W_1 z̃))` with `z̃ = (z, 1)` and `σ̃(v) = (relu(v), 1)`.

use serde::{Deserialize, Serialize};

use crate::densemath::Matrix;
use crate::error::{dim_err, Error, Result};
use crate::rng::Rng;

#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// Checks a width chain `(q_0, …, q_L)`: at least one layer, hidden widths
/// positive, scalar output.
pub fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "width chain {widths:?} needs at least an input and an output"
        )));
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::InvalidArgument(format!(
            "width chain {widths:?} must end in a single output"
        )));
    }
    if widths[1..].contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "width chain {widths:?} has an empty layer"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    widths: Vec<usize>,
    layers: Vec<Matrix>,
}

/// Gradient container, shape-matched to a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<Matrix>,
}

impl NetworkGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.as_mut_slice().fill(0.0);
        }
    }
}

/// Per-sample buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    // Post-activation values of hidden layers 1..L-1.
    hidden: Vec<Vec<f64>>,
    // Backpropagated signal per hidden layer.
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(params: &NetworkParams) -> Self {
        let hidden: Vec<Vec<f64>> = params.widths[1..params.widths.len() - 1]
            .iter()
            .map(|&w| vec![0.0; w])
            .collect();
        Self {
            delta: hidden.clone(),
            hidden,
        }
    }
}

#[inline]
fn affine_row(row: &[f64], input: &[f64]) -> f64 {
    let (w, b) = row.split_at(input.len());
    let mut acc = 0.0;
    for (a, x) in w.iter().zip(input) {
        acc += a * x;
    }
    acc + b[0]
}

impl NetworkParams {
    /// Builds parameters from explicit layer matrices, checking the shape chain.
    pub fn from_layers(widths: Vec<usize>, layers: Vec<Matrix>) -> Result<Self> {
        validate_widths(&widths)?;
        if layers.len() != widths.len() - 1 {
            return dim_err(format!(
                "{} layers given for width chain {widths:?}",
                layers.len()
            ));
        }
        for (k, w) in layers.iter().enumerate() {
            if w.rows() != widths[k + 1] || w.cols() != widths[k] + 1 {
                return dim_err(format!(
                    "layer {} is {}x{}, expected {}x{}",
                    k + 1,
                    w.rows(),
                    w.cols(),
                    widths[k + 1],
                    widths[k] + 1
                ));
            }
        }
        Ok(Self { widths, layers })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0] + 1))
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(widths)?;
        for (k, layer) in params.layers.iter_mut().enumerate() {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let a = glorot_limit(fan_in, fan_out);
            for i in 0..fan_out {
                let row = layer.row_mut(i);
                for w in &mut row[..fan_in] {
                    *w = rng.uniform_symmetric(a);
                }
            }
        }
        Ok(params)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.as_slice().len()).sum()
    }

    pub fn forward(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.input_dim() {
            return dim_err(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                z.len()
            ));
        }
        let mut ws = Workspace::new(self);
        Ok(self.forward_with(z, &mut ws))
    }

    /// Row-wise forward pass.
    pub fn forward_batch(&self, z: &Matrix) -> Result<Vec<f64>> {
        if z.cols() != self.input_dim() {
            return dim_err(format!(
                "network expects {} inputs, batch has {} columns",
                self.input_dim(),
                z.cols()
            ));
        }
        let mut ws = Workspace::new(self);
        Ok((0..z.rows()).map(|i| self.forward_with(z.row(i), &mut ws)).collect())
    }

    /// Forward pass that leaves hidden activations in `ws` for a following
    /// [`accumulate_backward`](Self::accumulate_backward). Shapes are not checked.
    pub fn forward_with(&self, z: &[f64], ws: &mut Workspace) -> f64 {
        let last = self.layers.len() - 1;
        for k in 0..last {
            let (done, rest) = ws.hidden.split_at_mut(k);
            let input: &[f64] = if k == 0 { z } else { &done[k - 1] };
            let out = &mut rest[0];
            let w = &self.layers[k];
            for (i, o) in out.iter_mut().enumerate() {
                *o = relu(affine_row(w.row(i), input));
            }
        }
        let input: &[f64] = if last == 0 { z } else { &ws.hidden[last - 1] };
        affine_row(self.layers[last].row(0), input)
    }

    /// Adds `∂(upstream · m(z)) / ∂W_k` into `grads`, using the activations
    /// from the immediately preceding `forward_with(z, ws)`.
    ///
    /// A hidden unit whose activation is zero passes no gradient (relu'(0) = 0).
    pub fn accumulate_backward(
        &self,
        z: &[f64],
        ws: &mut Workspace,
        upstream: f64,
        grads: &mut NetworkGrads,
    ) {
        let last = self.layers.len() - 1;
        for k in (0..=last).rev() {
            let input: &[f64] = if k == 0 { z } else { &ws.hidden[k - 1] };
            let w = &self.layers[k];
            let g = &mut grads.layers[k];
            let n_in = input.len();

            // Signal arriving at this layer's outputs.
            if k == last {
                let grow = g.row_mut(0);
                for (gj, x) in grow[..n_in].iter_mut().zip(input) {
                    *gj += upstream * x;
                }
                grow[n_in] += upstream;
                if k > 0 {
                    let wrow = w.row(0);
                    let h = &ws.hidden[k - 1];
                    let d = &mut ws.delta[k - 1];
                    for j in 0..n_in {
                        d[j] = if h[j] > 0.0 { wrow[j] * upstream } else { 0.0 };
                    }
                }
            } else {
                let (lower, upper) = ws.delta.split_at_mut(k);
                let d_out = &upper[0];
                for (i, &di) in d_out.iter().enumerate() {
                    if di == 0.0 {
                        continue;
                    }
                    let grow = g.row_mut(i);
                    for (gj, x) in grow[..n_in].iter_mut().zip(input) {
                        *gj += di * x;
                    }
                    grow[n_in] += di;
                }
                if k > 0 {
                    let h = &ws.hidden[k - 1];
                    let d_in = &mut lower[k - 1];
                    d_in.fill(0.0);
                    for (i, &di) in d_out.iter().enumerate() {
                        if di == 0.0 {
                            continue;
                        }
                        let wrow = &w.row(i)[..n_in];
                        for (dj, wij) in d_in.iter_mut().zip(wrow) {
                            *dj += wij * di;
                        }
                    }
                    for (dj, hj) in d_in.iter_mut().zip(h) {
                        if *hj <= 0.0 {
                            *dj = 0.0;
                        }
                    }
                }
            }
        }
    }

    /// Gradient of `upstream · m(z)` with respect to every layer.
    pub fn backward(&self, z: &[f64], upstream: f64) -> Result<NetworkGrads> {
        if z.len() != self.input_dim() {
            return dim_err(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                z.len()
            ));
        }
        let mut ws = Workspace::new(self);
        let mut grads = NetworkGrads::zeros_like(self);
        self.forward_with(z, &mut ws);
        self.accumulate_backward(z, &mut ws, upstream, &mut grads);
        Ok(grads)
    }
}

/// Half-width of the Glorot-uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Width chain for a network of `depth` weight layers, each hidden layer
/// having `width` units.
pub fn width_chain(input_dim: usize, depth: usize, width: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(depth + 1);
    w.push(input_dim);
    w.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
    w.push(1);
    w
}
