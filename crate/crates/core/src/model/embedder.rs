//! Feed-forward relation embedder: dense layers with ReLU between them.

use rand::Rng;

use crate::rng::normal_vec;

use crate::tensor::{Leg, Tensor};

/// Names of the weight and bias tensors of layer `i`.
pub(crate) fn layer_names(i: usize) -> (String, String) {
    (format!("E{i}.weight"), format!("E{i}.bias"))
}

/// Layer widths as `(input, output)` pairs; the last layer always outputs `d`.
pub(crate) fn layer_shapes(d: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut widths = vec![d];
    widths.extend_from_slice(hidden);
    widths.push(d);
    widths.windows(2).map(|w| (w[0], w[1])).collect()
}

pub(crate) fn param_count(d: usize, hidden: &[usize]) -> usize {
    layer_shapes(d, hidden).iter().map(|(i, o)| i * o + o).sum()
}

pub(crate) fn init_layers(d: usize, hidden: &[usize], gain: f64, rng: &mut impl Rng) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (i, (fan_in, fan_out)) in layer_shapes(d, hidden).into_iter().enumerate() {
        let (wn, bn) = layer_names(i);
        let scale = gain / (fan_in as f64).sqrt();
        let w = normal_vec(rng, fan_in * fan_out, scale);
        out.push((wn, Tensor::new(vec![Leg::new("out", fan_out), Leg::new("in", fan_in)], w).unwrap()));
        out.push((bn, Tensor::zeros(vec![Leg::new("out", fan_out)]).unwrap()));
    }
    out
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
}

/// Runs the embedder; `layers` alternates weight, bias.
pub(crate) fn forward(layers: &[&Tensor], x: &[f64]) -> (Vec<f64>, Trace) {
    let n = layers.len() / 2;
    let mut trace = Trace { inputs: Vec::with_capacity(n), pre: Vec::with_capacity(n) };
    let mut h = x.to_vec();
    for i in 0..n {
        let (w, b) = (layers[2 * i], layers[2 * i + 1]);
        let dims = w.dims();
        let (fan_out, fan_in) = (dims[0], dims[1]);
        let mut z = b.data().to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &w.data()[o * fan_in..(o + 1) * fan_in];
            *zo += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        }
        trace.inputs.push(h);
        let last = i + 1 == n;
        h = if last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
        trace.pre.push(z);
        debug_assert_eq!(h.len(), fan_out);
    }
    (h, trace)
}

/// Backpropagates `grad_out` and returns per-tensor gradients in `layers` order.
pub(crate) fn backward(layers: &[&Tensor], trace: &Trace, grad_out: &[f64]) -> Vec<Vec<f64>> {
    let n = layers.len() / 2;
    let mut grads = vec![Vec::new(); layers.len()];
    let mut g = grad_out.to_vec();
    for i in (0..n).rev() {
        if i + 1 != n {
            for (gv, z) in g.iter_mut().zip(&trace.pre[i]) {
                if *z <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        let w = layers[2 * i];
        let dims = w.dims();
        let (fan_out, fan_in) = (dims[0], dims[1]);
        let input = &trace.inputs[i];
        let mut gw = vec![0.0; fan_out * fan_in];
        let mut gin = vec![0.0; fan_in];
        for o in 0..fan_out {
            let row = &w.data()[o * fan_in..(o + 1) * fan_in];
            let go = g[o];
            for k in 0..fan_in {
                gw[o * fan_in + k] = go * input[k];
                gin[k] += go * row[k];
            }
        }
        grads[2 * i] = gw;
        grads[2 * i + 1] = g;
        g = gin;
    }
    grads
}
