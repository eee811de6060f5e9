use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation. ReLU uses 0 at the kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer `act(x W^T + b)` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn preact(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

/// Forward pass without keeping intermediates.
pub(crate) fn forward(layers: &[Layer], x: Array2<f64>) -> Array2<f64> {
    let mut a = x;
    for layer in layers {
        let mut z = layer.preact(a.view());
        if layer.activation != Activation::Identity {
            z.mapv_inplace(|v| layer.activation.apply(v));
        }
        a = z;
    }
    a
}

/// Inputs and pre-activations of every layer, kept for backprop.
pub(crate) struct Trace {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

impl Trace {
    pub(crate) fn output(&self, layers: &[Layer]) -> Array2<f64> {
        let last = layers.len() - 1;
        self.preacts[last].mapv(|z| layers[last].activation.apply(z))
    }

    /// Restricts the trace to a subset of rows.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Trace {
        Trace {
            inputs: self
                .inputs
                .iter()
                .map(|a| a.select(Axis(0), rows))
                .collect(),
            preacts: self
                .preacts
                .iter()
                .map(|a| a.select(Axis(0), rows))
                .collect(),
        }
    }
}

pub(crate) fn forward_traced(layers: &[Layer], x: Array2<f64>) -> Trace {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut preacts = Vec::with_capacity(layers.len());
    let mut a = x;
    for layer in layers {
        let z = layer.preact(a.view());
        let next = z.mapv(|v| layer.activation.apply(v));
        inputs.push(a);
        preacts.push(z);
        a = next;
    }
    Trace { inputs, preacts }
}

/// Accumulates parameter gradients into `grads` given the gradient of the
/// loss with respect to the last layer's output.
pub(crate) fn backward(layers: &[Layer], trace: &Trace, d_out: Array2<f64>, grads: &mut [Layer]) {
    let mut delta = d_out;
    for (k, layer) in layers.iter().enumerate().rev() {
        if layer.activation != Activation::Identity {
            delta.zip_mut_with(&trace.preacts[k], |d, &z| {
                *d *= layer.activation.derivative(z)
            });
        }
        grads[k].weight += &delta.t().dot(&trace.inputs[k]);
        grads[k].bias += &delta.sum_axis(Axis(0));
        if k > 0 {
            delta = delta.dot(&layer.weight);
        }
    }
}
