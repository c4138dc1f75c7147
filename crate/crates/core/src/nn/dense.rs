use rand::Rng;

use super::params::{GradientSet, ParamId, ParameterSet};
use crate::error::{Error, Result};
use crate::matrix::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activated output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `activation(W x + b)` with `W` stored `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Dense {
    /// Registers weights drawn from `U(-1/sqrt(inputs), 1/sqrt(inputs))` and a zero bias.
    pub fn register<R: Rng + ?Sized>(
        ps: &mut ParameterSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = ps.add_uniform(format!("{name}.weight"), outputs, inputs, bound, rng);
        let bias = ps.add_zeros(format!("{name}.bias"), outputs, 1);
        Dense {
            weight,
            bias,
            inputs,
            outputs,
            activation,
        }
    }

    pub fn forward(&self, ps: &ParameterSet, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                input.len()
            )));
        }
        let mut out = vec![0.0; self.outputs];
        self.forward_into(ps, input, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn forward_into(&self, ps: &ParameterSet, input: &[f64], out: &mut [f64]) {
        let w = ps.get(self.weight);
        let b = ps.get(self.bias);
        for (i, o) in out.iter_mut().enumerate() {
            let z = b[i] + dot(&w[i * self.inputs..(i + 1) * self.inputs], input);
            *o = self.activation.apply(z);
        }
    }

    /// Accumulates parameter gradients given the layer input, its activated
    /// output and the gradient with respect to that output. Adds the input
    /// gradient into `d_input` when given.
    pub(crate) fn backward(
        &self,
        ps: &ParameterSet,
        input: &[f64],
        output: &[f64],
        d_output: &[f64],
        grads: &mut GradientSet,
        d_input: Option<&mut [f64]>,
    ) {
        let dz: Vec<f64> = output
            .iter()
            .zip(d_output)
            .map(|(&y, &dy)| dy * self.activation.derivative_from_output(y))
            .collect();
        {
            let gw = grads.get_mut(self.weight);
            for (i, &g) in dz.iter().enumerate() {
                if g != 0.0 {
                    let row = &mut gw[i * self.inputs..(i + 1) * self.inputs];
                    for (r, &x) in row.iter_mut().zip(input) {
                        *r += g * x;
                    }
                }
            }
        }
        {
            let gb = grads.get_mut(self.bias);
            for (b, &g) in gb.iter_mut().zip(&dz) {
                *b += g;
            }
        }
        if let Some(dx) = d_input {
            let w = ps.get(self.weight);
            for (i, &g) in dz.iter().enumerate() {
                if g != 0.0 {
                    let row = &w[i * self.inputs..(i + 1) * self.inputs];
                    for (d, &wv) in dx.iter_mut().zip(row) {
                        *d += g * wv;
                    }
                }
            }
        }
    }
}

/// Multi-layer perceptron: ReLU hidden layers with optional inverted dropout,
/// followed by an output layer with its own activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    dropout: f64,
}

/// Values recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `inputs[l]` is what layer `l` consumed (after dropout of the previous layer).
    inputs: Vec<Vec<f64>>,
    /// Activated outputs of every layer before dropout.
    outputs: Vec<Vec<f64>>,
    /// Per hidden layer: dropout multipliers (0 or 1/(1-p)), when dropout was applied.
    masks: Vec<Option<Vec<f64>>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn register<R: Rng + ?Sized>(
        ps: &mut ParameterSet,
        name: &str,
        sizes: &[usize],
        output_activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, io)| {
                let act = if l == last {
                    output_activation
                } else {
                    Activation::Relu
                };
                Dense::register(ps, &format!("{name}.{l}"), io[0], io[1], act, rng)
            })
            .collect();
        Mlp { layers, dropout }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn forward(&self, ps: &ParameterSet, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut y = vec![0.0; layer.outputs];
            layer.forward_into(ps, &x, &mut y);
            x = y;
        }
        Ok(x)
    }

    /// Forward pass that records a trace. Dropout is applied to hidden layers
    /// only when `rng` is supplied (training mode).
    pub fn forward_trace<R: Rng + ?Sized>(
        &self,
        ps: &ParameterSet,
        input: &[f64],
        mut rng: Option<&mut R>,
    ) -> Result<MlpTrace> {
        self.check_input(input)?;
        let n = self.layers.len();
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut x = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.outputs];
            layer.forward_into(ps, &x, &mut y);
            let hidden = l + 1 < n;
            let mask = match rng.as_deref_mut() {
                Some(rng) if hidden && self.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - self.dropout);
                    Some(
                        (0..y.len())
                            .map(|_| if rng.gen::<f64>() < self.dropout { 0.0 } else { keep })
                            .collect::<Vec<f64>>(),
                    )
                }
                _ => None,
            };
            let next = match &mask {
                Some(m) => y.iter().zip(m).map(|(v, k)| v * k).collect(),
                None => y.clone(),
            };
            trace.inputs.push(x);
            trace.outputs.push(y);
            trace.masks.push(mask);
            x = next;
        }
        Ok(trace)
    }

    /// Backpropagates `d_output` through a recorded pass, accumulating into
    /// `grads` and returning the gradient with respect to the network input.
    pub fn backward(
        &self,
        ps: &ParameterSet,
        trace: &MlpTrace,
        d_output: &[f64],
        grads: &mut GradientSet,
    ) -> Result<Vec<f64>> {
        if trace.outputs.len() != self.layers.len() {
            return Err(Error::Shape("trace was recorded by a different network".into()));
        }
        if d_output.len() != self.output_size() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, network has {} outputs",
                d_output.len(),
                self.output_size()
            )));
        }
        let mut dy = d_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &trace.masks[l] {
                dy.iter_mut().zip(mask).for_each(|(d, k)| *d *= k);
            }
            let mut dx = vec![0.0; layer.inputs];
            layer.backward(ps, &trace.inputs[l], &trace.outputs[l], &dy, grads, Some(&mut dx));
            dy = dx;
        }
        Ok(dy)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                input.len()
            )));
        }
        Ok(())
    }
}
