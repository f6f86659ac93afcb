//! Fully-connected feature encoder producing the `D`-dimensional sample
//! representation `x`. Stands in for a convolutional backbone; only the
//! contract "features in, `x ∈ R^D` out" matters to the rest of the model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output widths of each layer; the last one is `D`.
    pub layer_widths: Vec<usize>,
    pub slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layer_widths: vec![64, 32],
            slope: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() {
            return Err(Error::config("encoder.layer_widths", "must be nonempty"));
        }
        if let Some(i) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::config(
                format!("encoder.layer_widths[{i}]"),
                "must be positive",
            ));
        }
        if !self.slope.is_finite() {
            return Err(Error::config("encoder.slope", "must be finite"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    inputs: Vec<Array2<f64>>,
    pre_activation: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Encoder {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("encoder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::Dimension {
                    context: "encoder bias length",
                    expected: l.weight.nrows(),
                    actual: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::Dimension {
                    context: "encoder layer chaining",
                    expected: layers[i - 1].weight.nrows(),
                    actual: l.weight.ncols(),
                });
            }
        }
        Ok(Encoder { layers })
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn random(input_dim: usize, cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from(seed);
        let n = cfg.layer_widths.len();
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(n);
        for (l, &out) in cfg.layer_widths.iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            layers.push(DenseLayer {
                weight: Array2::from_shape_fn((out, fan_in), |_| rng.random_range(-bound..=bound)),
                bias: Array1::zeros(out),
                activation: if l + 1 == n {
                    Activation::Identity
                } else {
                    Activation::LeakyRelu { slope: cfg.slope }
                },
            });
            fan_in = out;
        }
        Encoder::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    /// Encodes a batch (`n × D_in`) into representations (`n × D`).
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        if features.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "encoder input width",
                expected: self.input_dim(),
                actual: features.ncols(),
            });
        }
        let mut h = features.to_owned();
        let mut cache = EncoderCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activation: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let pre = h.dot(&layer.weight.t()) + &layer.bias;
            let out = pre.mapv(|v| layer.activation.apply(v));
            cache.inputs.push(h);
            cache.pre_activation.push(pre);
            h = out;
        }
        Ok((h, cache))
    }

    pub fn encode(&self, features: ArrayView1<f64>) -> Result<Array1<f64>> {
        let batch = features.insert_axis(Axis(0));
        let (x, _) = self.forward(batch)?;
        Ok(x.row(0).to_owned())
    }

    pub fn backward(&self, upstream: ArrayView2<f64>, cache: &EncoderCache) -> EncoderGradients {
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut grad = upstream.to_owned();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let mut d_pre = grad;
            d_pre.zip_mut_with(&cache.pre_activation[l], |g, &p| {
                *g *= layer.activation.derivative(p)
            });
            weights[l] = d_pre.t().dot(&cache.inputs[l]);
            biases[l] = d_pre.sum_axis(Axis(0));
            grad = d_pre.dot(&layer.weight);
        }
        EncoderGradients {
            weights,
            biases,
            input: grad,
        }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in self.layers.iter_mut() {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl EncoderGradients {
    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}
