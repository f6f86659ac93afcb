//! Stacked graph convolutions mapping label embeddings to per-class
//! classifiers: `G^{l+1} = h(B G^l W^l)`, `G^0 = Z`, `K = G^L`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;

use crate::activation::Activation;
use crate::cooccur::NormalizedCorrelation;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    /// `d_in × d_out` transformation.
    pub weight: Array2<f64>,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    pub layers: Vec<GcnLayer>,
}

impl GcnStack {
    pub fn new(layers: Vec<GcnLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("graph stack needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Dimension {
                    context: "graph layer chaining",
                    expected: w[0].out_dim(),
                    actual: w[1].in_dim(),
                });
            }
        }
        Ok(GcnStack { layers })
    }

    /// Random stack through `dims` (`dims[0] = d`, last = `D`). Hidden layers
    /// use the leaky rectifier; the output layer is linear. Weights are
    /// uniform in `±1/sqrt(fan_in)`.
    pub fn random(dims: &[usize], slope: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidInput(
                "graph stack needs input and output dimensions".into(),
            ));
        }
        let mut rng = rng_from(seed);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let bound = 1.0 / (dims[l] as f64).sqrt();
                GcnLayer {
                    weight: Array2::from_shape_fn((dims[l], dims[l + 1]), |_| {
                        rng.random_range(-bound..=bound)
                    }),
                    activation: if l + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::LeakyRelu { slope }
                    },
                }
            })
            .collect();
        GcnStack::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }
}

/// `C × D` classifier; row `c` scores class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierMatrix {
    k: Array2<f64>,
}

impl ClassifierMatrix {
    pub fn new(k: Array2<f64>) -> Self {
        ClassifierMatrix { k }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn num_classes(&self) -> usize {
        self.k.nrows()
    }

    pub fn dim(&self) -> usize {
        self.k.ncols()
    }
}

/// Per-layer values kept from the forward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `B G^l` for each layer.
    propagated: Vec<Array2<f64>>,
    /// `B G^l W^l` for each layer.
    pre_activation: Vec<Array2<f64>>,
}

pub fn gcn_forward(
    z: ArrayView2<f64>,
    b: &NormalizedCorrelation,
    stack: &GcnStack,
) -> Result<(ClassifierMatrix, GcnCache)> {
    let bm = b.matrix();
    if bm.ncols() != z.nrows() {
        return Err(Error::Dimension {
            context: "correlation matrix vs embedding rows",
            expected: z.nrows(),
            actual: bm.ncols(),
        });
    }
    if z.ncols() != stack.input_dim() {
        return Err(Error::Dimension {
            context: "embedding dimensionality vs graph input",
            expected: stack.input_dim(),
            actual: z.ncols(),
        });
    }
    let mut g = z.to_owned();
    let mut cache = GcnCache {
        propagated: Vec::with_capacity(stack.layers.len()),
        pre_activation: Vec::with_capacity(stack.layers.len()),
    };
    for layer in &stack.layers {
        let bg = bm.dot(&g);
        let pre = bg.dot(&layer.weight);
        g = pre.mapv(|v| layer.activation.apply(v));
        cache.propagated.push(bg);
        cache.pre_activation.push(pre);
    }
    Ok((ClassifierMatrix::new(g), cache))
}

#[derive(Debug, Clone)]
pub struct GcnGradients {
    pub weights: Vec<Array2<f64>>,
    /// Gradient with respect to the input embedding. The trainer keeps the
    /// embedding frozen and ignores it.
    pub input: Array2<f64>,
}

pub fn gcn_gradients(
    upstream: ArrayView2<f64>,
    cache: &GcnCache,
    b: &NormalizedCorrelation,
    stack: &GcnStack,
) -> GcnGradients {
    let bt = b.matrix().t();
    let n = stack.layers.len();
    let mut weights = vec![Array2::zeros((0, 0)); n];
    let mut grad = upstream.to_owned();
    for l in (0..n).rev() {
        let layer = &stack.layers[l];
        let mut d_pre = grad;
        d_pre.zip_mut_with(&cache.pre_activation[l], |g, &p| {
            *g *= layer.activation.derivative(p)
        });
        weights[l] = cache.propagated[l].t().dot(&d_pre);
        grad = bt.dot(&d_pre.dot(&layer.weight.t()));
    }
    GcnGradients {
        weights,
        input: grad,
    }
}

/// Raw (pre-sigmoid) label scores `K x`.
pub fn predict_scores(k: &ClassifierMatrix, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if k.dim() != x.len() {
        return Err(Error::Dimension {
            context: "classifier width vs representation",
            expected: k.dim(),
            actual: x.len(),
        });
    }
    Ok(k.matrix().dot(&x))
}
