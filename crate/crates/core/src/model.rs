//! Encoder plus classifier head. The head is either the graph-built
//! classifier over a frozen label embedding and correlation matrix, or a
//! freely trained `C × D` linear layer.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cooccur::NormalizedCorrelation;
use crate::encoder::{Encoder, EncoderCache, EncoderGradients};
use crate::error::{Error, Result};
use crate::glove::EmbeddingMatrix;
use crate::graph::{gcn_forward, gcn_gradients, GcnCache, GcnStack};
use crate::losses::sigmoid;
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcnConfig {
    /// Hidden widths between the embedding and the output layer. `None`
    /// means a single hidden layer as wide as the embedding.
    pub hidden_widths: Option<Vec<usize>>,
    pub slope: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden_widths: None,
            slope: 0.2,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.hidden_widths {
            if let Some(i) = w.iter().position(|&v| v == 0) {
                return Err(Error::config(
                    format!("gcn.hidden_widths[{i}]"),
                    "must be positive",
                ));
            }
        }
        if !self.slope.is_finite() {
            return Err(Error::config("gcn.slope", "must be finite"));
        }
        Ok(())
    }

    /// Layer output sizes from embedding width `d` to representation width `D`.
    pub fn dims(&self, d: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![d];
        match &self.hidden_widths {
            Some(h) => dims.extend_from_slice(h),
            None => dims.push(d),
        }
        dims.push(output);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Gcn(GcnStack),
    /// `C × D`.
    Linear(Array2<f64>),
}

impl Head {
    pub fn random_linear(c: usize, d: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let bound = 1.0 / (d as f64).sqrt();
        Head::Linear(Array2::from_shape_fn((c, d), |_| rng.random_range(-bound..=bound)))
    }

    pub fn is_gcn(&self) -> bool {
        matches!(self, Head::Gcn(_))
    }
}

/// Phase-1 artifacts that stay fixed while the model trains.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGraph {
    pub z: EmbeddingMatrix,
    pub b: NormalizedCorrelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: Encoder,
    pub head: Head,
}

pub struct ForwardCache {
    encoder: EncoderCache,
    gcn: Option<GcnCache>,
    /// `n × D`.
    pub reps: Array2<f64>,
    /// `C × D`.
    pub k: Array2<f64>,
}

pub struct ModelGradients {
    pub encoder: EncoderGradients,
    pub head: Vec<Array2<f64>>,
}

impl ModelGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.slices();
        out.extend(self.head.iter().map(|g| g.as_slice().expect("standard layout")));
        out
    }
}

impl Model {
    pub fn new(encoder: Encoder, head: Head, graph: &LabelGraph) -> Result<Self> {
        let d = encoder.output_dim();
        match &head {
            Head::Gcn(stack) => {
                if stack.input_dim() != graph.z.dim() {
                    return Err(Error::Dimension {
                        context: "graph input vs embedding width",
                        expected: graph.z.dim(),
                        actual: stack.input_dim(),
                    });
                }
                if stack.output_dim() != d {
                    return Err(Error::Dimension {
                        context: "graph output vs representation width",
                        expected: d,
                        actual: stack.output_dim(),
                    });
                }
            }
            Head::Linear(k) => {
                if k.ncols() != d || k.nrows() != graph.z.num_classes() {
                    return Err(Error::Dimension {
                        context: "linear head shape",
                        expected: graph.z.num_classes() * d,
                        actual: k.len(),
                    });
                }
            }
        }
        Ok(Model { encoder, head })
    }

    pub fn classifier(&self, graph: &LabelGraph) -> Result<Array2<f64>> {
        Ok(match &self.head {
            Head::Gcn(stack) => gcn_forward(graph.z.matrix().view(), &graph.b, stack)?
                .0
                .matrix()
                .clone(),
            Head::Linear(k) => k.clone(),
        })
    }

    /// Raw scores (`n × C`) for a feature batch, with everything needed for
    /// [`Model::backward`].
    pub fn forward(
        &self,
        graph: &LabelGraph,
        features: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        let (reps, enc_cache) = self.encoder.forward(features)?;
        let (k, gcn) = match &self.head {
            Head::Gcn(stack) => {
                let (k, cache) = gcn_forward(graph.z.matrix().view(), &graph.b, stack)?;
                (k.matrix().clone(), Some(cache))
            }
            Head::Linear(k) => (k.clone(), None),
        };
        let scores = reps.dot(&k.t());
        Ok((
            scores,
            ForwardCache {
                encoder: enc_cache,
                gcn,
                reps,
                k,
            },
        ))
    }

    /// `d_reps` is any gradient reaching the representations directly
    /// (the contrastive term); it is added to the one flowing back from
    /// the scores.
    pub fn backward(
        &self,
        graph: &LabelGraph,
        cache: &ForwardCache,
        d_scores: ArrayView2<f64>,
        d_reps: ArrayView2<f64>,
    ) -> ModelGradients {
        let d_k = d_scores.t().dot(&cache.reps);
        let d_x = d_scores.dot(&cache.k) + d_reps;
        let encoder = self.encoder.backward(d_x.view(), &cache.encoder);
        let head = match (&self.head, &cache.gcn) {
            (Head::Gcn(stack), Some(gc)) => gcn_gradients(d_k.view(), gc, &graph.b, stack).weights,
            (Head::Linear(_), _) => vec![d_k],
            (Head::Gcn(_), None) => unreachable!("graph head forward always caches"),
        };
        ModelGradients { encoder, head }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.param_slices_mut();
        match &mut self.head {
            Head::Gcn(stack) => out.extend(
                stack
                    .layers
                    .iter_mut()
                    .map(|l| l.weight.as_slice_mut().expect("standard layout")),
            ),
            Head::Linear(k) => out.push(k.as_slice_mut().expect("standard layout")),
        }
        out
    }

    /// Post-sigmoid probabilities, `n × C`.
    pub fn predict(&self, graph: &LabelGraph, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        let reps = self.encoder.forward(features)?.0;
        let k = self.classifier(graph)?;
        Ok(reps.dot(&k.t()).mapv(sigmoid))
    }

    pub fn predict_one(&self, graph: &LabelGraph, features: &Array1<f64>) -> Result<Array1<f64>> {
        let x = self.encoder.encode(features.view())?;
        let k = self.classifier(graph)?;
        Ok(k.dot(&x).mapv(sigmoid))
    }
}
