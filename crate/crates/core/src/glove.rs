//! GloVe embeddings trained on the label co-occurrence matrix.
//!
//! The objective is the weighted log-bilinear least squares
//!
//! ```text
//! J = sum_{i,j : X_ij > 0} f(X_ij) * (w_i . w~_j + b_i + b~_j - ln X_ij)^2
//! ```
//!
//! minimized full-batch with Adam. Pairs are visited in row-major order so
//! loss and gradients are bit-stable. The returned embedding is `w + w~`.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cooccur::{weight, CooccurrenceMatrix, WeightingConfig};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub w: Array2<f64>,
    pub w_ctx: Array2<f64>,
    pub b: Array1<f64>,
    pub b_ctx: Array1<f64>,
}

impl EmbeddingParams {
    pub fn zeros(c: usize, d: usize) -> Self {
        EmbeddingParams {
            w: Array2::zeros((c, d)),
            w_ctx: Array2::zeros((c, d)),
            b: Array1::zeros(c),
            b_ctx: Array1::zeros(c),
        }
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn random(c: usize, d: usize, scale: f64, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut p = EmbeddingParams::zeros(c, d);
        for v in p
            .w
            .iter_mut()
            .chain(p.w_ctx.iter_mut())
            .chain(p.b.iter_mut())
            .chain(p.b_ctx.iter_mut())
        {
            *v = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn num_classes(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w.as_slice_mut().expect("standard layout"),
            self.w_ctx.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.b_ctx.as_slice_mut().expect("standard layout"),
        ]
    }

    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w.as_slice().expect("standard layout"),
            self.w_ctx.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.b_ctx.as_slice().expect("standard layout"),
        ]
    }

    /// `Z = w + w~`; biases are dropped.
    pub fn embedding(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(&self.w + &self.w_ctx)
    }
}

/// `C × d` label embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    z: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        if z.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "embedding dimensionality must be at least 2, got {}",
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingMatrix { z })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn num_classes(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let a = self.z.row(i);
        let b = self.z.row(j);
        let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            a.dot(&b) / denom
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub init_scale: f64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 32,
            epochs: 256,
            learning_rate: 0.05,
            adam: AdamConfig::default(),
            init_scale: 0.05,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config("glove.dim", "must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("glove.epochs", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("glove.learning_rate", "must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("glove.init_scale", "must be positive"));
        }
        Ok(())
    }
}

fn check_dims(params: &EmbeddingParams, x: &CooccurrenceMatrix) -> Result<()> {
    if params.num_classes() != x.num_classes() {
        return Err(Error::Dimension {
            context: "glove parameter rows",
            expected: x.num_classes(),
            actual: params.num_classes(),
        });
    }
    Ok(())
}

fn residual(p: &EmbeddingParams, i: usize, j: usize, log_x: f64) -> f64 {
    p.w.row(i).dot(&p.w_ctx.row(j)) + p.b[i] + p.b_ctx[j] - log_x
}

pub fn glove_loss(
    params: &EmbeddingParams,
    x: &CooccurrenceMatrix,
    wcfg: &WeightingConfig,
) -> Result<f64> {
    check_dims(params, x)?;
    let c = x.num_classes();
    let mut j_total = 0.0;
    for i in 0..c {
        for j in 0..c {
            let count = x.get(i, j);
            if count == 0 {
                continue;
            }
            let xf = count as f64;
            let r = residual(params, i, j, xf.ln());
            j_total += weight(xf, wcfg) * r * r;
        }
    }
    Ok(j_total)
}

pub fn glove_gradients(
    params: &EmbeddingParams,
    x: &CooccurrenceMatrix,
    wcfg: &WeightingConfig,
) -> Result<EmbeddingParams> {
    check_dims(params, x)?;
    let c = x.num_classes();
    let mut g = EmbeddingParams::zeros(c, params.dim());
    for i in 0..c {
        for j in 0..c {
            let count = x.get(i, j);
            if count == 0 {
                continue;
            }
            let xf = count as f64;
            let scale = 2.0 * weight(xf, wcfg) * residual(params, i, j, xf.ln());
            g.w.row_mut(i).scaled_add(scale, &params.w_ctx.row(j));
            g.w_ctx.row_mut(j).scaled_add(scale, &params.w.row(i));
            g.b[i] += scale;
            g.b_ctx[j] += scale;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct GloveRun {
    pub embedding: EmbeddingMatrix,
    pub params: EmbeddingParams,
    /// `loss_trace[e]` is the objective after `e` updates; entry 0 is the
    /// initial loss.
    pub loss_trace: Vec<f64>,
}

pub fn train_glove(
    x: &CooccurrenceMatrix,
    cfg: &GloveConfig,
    wcfg: &WeightingConfig,
    seed: u64,
) -> Result<GloveRun> {
    cfg.validate()?;
    wcfg.validate()?;
    let c = x.num_classes();
    if c < 2 {
        return Err(Error::InvalidInput("need at least 2 classes".into()));
    }
    let mut params = EmbeddingParams::random(c, cfg.dim, cfg.init_scale, seed);
    let mut opt = Adam::new(cfg.learning_rate, cfg.adam);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let loss = glove_loss(&params, x, wcfg)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { epoch, batch: None });
        }
        trace.push(loss);
        let grads = glove_gradients(&params, x, wcfg)?;
        opt.step(&mut params.slices_mut(), &grads.slices());
    }
    let final_loss = glove_loss(&params, x, wcfg)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite {
            epoch: cfg.epochs,
            batch: None,
        });
    }
    trace.push(final_loss);
    Ok(GloveRun {
        embedding: params.embedding()?,
        params,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, rel_err};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn counts(c: usize, entries: &[(usize, usize, u64)]) -> CooccurrenceMatrix {
        let mut m = Array2::<u64>::zeros((c, c));
        for &(i, j, v) in entries {
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
        CooccurrenceMatrix::from_counts(m).unwrap()
    }

    fn random_counts(c: usize, seed: u64) -> CooccurrenceMatrix {
        let mut rng = rng_from(seed);
        let mut m = Array2::<u64>::zeros((c, c));
        for i in 0..c {
            for j in i..c {
                let v = if rng.random::<f64>() < 0.3 {
                    0
                } else {
                    rng.random_range(1..150)
                };
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        CooccurrenceMatrix::from_counts(m).unwrap()
    }

    #[test]
    fn exact_fit_has_zero_loss() {
        let x = counts(2, &[(0, 1, 1)]);
        let p = EmbeddingParams::zeros(2, 3);
        assert_eq!(glove_loss(&p, &x, &WeightingConfig::default()).unwrap(), 0.0);
        let g = glove_gradients(&p, &x, &WeightingConfig::default()).unwrap();
        assert!(g.w.iter().chain(g.b.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn unit_log_residual_contributes_weight() {
        // X_01 = X_10 = e^1 is not an integer, so test through the closed form
        // with counts 3: each ordered pair contributes f(3) * ln(3)^2.
        let x = counts(2, &[(0, 1, 3)]);
        let w = WeightingConfig::default();
        let p = EmbeddingParams::zeros(2, 2);
        let want = 2.0 * weight(3.0, &w) * 3f64.ln().powi(2);
        assert!((glove_loss(&p, &x, &w).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn loss_matches_double_loop() {
        let x = random_counts(5, 1);
        let w = WeightingConfig::default();
        let p = EmbeddingParams::random(5, 3, 0.5, 2);
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let xij = x.get(i, j) as f64;
                if xij > 0.0 {
                    let mut dot = 0.0;
                    for k in 0..3 {
                        dot += p.w[[i, k]] * p.w_ctx[[j, k]];
                    }
                    let f = if xij < 100.0 { (xij / 100.0).powf(0.75) } else { 1.0 };
                    want += f * (dot + p.b[i] + p.b_ctx[j] - xij.ln()).powi(2);
                }
            }
        }
        let got = glove_loss(&p, &x, &w).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn bias_gradient_closed_form() {
        let x = random_counts(4, 5);
        let w = WeightingConfig::default();
        let p = EmbeddingParams::random(4, 2, 0.3, 6);
        let g = glove_gradients(&p, &x, &w).unwrap();
        for i in 0..4 {
            let mut want = 0.0;
            for j in 0..4 {
                let xij = x.get(i, j) as f64;
                if xij > 0.0 {
                    want += 2.0 * weight(xij, &w) * residual(&p, i, j, xij.ln());
                }
            }
            assert!((g.b[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let w = WeightingConfig::default();
        for seed in 0..5 {
            let x = random_counts(6, seed);
            let p = EmbeddingParams::random(6, 4, 0.5, seed + 100);
            let g = glove_gradients(&p, &x, &w).unwrap();
            let analytic = g.slices();
            for block in 0..4 {
                for k in 0..analytic[block].len() {
                    let numeric = central_difference(
                        |h| {
                            let mut q = p.clone();
                            q.slices_mut()[block][k] += h;
                            glove_loss(&q, &x, &w).unwrap()
                        },
                        1e-5,
                    );
                    let e = rel_err(analytic[block][k], numeric);
                    assert!(e < 1e-4, "block {block} entry {k}: rel err {e}");
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let x = random_counts(6, 9);
        let cfg = GloveConfig {
            dim: 4,
            epochs: 50,
            ..Default::default()
        };
        let w = WeightingConfig::default();
        let a = train_glove(&x, &cfg, &w, 1).unwrap();
        let b = train_glove(&x, &cfg, &w, 1).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.loss_trace.len(), 51);
        assert!(a.loss_trace.last().unwrap() <= a.loss_trace.first().unwrap());
    }

    #[test]
    fn embedding_rejects_tiny_dim() {
        assert!(EmbeddingMatrix::new(Array2::zeros((3, 1))).is_err());
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_symmetric(seed in 0u64..1000) {
            let x = random_counts(4, seed);
            let w = WeightingConfig::default();
            let p = EmbeddingParams::random(4, 3, 1.0, seed ^ 0xabc);
            let l = glove_loss(&p, &x, &w).unwrap();
            prop_assert!(l >= 0.0);
            let swapped = EmbeddingParams {
                w: p.w_ctx.clone(),
                w_ctx: p.w.clone(),
                b: p.b_ctx.clone(),
                b_ctx: p.b.clone(),
            };
            let ls = glove_loss(&swapped, &x, &w).unwrap();
            prop_assert!((l - ls).abs() <= 1e-10 * l.max(1.0));
        }
    }
}
