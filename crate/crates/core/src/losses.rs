//! Classification and contrastive objectives with exact gradients.
//!
//! * multi-label loss: mean over classes of sigmoid binary cross-entropy;
//! * contrastive loss over ordered pairs of a batch, pulling same-label
//!   representations together (`α (1 - sim)`) and pushing different-label
//!   ones apart (`β (1 + sim)`), `sim` the cosine similarity;
//! * total: `mll + λ · contrastive`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairNormalization {
    /// Plain sum over all ordered pairs.
    RawSum,
    /// Positive and negative sums each divided by their pair counts.
    PairMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub contrastive_normalization: PairNormalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.75,
            beta: 0.25,
            lambda: 0.1,
            contrastive_normalization: PairNormalization::PairMean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss.alpha", self.alpha),
            ("loss.beta", self.beta),
            ("loss.lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a nonnegative finite number"));
            }
        }
        Ok(())
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from a logit: `max(v, 0) - v y + ln(1 + e^{-|v|})`.
fn bce_logit(v: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    v.max(0.0) - v * t + (-v.abs()).exp().ln_1p()
}

pub fn mll_loss(scores: ArrayView1<f64>, targets: &[bool]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::Dimension {
            context: "scores vs targets",
            expected: targets.len(),
            actual: scores.len(),
        });
    }
    let c = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(targets)
        .map(|(&v, &y)| bce_logit(v, y))
        .sum::<f64>()
        / c)
}

/// `∂mll/∂score_c = (σ(score_c) - y_c) / C`.
pub fn mll_gradient(scores: ArrayView1<f64>, targets: &[bool]) -> Array1<f64> {
    let c = scores.len() as f64;
    Array1::from_iter(
        scores
            .iter()
            .zip(targets)
            .map(|(&v, &y)| (sigmoid(v) - if y { 1.0 } else { 0.0 }) / c),
    )
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    checked_cosine(a, b).unwrap_or(0.0)
}

/// Cosine similarity, or `None` for a zero-norm input.
pub fn checked_cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Similarity with its gradients with respect to `a` and `b`.
fn cosine_with_grad(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<(f64, Array1<f64>, Array1<f64>)> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let s = a.dot(&b) / (na * nb);
    let ga = &b / (na * nb) - &a * (s / (na * na));
    let gb = &a / (na * nb) - &b * (s / (nb * nb));
    Some((s.clamp(-1.0, 1.0), ga, gb))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    /// Ordered pairs where a representation had zero norm (similarity taken as 0).
    pub degenerate_pairs: usize,
    /// Set when the batch had fewer than two members.
    pub undersized: bool,
}

fn contrastive_impl(
    reps: ArrayView2<f64>,
    labels: &[usize],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(ContrastiveOutput, Array2<f64>)> {
    let n = reps.nrows();
    if labels.len() != n {
        return Err(Error::Dimension {
            context: "contrastive labels vs batch",
            expected: n,
            actual: labels.len(),
        });
    }
    let mut grad = Array2::<f64>::zeros(if want_grad { reps.dim() } else { (0, 0) });
    let mut out = ContrastiveOutput::default();
    if n < 2 {
        out.undersized = true;
        return Ok((out, grad));
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                out.positive_pairs += 1;
            } else {
                out.negative_pairs += 1;
            }
        }
    }
    let (pos_w, neg_w) = match cfg.contrastive_normalization {
        PairNormalization::RawSum => (cfg.alpha, cfg.beta),
        PairNormalization::PairMean => (
            if out.positive_pairs > 0 {
                cfg.alpha / out.positive_pairs as f64
            } else {
                0.0
            },
            if out.negative_pairs > 0 {
                cfg.beta / out.negative_pairs as f64
            } else {
                0.0
            },
        ),
    };
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let positive = labels[i] == labels[j];
            let (xi, xj) = (reps.row(i), reps.row(j));
            let s = if want_grad {
                match cosine_with_grad(xi, xj) {
                    Some((s, gi, gj)) => {
                        let coef = if positive { -pos_w } else { neg_w };
                        grad.row_mut(i).scaled_add(coef, &gi);
                        grad.row_mut(j).scaled_add(coef, &gj);
                        s
                    }
                    None => {
                        out.degenerate_pairs += 1;
                        0.0
                    }
                }
            } else {
                match checked_cosine(xi, xj) {
                    Some(s) => s,
                    None => {
                        out.degenerate_pairs += 1;
                        0.0
                    }
                }
            };
            if positive {
                pos_sum += 1.0 - s;
            } else {
                neg_sum += 1.0 + s;
            }
        }
    }
    out.loss = pos_w * pos_sum + neg_w * neg_sum;
    Ok((out, grad))
}

/// Contrastive loss of a batch of representations (`n × D`) with single
/// surrogate labels.
pub fn contrastive_loss(
    reps: ArrayView2<f64>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<ContrastiveOutput> {
    contrastive_impl(reps, labels, cfg, false).map(|(o, _)| o)
}

pub fn contrastive_gradients(
    reps: ArrayView2<f64>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(ContrastiveOutput, Array2<f64>)> {
    contrastive_impl(reps, labels, cfg, true)
}

pub fn total_loss(mll: f64, contrastive: f64, cfg: &LossConfig) -> f64 {
    mll + cfg.lambda * contrastive
}

/// Value and gradients of a minibatch objective: mean per-sample
/// multi-label loss plus `λ` times the batch contrastive loss.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub total: f64,
    pub mll: f64,
    pub contrastive: Option<ContrastiveOutput>,
    /// `n × C` gradient with respect to raw scores.
    pub d_scores: Array2<f64>,
    /// `n × D` gradient with respect to representations (contrastive part).
    pub d_reps: Array2<f64>,
}

/// `contrastive_labels = None` disables the contrastive term entirely.
pub fn loss_gradients(
    scores: ArrayView2<f64>,
    targets: &[Vec<bool>],
    reps: ArrayView2<f64>,
    contrastive_labels: Option<&[usize]>,
    cfg: &LossConfig,
) -> Result<BatchLoss> {
    let n = scores.nrows();
    if targets.len() != n || reps.nrows() != n {
        return Err(Error::Dimension {
            context: "batch size",
            expected: n,
            actual: targets.len().min(reps.nrows()),
        });
    }
    let mut mll = 0.0;
    let mut d_scores = Array2::<f64>::zeros(scores.dim());
    for (i, t) in targets.iter().enumerate() {
        mll += mll_loss(scores.row(i), t)?;
        d_scores
            .row_mut(i)
            .assign(&(mll_gradient(scores.row(i), t) / n as f64));
    }
    mll /= n as f64;

    let mut d_reps = Array2::<f64>::zeros(reps.dim());
    let contrastive = match contrastive_labels {
        Some(labels) => {
            let (out, g) = contrastive_gradients(reps, labels, cfg)?;
            d_reps.scaled_add(cfg.lambda, &g);
            Some(out)
        }
        None => None,
    };
    let total = total_loss(mll, contrastive.as_ref().map_or(0.0, |c| c.loss), cfg);
    Ok(BatchLoss {
        total,
        mll,
        contrastive,
        d_scores,
        d_reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::testutil::{central_difference, rel_err};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed);
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mll_saturated_and_uninformative() {
        let y = [true, false, true];
        let s = array![40.0, -40.0, 40.0];
        assert!(mll_loss(s.view(), &y).unwrap() < 1e-15);
        let zero = Array1::zeros(3);
        assert!((mll_loss(zero.view(), &y).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((mll_loss(zero.view(), &[false; 3]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mll_matches_direct_bce() {
        let s = array![0.3, -1.2, 2.5, 0.0, -0.7];
        let y = [true, false, false, true, true];
        let mut want = 0.0;
        for c in 0..5 {
            let p = 1.0 / (1.0 + (-s[c] as f64).exp());
            want -= if y[c] { p.ln() } else { (1.0 - p).ln() };
        }
        want /= 5.0;
        assert!((mll_loss(s.view(), &y).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn mll_gradient_formula() {
        let s = array![0.3, -1.2];
        let g = mll_gradient(s.view(), &[true, false]);
        assert!((g[0] - (sigmoid(0.3) - 1.0) / 2.0).abs() < 1e-15);
        assert!((g[1] - sigmoid(-1.2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_cases() {
        let a = array![1.0, 2.0, -3.0];
        assert!((cosine_similarity(a.view(), a.view()) - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(a.view(), (-&a).view()) + 1.0).abs() < 1e-15);
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(cosine_similarity(e1.view(), e2.view()), 0.0);
        assert_eq!(cosine_similarity(e1.view(), array![0.0, 0.0].view()), 0.0);
    }

    #[test]
    fn contrastive_perfect_cases() {
        let cfg = LossConfig::default();
        let same = array![[1.0, 2.0], [1.0, 2.0]];
        assert!(contrastive_loss(same.view(), &[0, 0], &cfg).unwrap().loss.abs() < 1e-15);
        let opposite = array![[1.0, 2.0], [-1.0, -2.0]];
        assert!(contrastive_loss(opposite.view(), &[0, 1], &cfg).unwrap().loss.abs() < 1e-15);
    }

    #[test]
    fn contrastive_hand_sum() {
        // x0 = e1, x1 = e1 (same label), x2 = e2 (other label).
        // sims: s01 = 1, s02 = 0, s12 = 0.
        let reps = array![[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
        let cfg = LossConfig {
            contrastive_normalization: PairNormalization::RawSum,
            ..Default::default()
        };
        let out = contrastive_loss(reps.view(), &[0, 0, 1], &cfg).unwrap();
        // Ordered pairs: (0,1),(1,0) positive -> 0.75*(1-1) each;
        // (0,2),(2,0),(1,2),(2,1) negative -> 0.25*(1+0) each.
        assert_eq!(out.positive_pairs, 2);
        assert_eq!(out.negative_pairs, 4);
        assert!((out.loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contrastive_undersized_and_degenerate() {
        let cfg = LossConfig::default();
        let one = array![[1.0, 0.0]];
        let out = contrastive_loss(one.view(), &[0], &cfg).unwrap();
        assert!(out.undersized);
        assert_eq!(out.loss, 0.0);
        let with_zero = array![[0.0, 0.0], [1.0, 0.0]];
        let out = contrastive_loss(with_zero.view(), &[0, 1], &cfg).unwrap();
        assert_eq!(out.degenerate_pairs, 2);
    }

    #[test]
    fn total_loss_cases() {
        let cfg = LossConfig::default();
        assert!((total_loss(0.5, 2.0, &cfg) - 0.7).abs() < 1e-15);
        assert_eq!(total_loss(0.5, 0.0, &cfg), 0.5);
        let off = LossConfig {
            lambda: 0.0,
            ..cfg
        };
        assert_eq!(total_loss(0.5, 2.0, &off), 0.5);
    }

    #[test]
    fn zero_lambda_kills_representation_gradient() {
        let scores = random_matrix(4, 3, 1);
        let reps = random_matrix(4, 5, 2);
        let targets = vec![vec![true, false, true]; 4];
        let cfg = LossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let out = loss_gradients(scores.view(), &targets, reps.view(), Some(&[0, 1, 0, 1]), &cfg)
            .unwrap();
        assert!(out.d_reps.iter().all(|&v| v == 0.0));
    }

    fn check_fd(norm: PairNormalization, seed: u64) {
        let (n, c, d) = (6, 4, 5);
        let scores = random_matrix(n, c, seed) * 3.0;
        let reps = random_matrix(n, d, seed + 1);
        let mut rng = rng_from(seed + 2);
        let targets: Vec<Vec<bool>> = (0..n)
            .map(|_| (0..c).map(|_| rng.random::<bool>()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let cfg = LossConfig {
            contrastive_normalization: norm,
            ..Default::default()
        };
        let f = |s: &Array2<f64>, r: &Array2<f64>| {
            loss_gradients(s.view(), &targets, r.view(), Some(&labels), &cfg)
                .unwrap()
                .total
        };
        let g = loss_gradients(scores.view(), &targets, reps.view(), Some(&labels), &cfg).unwrap();
        for i in 0..n {
            for k in 0..c {
                let num = central_difference(
                    |h| {
                        let mut s = scores.clone();
                        s[[i, k]] += h;
                        f(&s, &reps)
                    },
                    1e-6,
                );
                assert!(rel_err(g.d_scores[[i, k]], num) < 1e-4);
            }
            for k in 0..d {
                let num = central_difference(
                    |h| {
                        let mut r = reps.clone();
                        r[[i, k]] += h;
                        f(&scores, &r)
                    },
                    1e-6,
                );
                let e = rel_err(g.d_reps[[i, k]], num);
                assert!(e < 1e-4, "rep ({i},{k}) rel err {e}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            check_fd(PairNormalization::PairMean, seed * 7);
            check_fd(PairNormalization::RawSum, seed * 7 + 3);
        }
    }

    proptest! {
        #[test]
        fn contrastive_scale_invariant(seed in 0u64..1000, c in prop::sample::select(vec![0.5, 3.0, 17.0])) {
            let reps = random_matrix(6, 4, seed);
            let labels = [0, 1, 0, 2, 1, 0];
            for norm in [PairNormalization::PairMean, PairNormalization::RawSum] {
                let cfg = LossConfig { contrastive_normalization: norm, ..Default::default() };
                let a = contrastive_loss(reps.view(), &labels, &cfg).unwrap().loss;
                let b = contrastive_loss((&reps * c).view(), &labels, &cfg).unwrap().loss;
                prop_assert!((a - b).abs() < 1e-10);
                prop_assert!(a >= 0.0);
            }
        }

        #[test]
        fn mll_nonnegative(vals in prop::collection::vec(-50.0f64..50.0, 1..10), bits in prop::collection::vec(any::<bool>(), 10)) {
            let s = Array1::from(vals.clone());
            let loss = mll_loss(s.view(), &bits[..vals.len()]).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
