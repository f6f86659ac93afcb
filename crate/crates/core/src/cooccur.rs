//! Label co-occurrence counts, the GloVe weighting function, and the
//! normalized label-correlation matrix fed to the graph convolutions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Symmetric `C × C` counts; `counts[[i, j]]` is the number of samples
/// carrying both labels, so the diagonal holds per-class frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    counts: Array2<u64>,
}

impl CooccurrenceMatrix {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        let (r, c) = counts.dim();
        if r != c {
            return Err(Error::Dimension {
                context: "co-occurrence matrix columns",
                expected: r,
                actual: c,
            });
        }
        Ok(CooccurrenceMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[[i, j]]
    }

    pub fn class_counts(&self) -> Vec<u64> {
        self.counts.diag().to_vec()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.counts.mapv(|v| v as f64)
    }
}

pub fn build_cooccurrence(dataset: &Dataset) -> CooccurrenceMatrix {
    let c = dataset.num_classes();
    let mut counts = Array2::<u64>::zeros((c, c));
    for s in &dataset.samples {
        let active: Vec<usize> = s.active().collect();
        for &i in &active {
            for &j in &active {
                counts[[i, j]] += 1;
            }
        }
    }
    CooccurrenceMatrix { counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightingConfig {
    pub x_max: f64,
    pub exponent: f64,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            x_max: 100.0,
            exponent: 0.75,
        }
    }
}

impl WeightingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return Err(Error::config("weighting.x_max", "must be positive"));
        }
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(Error::config("weighting.exponent", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// GloVe weighting `f(x) = min(1, (x / x_max)^exponent)`, with `f(0) = 0`.
pub fn weight(x: f64, cfg: &WeightingConfig) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < cfg.x_max {
        (x / cfg.x_max).powf(cfg.exponent)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// Conditional probabilities, binarized at the threshold and reweighted.
    Reweighted,
    /// Raw conditional probabilities off the diagonal, ones on it.
    RawConditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjacencyConfig {
    pub threshold: f64,
    pub reweight: f64,
    pub mode: AdjacencyMode,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        AdjacencyConfig {
            threshold: 0.4,
            reweight: 0.2,
            mode: AdjacencyMode::Reweighted,
        }
    }
}

impl AdjacencyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("adjacency.threshold", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.reweight) {
            return Err(Error::config("adjacency.reweight", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Conditional-probability adjacency. With `P[i][j] = X[i][j] / N[i]`:
/// off-diagonal entries are binarized at `threshold`, each row's neighbours
/// share mass `reweight`, and the self-loop keeps `1 - reweight`.
pub fn build_adjacency(x: &CooccurrenceMatrix, cfg: &AdjacencyConfig) -> Array2<f64> {
    let c = x.num_classes();
    let n = x.class_counts();
    let cond = |i: usize, j: usize| -> f64 {
        if n[i] == 0 {
            0.0
        } else {
            x.get(i, j) as f64 / n[i] as f64
        }
    };
    let mut a = Array2::<f64>::zeros((c, c));
    match cfg.mode {
        AdjacencyMode::RawConditional => {
            for i in 0..c {
                if n[i] == 0 {
                    continue;
                }
                for j in 0..c {
                    a[[i, j]] = if i == j { 1.0 } else { cond(i, j) };
                }
            }
        }
        AdjacencyMode::Reweighted => {
            for i in 0..c {
                if n[i] == 0 {
                    continue;
                }
                let neighbours: Vec<usize> = (0..c)
                    .filter(|&j| j != i && cond(i, j) >= cfg.threshold && x.get(i, j) > 0)
                    .collect();
                if !neighbours.is_empty() {
                    let share = cfg.reweight / neighbours.len() as f64;
                    for &j in &neighbours {
                        a[[i, j]] = share;
                    }
                }
                a[[i, i]] = 1.0 - cfg.reweight;
            }
        }
    }
    a
}

/// `C × C` degree-normalized correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCorrelation {
    matrix: Array2<f64>,
}

impl NormalizedCorrelation {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn identity(c: usize) -> Self {
        NormalizedCorrelation {
            matrix: Array2::eye(c),
        }
    }

    /// Wraps an already-normalized matrix, e.g. one read from a checkpoint.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                context: "correlation matrix columns",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "correlation matrix must be finite and nonnegative".into(),
            ));
        }
        Ok(NormalizedCorrelation { matrix })
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Symmetric degree normalization `D^{-1/2} A D^{-1/2}`, `D` the row sums.
/// Zero-sum rows stay zero except for a unit self-loop.
pub fn normalize_adjacency(a: &Array2<f64>) -> Result<NormalizedCorrelation> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::Dimension {
            context: "adjacency columns",
            expected: r,
            actual: c,
        });
    }
    if let Some(v) = a.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "adjacency entries must be finite and nonnegative, found {v}"
        )));
    }
    let inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|row| {
            let s: f64 = row.sum();
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut b = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        if inv_sqrt[i] == 0.0 {
            b[[i, i]] = 1.0;
            continue;
        }
        for j in 0..r {
            b[[i, j]] = (inv_sqrt[i] * inv_sqrt[j]) * a[[i, j]];
        }
    }
    Ok(NormalizedCorrelation { matrix: b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, LabelEntry, LabelKind, Sample, SplitTag, Vocabulary};
    use proptest::prelude::*;
    use rand::Rng;

    fn vocab(c: usize) -> Vocabulary {
        Vocabulary::new(
            (0..c)
                .map(|i| LabelEntry {
                    name: format!("L{i}"),
                    kind: if i == 0 { LabelKind::SP } else { LabelKind::AS },
                })
                .collect(),
        )
        .unwrap()
    }

    fn dataset(c: usize, label_sets: &[&[usize]]) -> Dataset {
        Dataset {
            vocabulary: vocab(c),
            samples: label_sets
                .iter()
                .enumerate()
                .map(|(k, set)| {
                    let mut labels = vec![false; c];
                    for &i in *set {
                        labels[i] = true;
                    }
                    Sample {
                        id: format!("s{k}"),
                        subject_id: "f".into(),
                        features: vec![0.0],
                        labels,
                    }
                })
                .collect(),
            split_tag: SplitTag::Train,
        }
    }

    #[test]
    fn single_sample_counts() {
        let x = build_cooccurrence(&dataset(3, &[&[0, 1]]));
        assert_eq!(x.get(0, 1), 1);
        assert_eq!(x.get(1, 0), 1);
        assert_eq!(x.get(0, 0), 1);
        assert_eq!(x.get(1, 1), 1);
        for k in 0..3 {
            assert_eq!(x.get(2, k), 0);
            assert_eq!(x.get(k, 2), 0);
        }
    }

    #[test]
    fn two_sample_counts() {
        let x = build_cooccurrence(&dataset(3, &[&[0, 1], &[0]]));
        assert_eq!(x.get(0, 0), 2);
        assert_eq!(x.get(0, 1), 1);
        assert_eq!(x.get(1, 1), 1);
        assert_eq!(x.class_counts(), vec![2, 1, 0]);
    }

    #[test]
    fn random_counts_match_pair_recount() {
        let mut rng = crate::seed::rng_from(17);
        let c = 6;
        let sets: Vec<Vec<usize>> = (0..50)
            .map(|_| {
                let mut v: Vec<usize> = (0..c).filter(|_| rng.random::<f64>() < 0.4).collect();
                if v.is_empty() {
                    v.push(rng.random_range(0..c));
                }
                v
            })
            .collect();
        let refs: Vec<&[usize]> = sets.iter().map(|v| v.as_slice()).collect();
        let x = build_cooccurrence(&dataset(c, &refs));
        for i in 0..c {
            for j in 0..c {
                let mut n = 0;
                for s in &sets {
                    if s.contains(&i) && s.contains(&j) {
                        n += 1;
                    }
                }
                assert_eq!(x.get(i, j), n, "pair ({i},{j})");
            }
        }
    }

    #[test]
    fn weight_cases() {
        let cfg = WeightingConfig::default();
        assert_eq!(weight(0.0, &cfg), 0.0);
        assert_eq!(weight(cfg.x_max, &cfg), 1.0);
        assert_eq!(weight(10.0 * cfg.x_max, &cfg), 1.0);
        let half = weight(cfg.x_max / 2.0, &cfg);
        assert!((half - 2f64.powf(-0.75)).abs() < 1e-12);
        assert!((half - 0.594604).abs() < 1e-6);
    }

    #[test]
    fn independent_labels_give_diagonal_adjacency() {
        let x = build_cooccurrence(&dataset(2, &[&[0], &[1]]));
        let cfg = AdjacencyConfig::default();
        let a = build_adjacency(&x, &cfg);
        assert_eq!(a[[0, 0]], 1.0 - cfg.reweight);
        assert_eq!(a[[1, 1]], 1.0 - cfg.reweight);
        assert_eq!(a[[0, 1]], 0.0);
        assert_eq!(a[[1, 0]], 0.0);
    }

    #[test]
    fn zero_reweight_is_identity() {
        let x = build_cooccurrence(&dataset(3, &[&[0, 1], &[1, 2], &[0, 1, 2]]));
        let cfg = AdjacencyConfig {
            reweight: 0.0,
            ..Default::default()
        };
        assert_eq!(build_adjacency(&x, &cfg), Array2::<f64>::eye(3));
    }

    #[test]
    fn hand_counted_adjacency() {
        // N_0 = 10, X_01 = 5, X_02 = 1: label 1 is the only neighbour above 0.4.
        let mut counts = Array2::<u64>::zeros((3, 3));
        counts[[0, 0]] = 10;
        counts[[1, 1]] = 8;
        counts[[2, 2]] = 6;
        counts[[0, 1]] = 5;
        counts[[1, 0]] = 5;
        counts[[0, 2]] = 1;
        counts[[2, 0]] = 1;
        let x = CooccurrenceMatrix::from_counts(counts).unwrap();
        let a = build_adjacency(
            &x,
            &AdjacencyConfig {
                threshold: 0.4,
                reweight: 0.2,
                mode: AdjacencyMode::Reweighted,
            },
        );
        assert!((a[[0, 1]] - 0.2).abs() < 1e-15);
        assert!((a[[0, 0]] - 0.8).abs() < 1e-15);
        assert_eq!(a[[0, 2]], 0.0);
    }

    #[test]
    fn absent_label_row_is_zero() {
        let x = build_cooccurrence(&dataset(3, &[&[0, 1]]));
        let a = build_adjacency(&x, &AdjacencyConfig::default());
        assert!(a.row(2).iter().all(|&v| v == 0.0));
        let b = normalize_adjacency(&a).unwrap();
        assert_eq!(b.matrix()[[2, 2]], 1.0);
    }

    #[test]
    fn normalize_identity_and_uniform() {
        let eye = Array2::<f64>::eye(4);
        assert_eq!(normalize_adjacency(&eye).unwrap().matrix(), &eye);
        let ones = Array2::<f64>::ones((2, 2));
        let b = normalize_adjacency(&ones).unwrap();
        assert!(b.matrix().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_rejects_negative() {
        let mut a = Array2::<f64>::eye(2);
        a[[0, 1]] = -0.1;
        assert!(normalize_adjacency(&a).is_err());
    }

    #[test]
    fn normalize_matches_elementwise_formula() {
        let mut rng = crate::seed::rng_from(3);
        let a = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>());
        let b = normalize_adjacency(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let di: f64 = (0..4).map(|k| a[[i, k]]).sum();
                let dj: f64 = (0..4).map(|k| a[[j, k]]).sum();
                let want = a[[i, j]] / (di * dj).sqrt();
                assert!((b.matrix()[[i, j]] - want).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn cooccurrence_invariants(sets in prop::collection::vec(prop::collection::btree_set(0usize..5, 1..4), 1..30)) {
            let vecs: Vec<Vec<usize>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
            let refs: Vec<&[usize]> = vecs.iter().map(|v| v.as_slice()).collect();
            let x = build_cooccurrence(&dataset(5, &refs));
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(x.get(i, j), x.get(j, i));
                    prop_assert!(x.get(i, j) <= x.get(i, i).min(x.get(j, j)));
                }
            }
        }

        #[test]
        fn weight_is_monotone_and_bounded(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let cfg = WeightingConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (wl, wh) = (weight(lo, &cfg), weight(hi, &cfg));
            prop_assert!(wl <= wh);
            prop_assert!((0.0..=1.0).contains(&wl) && (0.0..=1.0).contains(&wh));
        }

        #[test]
        fn normalize_preserves_symmetry(vals in prop::collection::vec(0.0f64..3.0, 10)) {
            let mut a = Array2::<f64>::zeros((4, 4));
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    a[[i, j]] = vals[k];
                    a[[j, i]] = vals[k];
                    k += 1;
                }
            }
            let b = normalize_adjacency(&a).unwrap();
            let m = b.matrix();
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(m[[i, j]], m[[j, i]]);
                }
            }
        }
    }
}
