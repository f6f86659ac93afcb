//! Two-phase pipeline. Phase 1 fits the label embedding on co-occurrence
//! counts, builds the correlation matrix and, when needed, the surrogate
//! contrastive labels. Phase 2 trains encoder and head with momentum SGD.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::cooccur::{
    build_adjacency, build_cooccurrence, normalize_adjacency, AdjacencyConfig, CooccurrenceMatrix,
    WeightingConfig,
};
use crate::corpus::Dataset;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::glove::{train_glove, GloveConfig};
use crate::graph::GcnStack;
use crate::losses::{loss_gradients, LossConfig};
use crate::metrics::{compute_report, exact_match, MetricsReport, ScoreTable, SpAccuracyMode};
use crate::model::{GcnConfig, Head, LabelGraph, Model};
use crate::optim::MomentumSgd;
use crate::relabel::{kmeans, relabel, KMeansConfig, KMeansFit};
use crate::seed::{stage_rng, sub_seed, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveMode {
    None,
    Vanilla,
    ClusterRelabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub name: &'static str,
    pub use_gcn: bool,
    pub contrastive_mode: ContrastiveMode,
}

pub const VARIANTS: [VariantSpec; 6] = [
    VariantSpec {
        name: "Single-MLL",
        use_gcn: false,
        contrastive_mode: ContrastiveMode::None,
    },
    VariantSpec {
        name: "MLL-CL",
        use_gcn: false,
        contrastive_mode: ContrastiveMode::Vanilla,
    },
    VariantSpec {
        name: "MLL-CRC",
        use_gcn: false,
        contrastive_mode: ContrastiveMode::ClusterRelabeled,
    },
    VariantSpec {
        name: "MLL-GCN",
        use_gcn: true,
        contrastive_mode: ContrastiveMode::None,
    },
    VariantSpec {
        name: "MLL-GCN-CL",
        use_gcn: true,
        contrastive_mode: ContrastiveMode::Vanilla,
    },
    VariantSpec {
        name: "MLL-GCN-CRC",
        use_gcn: true,
        contrastive_mode: ContrastiveMode::ClusterRelabeled,
    },
];

impl VariantSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        VARIANTS.iter().copied().find(|v| v.name == name).ok_or_else(|| {
            let names: Vec<&str> = VARIANTS.iter().map(|v| v.name).collect();
            Error::config(
                "variant",
                format!("unknown variant '{name}'; expected one of: {}", names.join(", ")),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub threshold: f64,
    pub sp_accuracy: SpAccuracyMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            threshold: 0.5,
            sp_accuracy: SpAccuracyMode::RestrictedExactMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub glove: GloveConfig,
    pub adjacency: AdjacencyConfig,
    pub weighting: WeightingConfig,
    pub encoder: EncoderConfig,
    pub gcn: GcnConfig,
    pub kmeans: KMeansConfig,
    pub metrics: MetricsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            loss: LossConfig::default(),
            glove: GloveConfig::default(),
            adjacency: AdjacencyConfig::default(),
            weighting: WeightingConfig::default(),
            encoder: EncoderConfig::default(),
            gcn: GcnConfig::default(),
            kmeans: KMeansConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.metrics.threshold.is_finite() && (0.0..1.0).contains(&self.metrics.threshold)) {
            return Err(Error::config("train.metrics.threshold", "must lie in [0, 1)"));
        }
        self.loss.validate()?;
        self.glove.validate()?;
        self.adjacency.validate()?;
        self.weighting.validate()?;
        self.encoder.validate()?;
        self.gcn.validate()?;
        self.kmeans.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_exact_match: f64,
    /// Hash of the bits of the frozen embedding and correlation matrix.
    pub frozen_hash: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub checkpoint: Checkpoint,
    pub trace: Vec<EpochRecord>,
    pub cooccurrence: CooccurrenceMatrix,
    pub glove_loss: Vec<f64>,
    pub clustering: Option<KMeansFit>,
    /// Per-training-sample contrastive label, when the variant uses one.
    pub contrastive_labels: Option<Vec<usize>>,
}

pub fn frozen_hash(graph: &LabelGraph) -> u64 {
    let mut h = DefaultHasher::new();
    for v in graph.z.matrix().iter().chain(graph.b.matrix().iter()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// The plane label of each sample, or `sp_count` for samples without one.
pub fn vanilla_labels(dataset: &Dataset) -> Vec<usize> {
    let sp = dataset.vocabulary.sp_indices();
    dataset
        .samples
        .iter()
        .map(|s| sp.iter().position(|&k| s.labels[k]).unwrap_or(sp.len()))
        .collect()
}

pub fn trace_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_exact_match\n");
    for r in trace {
        out.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.train_loss, r.val_exact_match));
    }
    out
}

pub fn run_pipeline(
    train: &Dataset,
    val: &Dataset,
    variant: VariantSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if train.vocabulary != val.vocabulary {
        return Err(Error::InvalidInput(
            "train and validation splits use different vocabularies".into(),
        ));
    }
    if train.len() == 0 || val.len() == 0 {
        return Err(Error::InvalidInput("empty train or validation split".into()));
    }
    let c = train.num_classes();

    // Phase 1.
    let x = build_cooccurrence(train);
    let glove = train_glove(&x, &cfg.glove, &cfg.weighting, sub_seed(seed, Stage::Glove))?;
    let b = normalize_adjacency(&build_adjacency(&x, &cfg.adjacency))?;
    let graph = LabelGraph {
        z: glove.embedding,
        b,
    };
    let (clustering, contrastive_labels) = match variant.contrastive_mode {
        ContrastiveMode::None => (None, None),
        ContrastiveMode::Vanilla => (None, Some(vanilla_labels(train))),
        ContrastiveMode::ClusterRelabeled => {
            let fit = kmeans(
                graph.z.matrix().view(),
                &cfg.kmeans,
                sub_seed(seed, Stage::KMeans),
            )?;
            let labels = relabel(train, &graph.z, &fit.model)?.cluster_label;
            (Some(fit), Some(labels))
        }
    };
    let use_contrastive = contrastive_labels.is_some() && cfg.loss.lambda != 0.0;

    // Phase 2.
    let encoder = Encoder::random(
        train.feature_dim().expect("nonempty split"),
        &cfg.encoder,
        sub_seed(seed, Stage::Encoder),
    )?;
    let d_out = encoder.output_dim();
    let head_seed = sub_seed(seed, Stage::Classifier);
    let head = if variant.use_gcn {
        Head::Gcn(GcnStack::random(
            &cfg.gcn.dims(graph.z.dim(), d_out),
            cfg.gcn.slope,
            head_seed,
        )?)
    } else {
        Head::random_linear(c, d_out, head_seed)
    };
    let mut model = Model::new(encoder, head, &graph)?;
    let mut opt = MomentumSgd::new(cfg.learning_rate, cfg.momentum);
    let mut shuffle_rng = stage_rng(seed, Stage::Shuffle);

    let features = train.feature_matrix();
    let targets: Vec<Vec<bool>> = train.samples.iter().map(|s| s.labels.clone()).collect();
    let val_features = val.feature_matrix();
    let val_targets = val.target_matrix();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = features.select(Axis(0), idx);
            let batch_targets: Vec<Vec<bool>> = idx.iter().map(|&i| targets[i].clone()).collect();
            let batch_labels: Option<Vec<usize>> = contrastive_labels
                .as_ref()
                .filter(|_| use_contrastive)
                .map(|l| idx.iter().map(|&i| l[i]).collect());
            let (scores, cache) = model.forward(&graph, batch.view())?;
            let bl = loss_gradients(
                scores.view(),
                &batch_targets,
                cache.reps.view(),
                batch_labels.as_deref(),
                &cfg.loss,
            )?;
            if !bl.total.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: Some(bi),
                });
            }
            loss_sum += bl.total * idx.len() as f64;
            let grads = model.backward(&graph, &cache, bl.d_scores.view(), bl.d_reps.view());
            let gs = grads.slices();
            opt.step(&mut model.param_slices_mut(), &gs);
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_scores = model.predict(&graph, val_features.view())?;
        if val_scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { epoch, batch: None });
        }
        let mut table = ScoreTable::new(val_scores, val_targets.clone())?;
        table.threshold = cfg.metrics.threshold;
        let val_em = exact_match(&table, None)?;
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_exact_match: val_em,
            frozen_hash: frozen_hash(&graph),
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_em > *b) {
            best = Some((val_em, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            variant: variant.name.to_string(),
            seed,
            epoch: best_epoch,
            train: cfg.clone(),
            vocabulary: train.vocabulary.clone(),
        },
        model: best_model,
        graph,
        clusters: clustering.as_ref().map(|f| f.model.clone()),
    };
    Ok(PipelineRun {
        checkpoint,
        trace,
        cooccurrence: x,
        glove_loss: glove.loss_trace,
        clustering,
        contrastive_labels,
    })
}

/// Scores every sample and computes the report. The score table is
/// returned for export.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<(MetricsReport, ScoreTable)> {
    if dataset.vocabulary != checkpoint.meta.vocabulary {
        return Err(Error::InvalidInput(
            "dataset vocabulary differs from the checkpoint's".into(),
        ));
    }
    let expected = checkpoint.model.encoder.input_dim();
    match dataset.feature_dim() {
        None => return Err(Error::InvalidInput("cannot evaluate an empty dataset".into())),
        Some(actual) if actual != expected => {
            return Err(Error::Dimension {
                context: "dataset features vs encoder input",
                expected,
                actual,
            })
        }
        Some(_) => {}
    }
    let scores = checkpoint
        .model
        .predict(&checkpoint.graph, dataset.feature_matrix().view())?;
    let mut table = ScoreTable::new(scores, dataset.target_matrix())?;
    table.threshold = checkpoint.meta.train.metrics.threshold;
    let report = compute_report(
        &table,
        &dataset.vocabulary.sp_indices(),
        checkpoint.meta.train.metrics.sp_accuracy,
    )?;
    Ok((report, table))
}

/// Ground-truth matrix of a dataset as `f64` (for callers that want
/// arithmetic on it).
pub fn target_density(dataset: &Dataset) -> f64 {
    let t: Array2<bool> = dataset.target_matrix();
    t.iter().filter(|&&b| b).count() as f64 / t.len() as f64
}
