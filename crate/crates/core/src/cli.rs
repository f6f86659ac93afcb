//! Command-line front end. Every command reads one run configuration,
//! applies `--set` overrides and the shorthand flags, and writes its
//! outputs under `--out`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::Rng as _;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::corpus::{generate_synthetic, load_dataset, split_by_subject, Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::export;
use crate::metrics::oracle::oracle_metrics;
use crate::metrics::{compute_report, ScoreTable, SpAccuracyMode};
use crate::relabel::{kmeans, relabel};
use crate::seed::{rng_from, sub_seed, Stage};
use crate::trainer::{evaluate, run_pipeline, trace_csv};

#[derive(Debug, Parser)]
#[command(name = "mllg", version, about = "Label-graph multi-label plane classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Run configuration JSON. Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Variant name, e.g. MLL-GCN-CRC.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration field, `dotted.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "K=V")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Embeddings,
    Adjacency,
    Classifier,
    Clusters,
    Projection,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and vocabulary.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Split, train one variant, and report validation and test metrics.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on a JSONL dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write learned artifacts of a checkpoint as CSV.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        what: ExportWhat,
        /// Also write per-sample cluster labels for this dataset (clusters only).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Cross-check the metrics against the brute-force implementation,
    /// on random tables or on an exported score file.
    MetricsOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        tables: usize,
        /// Score CSV written by `eval`; needs `--dataset` and `--vocabulary`.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        vocabulary: Option<PathBuf>,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(v) = &self.variant {
            cfg.variant = v.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn label_count(ds: &Dataset) -> usize {
    ds.samples.iter().map(|s| s.active().count()).sum()
}

fn load_input(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.dataset, &cfg.vocabulary) {
        (Some(d), Some(v)) => load_dataset(d, &Vocabulary::load(v)?),
        _ => generate_synthetic(&cfg.seeded_synthetic()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => cmd_synth(&common.resolve()?),
        Command::Train { common } => cmd_train(&common.resolve()?),
        Command::Eval {
            common,
            checkpoint,
            dataset,
        } => cmd_eval(&common.resolve()?, &checkpoint, &dataset),
        Command::Export {
            common,
            checkpoint,
            what,
            dataset,
        } => cmd_export(&common.resolve()?, &checkpoint, what, dataset.as_deref()),
        Command::MetricsOracle {
            common,
            tables,
            scores,
            dataset,
            vocabulary,
        } => {
            let cfg = common.resolve()?;
            match scores {
                Some(s) => {
                    let (Some(d), Some(v)) = (dataset, vocabulary) else {
                        return Err(Error::config(
                            "--scores",
                            "requires --dataset and --vocabulary",
                        ));
                    };
                    cmd_oracle_file(&cfg, &s, &d, &v)
                }
                None => cmd_oracle_random(&cfg, tables),
            }
        }
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let ds = generate_synthetic(&cfg.seeded_synthetic())?;
    ensure_dir(&cfg.out)?;
    ds.save(&cfg.out.join("dataset.jsonl"))?;
    ds.vocabulary.save(&cfg.out.join("vocabulary.json"))?;
    write(&cfg.out, "config.json", &cfg.to_canonical_json()?)?;
    println!(
        "wrote {} samples, {} classes, {} positive labels to {}",
        ds.len(),
        ds.num_classes(),
        label_count(&ds),
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let variant = cfg.variant_spec()?;
    let ds = load_input(cfg)?;
    let (train, val, test) = split_by_subject(&ds, cfg.split, sub_seed(cfg.seed, Stage::Split))?;
    ensure_dir(&cfg.out)?;
    write(&cfg.out, "config.json", &cfg.to_canonical_json()?)?;
    ds.vocabulary.save(&cfg.out.join("vocabulary.json"))?;
    train.save(&cfg.out.join("train.jsonl"))?;
    val.save(&cfg.out.join("val.jsonl"))?;
    test.save(&cfg.out.join("test.jsonl"))?;

    let run = run_pipeline(&train, &val, variant, &cfg.train, cfg.seed)?;
    run.checkpoint.save(&cfg.out.join("checkpoint.mllg"))?;
    write(&cfg.out, "trace.csv", &trace_csv(&run.trace))?;
    write(&cfg.out, "glove_loss.csv", &export::glove_loss_csv(&run.glove_loss))?;
    if let Some(labels) = &run.contrastive_labels {
        write(
            &cfg.out,
            "train_contrastive_labels.csv",
            &export::sample_clusters_csv(&train, labels),
        )?;
    }

    let (val_report, _) = evaluate(&run.checkpoint, &val)?;
    write(&cfg.out, "metrics.json", &export::metrics_json(&val_report)?)?;
    write(&cfg.out, "metrics.csv", &export::metrics_csv(&val_report, &ds.vocabulary))?;
    let (test_report, _) = evaluate(&run.checkpoint, &test)?;
    write(&cfg.out, "test_metrics.json", &export::metrics_json(&test_report)?)?;
    write(&cfg.out, "test_metrics.csv", &export::metrics_csv(&test_report, &ds.vocabulary))?;

    let v = val_report.table_row();
    let t = test_report.table_row();
    println!(
        "{}: split {}/{}/{} samples, best epoch {}",
        variant.name,
        train.len(),
        val.len(),
        test.len(),
        run.checkpoint.meta.epoch
    );
    println!("val  MLL_ACC {:.2}  SP_ACC {:.2}  mAP {:.2}", v.mll_acc, v.sp_acc, v.map);
    println!("test MLL_ACC {:.2}  SP_ACC {:.2}  mAP {:.2}", t.mll_acc, t.sp_acc, t.map);
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, dataset: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_dataset(dataset, &ck.meta.vocabulary)?;
    let (report, table) = evaluate(&ck, &ds)?;
    ensure_dir(&cfg.out)?;
    write(&cfg.out, "metrics.json", &export::metrics_json(&report)?)?;
    write(&cfg.out, "metrics.csv", &export::metrics_csv(&report, &ds.vocabulary))?;
    write(&cfg.out, "scores.csv", &export::scores_csv(&ds, &table))?;
    let r = report.table_row();
    println!(
        "{} samples: MLL_ACC {:.2}  SP_ACC {:.2}  mAP {:.2}  HL {:.2}",
        ds.len(),
        r.mll_acc,
        r.sp_acc,
        r.map,
        r.hl
    );
    Ok(())
}

pub fn cmd_export(
    cfg: &RunConfig,
    checkpoint: &Path,
    what: ExportWhat,
    dataset: Option<&Path>,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let vocab = &ck.meta.vocabulary;
    let z = ck.graph.z.matrix();
    ensure_dir(&cfg.out)?;
    let mut written = Vec::new();
    match what {
        ExportWhat::Embeddings => {
            written.push(write(&cfg.out, "embeddings.csv", &export::embedding_csv(vocab, z))?)
        }
        ExportWhat::Adjacency => written.push(write(
            &cfg.out,
            "adjacency.csv",
            &export::adjacency_csv(vocab, ck.graph.b.matrix()),
        )?),
        ExportWhat::Classifier => {
            let k = ck.model.classifier(&ck.graph)?;
            written.push(write(&cfg.out, "classifier.csv", &export::classifier_csv(vocab, &k))?)
        }
        ExportWhat::Clusters => {
            // Variants without relabeling carry no centroids; refit them
            // from the stored seed so the export stays deterministic.
            let model = match &ck.clusters {
                Some(m) => m.clone(),
                None => {
                    kmeans(
                        z.view(),
                        &ck.meta.train.kmeans,
                        sub_seed(ck.meta.seed, Stage::KMeans),
                    )?
                    .model
                }
            };
            written.push(write(
                &cfg.out,
                "label_clusters.csv",
                &export::label_clusters_csv(vocab, z, &model),
            )?);
            written.push(write(&cfg.out, "centroids.csv", &export::centroids_csv(&model))?);
            if let Some(d) = dataset {
                let ds = load_dataset(d, vocab)?;
                let labels = relabel(&ds, &ck.graph.z, &model)?.cluster_label;
                written.push(write(
                    &cfg.out,
                    "sample_clusters.csv",
                    &export::sample_clusters_csv(&ds, &labels),
                )?);
            }
        }
        ExportWhat::Projection => {
            let pca = export::pca2(z)?;
            written.push(write(&cfg.out, "projection.csv", &export::projection_csv(vocab, &pca))?);
            written.push(write(&cfg.out, "axes.csv", &export::axes_csv(&pca))?);
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn random_table(rng: &mut crate::seed::Rng) -> (Array2<f64>, Array2<bool>) {
    let n = rng.random_range(1..=32);
    let c = rng.random_range(1..=8);
    // Coarse grid so ties and exact-threshold scores occur.
    let scores = Array2::from_shape_fn((n, c), |_| rng.random_range(0..=20) as f64 / 20.0);
    let targets = Array2::from_shape_fn((n, c), |_| rng.random_bool(0.4));
    (scores, targets)
}

fn compare(ours: [f64; 10], oracle: [f64; 10]) -> f64 {
    ours.iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

const ORACLE_TOLERANCE: f64 = 1e-9;

pub fn cmd_oracle_random(cfg: &RunConfig, tables: usize) -> Result<()> {
    let mut rng = rng_from(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..tables {
        let (scores, targets) = random_table(&mut rng);
        let c = scores.ncols();
        let sp: Vec<usize> = (0..c.div_ceil(2)).collect();
        let rows_s: Vec<Vec<f64>> = scores.rows().into_iter().map(|r| r.to_vec()).collect();
        let rows_t: Vec<Vec<bool>> = targets.rows().into_iter().map(|r| r.to_vec()).collect();
        let table = ScoreTable::new(scores, targets)?;
        let ours = compute_report(&table, &sp, SpAccuracyMode::RestrictedExactMatch)?;
        let oracle = oracle_metrics(&rows_s, &rows_t, &sp, table.threshold);
        worst = worst.max(compare(ours.values(), oracle.values()));
    }
    println!("{tables} random tables, max abs difference {worst:e}");
    if worst > ORACLE_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "metrics disagree with the oracle by {worst:e}"
        )));
    }
    Ok(())
}

/// Reads a score CSV written by `eval` and compares both implementations
/// on it.
pub fn cmd_oracle_file(cfg: &RunConfig, scores: &Path, dataset: &Path, vocab: &Path) -> Result<()> {
    let vocab = Vocabulary::load(vocab)?;
    let ds = load_dataset(dataset, &vocab)?;
    let text = std::fs::read_to_string(scores).map_err(|e| Error::io(scores, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                file: scores.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        rows.push(values);
    }
    if rows.len() != ds.len() {
        return Err(Error::Dimension {
            context: "score rows vs dataset samples",
            expected: ds.len(),
            actual: rows.len(),
        });
    }
    let targets: Vec<Vec<bool>> = ds.samples.iter().map(|s| s.labels.clone()).collect();
    let sp = vocab.sp_indices();
    let oracle = oracle_metrics(&rows, &targets, &sp, cfg.train.metrics.threshold);
    let c = vocab.len();
    let flat: Vec<f64> = rows.concat();
    let mut table = ScoreTable::new(
        Array2::from_shape_vec((ds.len(), c), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?,
        ds.target_matrix(),
    )?;
    table.threshold = cfg.train.metrics.threshold;
    let ours = compute_report(&table, &sp, SpAccuracyMode::RestrictedExactMatch)?;
    let worst = compare(ours.values(), oracle.values());
    ensure_dir(&cfg.out)?;
    let mut csv = String::from("metric,value\n");
    for (name, v) in crate::metrics::MetricsReport::NAMES.iter().zip(oracle.values()) {
        csv.push_str(&format!("{name},{v:?}\n"));
    }
    write(&cfg.out, "oracle_metrics.csv", &csv)?;
    println!("{} samples, max abs difference {worst:e}", ds.len());
    if worst > ORACLE_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "metrics disagree with the oracle by {worst:e}"
        )));
    }
    Ok(())
}
