//! Evaluation metrics for multi-label predictions: overall and per-class
//! precision/recall/F1, Hamming loss, exact-match accuracy (all labels, or
//! restricted to standard planes), and ranking average precision.
//!
//! Conventions: a score binarizes to 1 iff it is strictly above the
//! threshold; per-class 0/0 ratios count as 0 and are reported in
//! [`MetricDiagnostics`]; classes without positives are left out of mAP.

pub mod oracle;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// `n × C` post-sigmoid scores.
    pub scores: Array2<f64>,
    /// `n × C` ground truth.
    pub targets: Array2<bool>,
    pub threshold: f64,
}

impl ScoreTable {
    pub fn new(scores: Array2<f64>, targets: Array2<bool>) -> Result<Self> {
        if scores.dim() != targets.dim() {
            return Err(Error::Dimension {
                context: "score table columns",
                expected: targets.ncols(),
                actual: scores.ncols(),
            });
        }
        Ok(ScoreTable {
            scores,
            targets,
            threshold: 0.5,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.scores.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.ncols()
    }
}

pub fn binarize(table: &ScoreTable) -> Array2<bool> {
    table.scores.mapv(|s| s > table.threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpAccuracyMode {
    /// Exact match restricted to the standard-plane columns.
    #[default]
    RestrictedExactMatch,
    /// Highest-scoring plane (or "none" when no plane clears the threshold)
    /// against the true plane.
    Argmax,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDiagnostics {
    pub undefined_class_precision: Vec<usize>,
    pub undefined_class_recall: Vec<usize>,
    pub overall_precision_undefined: bool,
    pub overall_recall_undefined: bool,
    /// Classes with no positive sample, excluded from mAP.
    pub skipped_ap_classes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfSummary {
    pub op: f64,
    pub or_: f64,
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sp_acc: f64,
    pub mll_acc: f64,
    pub map: f64,
    pub hl: f64,
    pub op: f64,
    pub or_: f64,
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
    pub per_class_ap: Vec<f64>,
    pub diagnostics: MetricDiagnostics,
}

/// The ten headline numbers, in percent rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    #[serde(rename = "SP_ACC")]
    pub sp_acc: f64,
    #[serde(rename = "MLL_ACC")]
    pub mll_acc: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "HL")]
    pub hl: f64,
    #[serde(rename = "OP")]
    pub op: f64,
    #[serde(rename = "OR")]
    pub or_: f64,
    #[serde(rename = "OF1")]
    pub of1: f64,
    #[serde(rename = "CP")]
    pub cp: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "CF1")]
    pub cf1: f64,
}

fn pct(v: f64) -> f64 {
    (v * 10_000.0).round() / 100.0
}

impl MetricsReport {
    pub const NAMES: [&'static str; 10] =
        ["SP_ACC", "MLL_ACC", "mAP", "HL", "OP", "OR", "OF1", "CP", "CR", "CF1"];

    pub fn values(&self) -> [f64; 10] {
        [
            self.sp_acc,
            self.mll_acc,
            self.map,
            self.hl,
            self.op,
            self.or_,
            self.of1,
            self.cp,
            self.cr,
            self.cf1,
        ]
    }

    pub fn table_row(&self) -> TableRow {
        TableRow {
            sp_acc: pct(self.sp_acc),
            mll_acc: pct(self.mll_acc),
            map: pct(self.map),
            hl: pct(self.hl),
            op: pct(self.op),
            or_: pct(self.or_),
            of1: pct(self.of1),
            cp: pct(self.cp),
            cr: pct(self.cr),
            cf1: pct(self.cf1),
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn overall_and_perclass(table: &ScoreTable) -> (PrfSummary, MetricDiagnostics) {
    let pred = binarize(table);
    let c = table.num_classes();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for ((i, k), &p) in pred.indexed_iter() {
        match (p, table.targets[[i, k]]) {
            (true, true) => tp[k] += 1,
            (true, false) => fp[k] += 1,
            (false, true) => fneg[k] += 1,
            (false, false) => {}
        }
    }
    let mut diag = MetricDiagnostics::default();
    let (stp, sfp, sfn): (usize, usize, usize) =
        (tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    let op = ratio(stp, stp + sfp).unwrap_or_else(|| {
        diag.overall_precision_undefined = true;
        0.0
    });
    let or_ = ratio(stp, stp + sfn).unwrap_or_else(|| {
        diag.overall_recall_undefined = true;
        0.0
    });
    let mut cp_sum = 0.0;
    let mut cr_sum = 0.0;
    for k in 0..c {
        cp_sum += ratio(tp[k], tp[k] + fp[k]).unwrap_or_else(|| {
            diag.undefined_class_precision.push(k);
            0.0
        });
        cr_sum += ratio(tp[k], tp[k] + fneg[k]).unwrap_or_else(|| {
            diag.undefined_class_recall.push(k);
            0.0
        });
    }
    let cp = cp_sum / c as f64;
    let cr = cr_sum / c as f64;
    (
        PrfSummary {
            op,
            or_,
            of1: harmonic(op, or_),
            cp,
            cr,
            cf1: harmonic(cp, cr),
        },
        diag,
    )
}

pub fn hamming_loss(table: &ScoreTable) -> f64 {
    let pred = binarize(table);
    let wrong = pred
        .iter()
        .zip(table.targets.iter())
        .filter(|(p, t)| p != t)
        .count();
    wrong as f64 / (table.num_samples() * table.num_classes()) as f64
}

/// Fraction of samples whose prediction matches on every column in
/// `restrict` (all columns when `None`).
pub fn exact_match(table: &ScoreTable, restrict: Option<&[usize]>) -> Result<f64> {
    let all: Vec<usize>;
    let cols = match restrict {
        Some([]) => {
            return Err(Error::InvalidInput(
                "exact match restricted to an empty index set".into(),
            ))
        }
        Some(r) => r,
        None => {
            all = (0..table.num_classes()).collect();
            &all
        }
    };
    let pred = binarize(table);
    let hits = (0..table.num_samples())
        .filter(|&i| cols.iter().all(|&k| pred[[i, k]] == table.targets[[i, k]]))
        .count();
    Ok(hits as f64 / table.num_samples() as f64)
}

/// Plane accuracy by argmax over the plane columns.
pub fn sp_argmax_accuracy(table: &ScoreTable, sp: &[usize]) -> Result<f64> {
    if sp.is_empty() {
        return Err(Error::InvalidInput("no standard-plane classes".into()));
    }
    let hits = (0..table.num_samples())
        .filter(|&i| {
            let truth = sp.iter().position(|&k| table.targets[[i, k]]);
            let (best, score) = sp
                .iter()
                .enumerate()
                .map(|(pos, &k)| (pos, table.scores[[i, k]]))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let pred = (score > table.threshold).then_some(best);
            pred == truth
        })
        .count();
    Ok(hits as f64 / table.num_samples() as f64)
}

/// Non-interpolated average precision of one class. `None` when the class
/// has no positives. Ties in score rank the lower sample index first.
pub fn average_precision(scores: ArrayView1<f64>, targets: ArrayView1<bool>) -> Option<f64> {
    let n_pos = targets.iter().filter(|&&t| t).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

pub fn compute_report(
    table: &ScoreTable,
    sp_indices: &[usize],
    sp_mode: SpAccuracyMode,
) -> Result<MetricsReport> {
    if table.num_samples() == 0 {
        return Err(Error::InvalidInput("cannot evaluate an empty score table".into()));
    }
    let (prf, mut diag) = overall_and_perclass(table);
    let mut per_class_ap = Vec::with_capacity(table.num_classes());
    let mut ap_sum = 0.0;
    let mut ap_n = 0usize;
    for k in 0..table.num_classes() {
        match average_precision(table.scores.column(k), table.targets.column(k)) {
            Some(ap) => {
                ap_sum += ap;
                ap_n += 1;
                per_class_ap.push(ap);
            }
            None => {
                diag.skipped_ap_classes.push(k);
                per_class_ap.push(0.0);
            }
        }
    }
    let sp_acc = match sp_mode {
        SpAccuracyMode::RestrictedExactMatch => exact_match(table, Some(sp_indices))?,
        SpAccuracyMode::Argmax => sp_argmax_accuracy(table, sp_indices)?,
    };
    Ok(MetricsReport {
        sp_acc,
        mll_acc: exact_match(table, None)?,
        map: if ap_n > 0 { ap_sum / ap_n as f64 } else { 0.0 },
        hl: hamming_loss(table),
        op: prf.op,
        or_: prf.or_,
        of1: prf.of1,
        cp: prf.cp,
        cr: prf.cr,
        cf1: prf.cf1,
        per_class_ap,
        diagnostics: diag,
    })
}
