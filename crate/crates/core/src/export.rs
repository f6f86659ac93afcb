//! CSV exports of learned artifacts and a two-component PCA of the label
//! embedding. Floats are written in shortest round-trip form.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::corpus::{Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, ScoreTable};
use crate::relabel::ClusterModel;

fn push_row<'a>(out: &mut String, head: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(head);
    for v in values {
        write!(out, ",{v:?}").unwrap();
    }
    out.push('\n');
}

/// One row per entry of `row_names`, prefixed by a header line.
pub fn matrix_csv(first: &str, columns: &[String], row_names: &[String], m: ArrayView2<f64>) -> String {
    let mut out = String::from(first);
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (name, row) in row_names.iter().zip(m.rows()) {
        push_row(&mut out, name, row.iter());
    }
    out
}

fn names_of(vocab: &Vocabulary) -> Vec<String> {
    vocab.names().map(str::to_string).collect()
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn embedding_csv(vocab: &Vocabulary, z: &Array2<f64>) -> String {
    matrix_csv("label", &numbered("z", z.ncols()), &names_of(vocab), z.view())
}

pub fn adjacency_csv(vocab: &Vocabulary, b: &Array2<f64>) -> String {
    let names = names_of(vocab);
    matrix_csv("label", &names, &names, b.view())
}

pub fn classifier_csv(vocab: &Vocabulary, k: &Array2<f64>) -> String {
    matrix_csv("label", &numbered("k", k.ncols()), &names_of(vocab), k.view())
}

pub fn centroids_csv(model: &ClusterModel) -> String {
    let rows = numbered("", model.num_clusters());
    matrix_csv(
        "cluster",
        &numbered("c", model.centroids.ncols()),
        &rows,
        model.centroids.view(),
    )
}

/// Nearest centroid of every label embedding row.
pub fn label_clusters_csv(vocab: &Vocabulary, z: &Array2<f64>, model: &ClusterModel) -> String {
    let mut out = String::from("label,cluster\n");
    for (name, row) in vocab.names().zip(z.rows()) {
        writeln!(out, "{name},{}", model.nearest(row)).unwrap();
    }
    out
}

pub fn sample_clusters_csv(dataset: &Dataset, labels: &[usize]) -> String {
    let mut out = String::from("sample_id,cluster\n");
    for (s, l) in dataset.samples.iter().zip(labels) {
        writeln!(out, "{},{l}", s.id).unwrap();
    }
    out
}

pub fn glove_loss_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{i},{v:?}").unwrap();
    }
    out
}

/// Post-sigmoid scores, one row per sample.
pub fn scores_csv(dataset: &Dataset, table: &ScoreTable) -> String {
    let ids: Vec<String> = dataset.samples.iter().map(|s| s.id.clone()).collect();
    matrix_csv("sample_id", &names_of(&dataset.vocabulary), &ids, table.scores.view())
}

pub fn metrics_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&report.table_row())? + "\n")
}

/// Full-precision values, plus per-class AP rows named `AP:<label>`.
pub fn metrics_csv(report: &MetricsReport, vocab: &Vocabulary) -> String {
    let mut out = String::from("metric,value\n");
    for (name, v) in MetricsReport::NAMES.iter().zip(report.values()) {
        writeln!(out, "{name},{v:?}").unwrap();
    }
    for (name, v) in vocab.names().zip(&report.per_class_ap) {
        writeln!(out, "AP:{name},{v:?}").unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `2 × d`, orthonormal rows, by decreasing variance.
    pub axes: Array2<f64>,
    /// `n × 2` coordinates of the centered rows along `axes`.
    pub projection: Array2<f64>,
    pub variances: [f64; 2],
}

/// Top-two principal axes of the rows of `z` via a symmetric
/// eigendecomposition of the covariance. Each axis is signed so that its
/// largest-magnitude entry is positive.
pub fn pca2(z: &Array2<f64>) -> Result<Pca> {
    let (n, d) = z.dim();
    if n < 2 || d < 2 {
        return Err(Error::InvalidInput("projection needs at least 2 rows and 2 columns".into()));
    }
    let mean = z.mean_axis(Axis(0)).expect("nonempty");
    let centered = z - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Array2::zeros((2, d));
    for (r, &k) in order.iter().take(2).enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .expect("d >= 2");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            axes[[r, j]] = sign * col[j];
        }
    }
    let projection = centered.dot(&axes.t());
    Ok(Pca {
        mean,
        axes,
        projection,
        variances: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
    })
}

pub fn projection_csv(vocab: &Vocabulary, pca: &Pca) -> String {
    matrix_csv(
        "label",
        &["pc1".into(), "pc2".into()],
        &names_of(vocab),
        pca.projection.view(),
    )
}

/// Rows `mean`, `pc1`, `pc2`.
pub fn axes_csv(pca: &Pca) -> String {
    let d = pca.mean.len();
    let mut m = Array2::zeros((3, d));
    m.row_mut(0).assign(&pca.mean);
    m.row_mut(1).assign(&pca.axes.row(0));
    m.row_mut(2).assign(&pca.axes.row(1));
    matrix_csv(
        "component",
        &numbered("z", d),
        &["mean".into(), "pc1".into(), "pc2".into()],
        m.view(),
    )
}

/// Sum of squared distances between the rows of `z` and their
/// reconstruction `mean + ((z - mean) P^T) P` for a `2 × d` basis `P`.
pub fn reconstruction_residual(z: &Array2<f64>, mean: &Array1<f64>, basis: &Array2<f64>) -> f64 {
    let centered = z - mean;
    let recon = centered.dot(&basis.t()).dot(basis);
    (&centered - &recon).mapv(|v| v * v).sum()
}
