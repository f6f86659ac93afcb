//! Deliberately naive reimplementation of the metrics over plain nested
//! vectors. Used as a cross-check for [`super::compute_report`]; shares no
//! code with it.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
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
}

impl OracleMetrics {
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
}

fn div0(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1(p: f64, r: f64) -> f64 {
    div0(2.0 * p * r, p + r)
}

/// Rank of sample `i` in class `k`: one plus the number of samples that
/// come strictly before it.
fn rank(scores: &[Vec<f64>], k: usize, i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j][k] > scores[i][k] || (scores[j][k] == scores[i][k] && j < i))
        .count()
}

pub fn oracle_metrics(
    scores: &[Vec<f64>],
    targets: &[Vec<bool>],
    sp: &[usize],
    threshold: f64,
) -> OracleMetrics {
    let n = scores.len();
    let c = scores[0].len();
    let pred: Vec<Vec<bool>> = scores
        .iter()
        .map(|row| row.iter().map(|&s| s > threshold).collect())
        .collect();

    let mut tp = 0.0;
    let mut n_pred = 0.0;
    let mut n_true = 0.0;
    let mut wrong = 0.0;
    let mut exact = 0.0;
    let mut sp_exact = 0.0;
    for i in 0..n {
        let mut all_ok = true;
        for k in 0..c {
            if pred[i][k] {
                n_pred += 1.0;
            }
            if targets[i][k] {
                n_true += 1.0;
            }
            if pred[i][k] && targets[i][k] {
                tp += 1.0;
            }
            if pred[i][k] != targets[i][k] {
                wrong += 1.0;
                all_ok = false;
            }
        }
        if all_ok {
            exact += 1.0;
        }
        if sp.iter().all(|&k| pred[i][k] == targets[i][k]) {
            sp_exact += 1.0;
        }
    }
    let op = div0(tp, n_pred);
    let or_ = div0(tp, n_true);

    let mut cp = 0.0;
    let mut cr = 0.0;
    let mut ap_total = 0.0;
    let mut ap_classes = 0.0;
    for k in 0..c {
        let tpk = (0..n).filter(|&i| pred[i][k] && targets[i][k]).count() as f64;
        let pk = (0..n).filter(|&i| pred[i][k]).count() as f64;
        let gk = (0..n).filter(|&i| targets[i][k]).count() as f64;
        cp += div0(tpk, pk);
        cr += div0(tpk, gk);
        if gk > 0.0 {
            let mut sum = 0.0;
            for i in (0..n).filter(|&i| targets[i][k]) {
                let r = rank(scores, k, i);
                let above = (0..n)
                    .filter(|&j| targets[j][k] && rank(scores, k, j) <= r)
                    .count();
                sum += above as f64 / r as f64;
            }
            ap_total += sum / gk;
            ap_classes += 1.0;
        }
    }
    cp /= c as f64;
    cr /= c as f64;

    OracleMetrics {
        sp_acc: sp_exact / n as f64,
        mll_acc: exact / n as f64,
        map: div0(ap_total, ap_classes),
        hl: wrong / (n * c) as f64,
        op,
        or_,
        of1: f1(op, or_),
        cp,
        cr,
        cf1: f1(cp, cr),
    }
}
