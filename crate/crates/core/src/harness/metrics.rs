//! Confusion-count metrics and ROC analysis.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// Counts at `threshold` on the positive-class probability; a score
    /// equal to the threshold is called positive.
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(c: Confusion) -> ConfusionMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    ConfusionMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity: recall,
        specificity: ratio(c.tn, c.tn + c.fp),
        precision,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Mann-Whitney estimate; `None` when a class is missing.
    pub auc: Option<f64>,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
}

/// Pairwise AUC counting ties as one half, plus the ROC curve.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Roc {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    let auc = (n_pos > 0 && n_neg > 0).then(|| {
        // rank-sum form of the pairwise count, with midranks for ties
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut rank_sum_pos = 0.0;
        let mut k = 0;
        while k < order.len() {
            let mut end = k;
            while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
                end += 1;
            }
            let midrank = (k + end) as f64 / 2.0 + 1.0;
            for &i in &order[k..=end] {
                if labels[i] {
                    rank_sum_pos += midrank;
                }
            }
            k = end + 1;
        }
        let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
        u / (n_pos as f64 * n_neg as f64)
    });
    Roc {
        auc,
        points: roc_points(scores, labels, n_pos, n_neg),
    }
}

fn roc_points(scores: &[f64], labels: &[bool], n_pos: usize, n_neg: usize) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let rate = |v: usize, n: usize| if n == 0 { 0.0 } else { v as f64 / n as f64 };
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((rate(fp, n_neg), rate(tp, n_pos)));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    points
}

/// Area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Mean and population standard deviation of the defined values.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}
