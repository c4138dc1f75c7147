//! Point-wise evaluation: macro-averaged F1 and ROC AUC.

use crate::error::{Error, Result};

/// Confusion counts with the anomaly class (label 1) as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        check(predictions.len(), labels.len())?;
        let mut c = ConfusionCounts::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p != 0, y != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the anomaly class.
    pub fn f1_anomaly(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    /// F1 of the normal class (normal treated as positive).
    pub fn f1_normal(&self) -> f64 {
        f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        0.5 * (self.f1_anomaly() + self.f1_normal())
    }
}

// 2tp / (2tp + fp + fn), which is zero exactly when precision + recall is zero
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn check(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} predictions for {b} labels")));
    }
    if a == 0 {
        return Err(Error::Empty("evaluation input".into()));
    }
    Ok(())
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(ConfusionCounts::from_predictions(predictions, labels)?.macro_f1())
}

/// Probability that a random anomaly outscores a random normal point, ties at half credit.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores.len(), labels.len())?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|&&y| y != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "AUC is undefined when only one class is present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // count, in units of half-pairs, concordant (x2) and tied (x1) pairs
    let mut half_pairs: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| labels[k] != 0).count() as u128;
        let neg = group.len() as u128 - pos;
        half_pairs += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(half_pairs as f64 / (2.0 * positives as f64 * negatives as f64))
}
