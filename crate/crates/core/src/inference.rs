//! Target-domain scoring with policy-chosen windows, and contamination thresholding.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::agent::{argmax, QNetwork};
use crate::data::{format_sig, TimeSeries};
use crate::detector::{DetectorBundle, Domain};
use crate::env::EnvAction;
use crate::error::{Error, Result};
use crate::trainer::{write_file, ActionCounter};

/// Per-point anomaly scores with the target window used for each point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub windows: Vec<usize>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub predictions: Vec<u8>,
    pub threshold: f64,
}

/// Scores every target point. The source window is frozen at the most
/// frequently chosen source size; at each step the greedy action on the
/// current state supplies the target window. As during training, the state at
/// `t` is built from the windows ending at `t - 1` (index 0 for `t = 0`), the
/// first target window being the most frequent target size.
pub fn infer_scores(
    detector: &DetectorBundle,
    q: &QNetwork,
    counter: &ActionCounter,
    target: &TimeSeries,
    source: &TimeSeries,
) -> Result<ScoreSeries> {
    let k_max = counter.k_max();
    let m = counter.most_frequent_source_window()?;
    let mut n = counter.most_frequent_target_window()?;
    if q.actions() != k_max * k_max {
        return Err(Error::Shape(format!(
            "Q-network has {} actions, counter expects {}",
            q.actions(),
            k_max * k_max
        )));
    }
    if target.dim() != detector.dim(Domain::Target) || source.dim() != detector.dim(Domain::Source) {
        return Err(Error::Shape("series dimensions do not match the detector".into()));
    }
    let mut out = ScoreSeries {
        scores: Vec::with_capacity(target.len()),
        windows: Vec::with_capacity(target.len()),
    };
    for t in 0..target.len() {
        let at = t.saturating_sub(1);
        let src = source.sample_window(at % source.len(), m)?;
        let tgt = target.sample_window(at, n)?;
        let mut state = detector.encode(&src.values, Domain::Source)?;
        state.extend(detector.encode(&tgt.values, Domain::Target)?);
        n = EnvAction::decode(argmax(&q.q_values(&state)?), k_max)?.target;
        out.scores.push(detector.anomaly_score(&target.sample_window(t, n)?.values)?);
        out.windows.push(n);
    }
    Ok(out)
}

/// Scores every target point with one window size.
pub fn score_fixed(detector: &DetectorBundle, target: &TimeSeries, window: usize) -> Result<ScoreSeries> {
    score_with(detector, target, |_| window)
}

/// Scores every target point with a window drawn uniformly from `1..=k_max`.
pub fn score_random<R: Rng + ?Sized>(
    detector: &DetectorBundle,
    target: &TimeSeries,
    k_max: usize,
    rng: &mut R,
) -> Result<ScoreSeries> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("maximum window size must be at least 1".into()));
    }
    score_with(detector, target, |_| rng.gen_range(1..=k_max))
}

fn score_with(
    detector: &DetectorBundle,
    target: &TimeSeries,
    mut window: impl FnMut(usize) -> usize,
) -> Result<ScoreSeries> {
    let mut out = ScoreSeries {
        scores: Vec::with_capacity(target.len()),
        windows: Vec::with_capacity(target.len()),
    };
    for t in 0..target.len() {
        let n = window(t);
        out.scores.push(detector.anomaly_score(&target.sample_window(t, n)?.values)?);
        out.windows.push(n);
    }
    Ok(out)
}

/// Flags points scoring strictly above the nearest-rank `(1 - contamination)`
/// quantile of the scores.
pub fn threshold_scores(scores: &[f64], contamination: f64) -> Result<PredictionSeries> {
    if scores.is_empty() {
        return Err(Error::Empty("score series".into()));
    }
    if !(contamination > 0.0 && contamination <= 0.5) {
        return Err(Error::OutOfRange(format!("contamination {contamination} outside (0, 0.5]")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i} is {}", scores[i])));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = sorted.len();
    // rank ceil((1 - c) * T) == T - floor(c * T); the epsilon absorbs c * T landing just below an integer
    let rank = t - (contamination * t as f64 + 1e-9).floor() as usize;
    let threshold = sorted[rank - 1];
    Ok(PredictionSeries {
        predictions: scores.iter().map(|&s| (s > threshold) as u8).collect(),
        threshold,
    })
}

/// `t,window_n,score,prediction` rows.
pub fn scores_csv(scores: &ScoreSeries, predictions: &PredictionSeries) -> Result<String> {
    if scores.len() != predictions.predictions.len() {
        return Err(Error::Shape("score and prediction counts differ".into()));
    }
    let mut out = String::from("t,window_n,score,prediction\n");
    for t in 0..scores.len() {
        let _ = writeln!(
            out,
            "{t},{},{},{}",
            scores.windows[t],
            format_sig(scores.scores[t], 9),
            predictions.predictions[t]
        );
    }
    Ok(out)
}

pub fn write_scores_csv(
    path: impl AsRef<Path>,
    scores: &ScoreSeries,
    predictions: &PredictionSeries,
) -> Result<()> {
    write_file(path.as_ref(), &scores_csv(scores, predictions)?)
}
