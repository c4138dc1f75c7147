//! Two-domain synthetic benchmark with context-dependent anomalies.
//!
//! Both domains follow the same piecewise-sinusoid regime schedule; the target
//! is an affinely shifted, independently noised copy of the process. Anomalies
//! come in two signatures:
//!
//! * spikes: bursts no longer than the shortest signature length, with large
//!   jumps on a couple of channels, visible from a window of that length;
//! * drifts: the oscillation freezes and a slow ramp is added for one of the
//!   longer signature lengths. Each point stays within the normal value range,
//!   so the anomaly is only visible from windows spanning the segment.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DomainPair, TimeSeries};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Points per domain.
    pub length: usize,
    /// Feature dimensions of (source, target).
    pub dims: (usize, usize),
    pub anomaly_ratio: f64,
    /// Window lengths at which planted anomalies become separable.
    pub signature_lengths: BTreeSet<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            length: 2000,
            dims: (5, 5),
            anomaly_ratio: 0.05,
            signature_lengths: [2, 8].into_iter().collect(),
        }
    }
}

/// Kind of a planted anomaly segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Spike,
    Drift,
}

/// One planted anomaly: labels cover `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnomalySegment {
    pub start: usize,
    pub len: usize,
    pub kind: AnomalyKind,
}

impl SyntheticSpec {
    /// Number of anomalous points planted in each domain.
    pub fn anomaly_count(&self) -> usize {
        (self.anomaly_ratio * self.length as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.length < 2 {
            return bad(format!("length {} is too short", self.length));
        }
        if self.dims.0 == 0 || self.dims.1 == 0 {
            return bad("feature dimensions must be positive".into());
        }
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio < 0.5) {
            return bad(format!("anomaly ratio {} outside (0, 0.5)", self.anomaly_ratio));
        }
        if self.anomaly_count() == 0 {
            return bad(format!(
                "anomaly ratio {} yields no anomalies in {} points",
                self.anomaly_ratio, self.length
            ));
        }
        match (self.signature_lengths.first(), self.signature_lengths.last()) {
            (Some(&lo), Some(&hi)) if lo >= 1 && hi < self.length => Ok(()),
            (None, _) => bad("at least one signature length is required".into()),
            _ => bad("signature lengths must lie in [1, length)".into()),
        }
    }

    /// Segment lengths and kinds, summing exactly to `anomaly_count()`.
    ///
    /// The budget is split evenly across signature lengths. Each long length
    /// gets as many whole drifts as fit its share; everything left becomes
    /// spikes of the shortest length, with one shorter spike for the remainder.
    pub fn segment_plan(&self) -> Vec<(usize, AnomalyKind)> {
        let total = self.anomaly_count();
        let lengths: Vec<usize> = self.signature_lengths.iter().copied().collect();
        let shortest = lengths[0];
        let share = total / lengths.len();
        let mut plan = Vec::new();
        let mut used = 0;
        let drift_lengths: &[usize] = if lengths.len() == 1 && shortest > 2 {
            &lengths
        } else {
            &lengths[1..]
        };
        for &len in drift_lengths.iter().rev() {
            for _ in 0..share / len {
                plan.push((len, AnomalyKind::Drift));
                used += len;
            }
        }
        let spike_kind = if drift_lengths.len() == lengths.len() {
            AnomalyKind::Drift
        } else {
            AnomalyKind::Spike
        };
        let rest = total - used;
        for _ in 0..rest / shortest {
            plan.push((shortest, spike_kind));
        }
        if !rest.is_multiple_of(shortest) {
            plan.push((rest % shortest, spike_kind));
        }
        plan
    }
}

/// Deterministic pair of domains plus the anomaly layout of each.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub pair: DomainPair,
    pub source_segments: Vec<AnomalySegment>,
    pub target_segments: Vec<AnomalySegment>,
}

const REGIME_LEN: usize = 250;
const PERIODS: [f64; 4] = [18.0, 24.0, 31.0, 40.0];
const NOISE: f64 = 0.05;

/// Generates a source/target pair; see [`generate_synthetic_with_layout`].
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DomainPair> {
    generate_synthetic_with_layout(spec).map(|d| d.pair)
}

pub fn generate_synthetic_with_layout(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let regimes: Vec<usize> = (0..spec.length.div_ceil(REGIME_LEN))
        .map(|_| rng.gen_range(0..PERIODS.len()))
        .collect();
    let plan = spec.segment_plan();

    let (source, source_segments) = generate_domain(spec, &regimes, &plan, spec.dims.0, false, &mut rng)?;
    let (target, target_segments) = generate_domain(spec, &regimes, &plan, spec.dims.1, true, &mut rng)?;
    let source_labels = labels_from(&source_segments, spec.length);
    let target_labels = labels_from(&target_segments, spec.length);
    let source = TimeSeries::new("source", source, Some(source_labels))?;
    let target = TimeSeries::new("target", target, None)?;
    Ok(SyntheticData {
        pair: DomainPair::new(source, target, Some(target_labels))?,
        source_segments,
        target_segments,
    })
}

fn labels_from(segments: &[AnomalySegment], len: usize) -> Vec<u8> {
    let mut labels = vec![0u8; len];
    for s in segments {
        labels[s.start..s.start + s.len].iter_mut().for_each(|l| *l = 1);
    }
    labels
}

fn generate_domain(
    spec: &SyntheticSpec,
    regimes: &[usize],
    plan: &[(usize, AnomalyKind)],
    dim: usize,
    shifted: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix, Vec<AnomalySegment>)> {
    let len = spec.length;
    let amps: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.6..1.0)).collect();
    let phases: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let harmonics: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
    let (scales, offsets): (Vec<f64>, Vec<f64>) = if shifted {
        (0..dim)
            .map(|_| (rng.gen_range(1.5..3.0), rng.gen_range(-2.0..2.0)))
            .unzip()
    } else {
        (vec![1.0; dim], vec![0.0; dim])
    };

    // oscillatory part and noise kept separate so drifts can freeze the former
    let mut base = Matrix::zeros(len, dim);
    let mut theta = vec![0.0; dim];
    for t in 0..len {
        let period = PERIODS[regimes[t / REGIME_LEN]];
        for j in 0..dim {
            theta[j] += 2.0 * PI * harmonics[j] / period;
            base[(t, j)] = amps[j] * (theta[j] + phases[j]).sin();
        }
    }

    let segments = place_segments(plan, len, rng)?;
    let mut signal = base.clone();
    for seg in &segments {
        let mut channels: Vec<usize> = (0..dim).collect();
        channels.shuffle(rng);
        channels.truncate(dim.min(2));
        match seg.kind {
            AnomalyKind::Spike => {
                for &j in &channels {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let jump = sign * rng.gen_range(2.5..3.5) * amps[j];
                    for t in seg.start..seg.start + seg.len {
                        signal[(t, j)] = base[(t, j)] + jump;
                    }
                }
            }
            AnomalyKind::Drift => {
                for &j in &channels {
                    let frozen = base[(seg.start, j)];
                    // head toward the far side without leaving the normal band
                    let target_level = -frozen.signum() * amps[j] * 0.8;
                    for k in 0..seg.len {
                        let frac = (k + 1) as f64 / seg.len as f64;
                        signal[(seg.start + k, j)] = frozen + frac * (target_level - frozen);
                    }
                }
            }
        }
    }

    let mut out = Matrix::zeros(len, dim);
    for t in 0..len {
        for j in 0..dim {
            let noise = NOISE * standard_normal(rng);
            out[(t, j)] = scales[j] * (signal[(t, j)] + noise) + offsets[j];
        }
    }
    Ok((out, segments))
}

/// Random non-overlapping placement with at least one window of clearance between segments.
fn place_segments(
    plan: &[(usize, AnomalyKind)],
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AnomalySegment>> {
    let longest = plan.iter().map(|p| p.0).max().unwrap_or(1);
    let gap = longest.max(4);
    let margin = longest;
    let mut placed: Vec<AnomalySegment> = Vec::with_capacity(plan.len());
    for &(seg_len, kind) in plan {
        let hi = len.saturating_sub(seg_len);
        if hi <= margin {
            return Err(Error::InvalidArgument(format!(
                "series of length {len} cannot hold a segment of length {seg_len}"
            )));
        }
        let mut found = None;
        for _ in 0..10_000 {
            let start = rng.gen_range(margin..hi);
            let clear = placed.iter().all(|s| {
                start + seg_len + gap <= s.start || s.start + s.len + gap <= start
            });
            if clear {
                found = Some(start);
                break;
            }
        }
        let start = found.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "could not place {} anomaly segments in {len} points",
                plan.len()
            ))
        })?;
        placed.push(AnomalySegment {
            start,
            len: seg_len,
            kind,
        });
    }
    placed.sort_by_key(|s| s.start);
    Ok(placed)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
