//! Comparison methods built on the same detector and data plumbing, and a
//! harness that scores them side by side.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DomainPair, TimeSeries};
use crate::detector::{Coefficients, DetectorBundle, DetectorConfig, Domain};
use crate::env::EnvAction;
use crate::error::{Error, Result};
use crate::inference::{infer_scores, score_fixed, score_random, threshold_scores, PredictionSeries, ScoreSeries};
use crate::matrix::Matrix;
use crate::metrics::{auc, macro_f1};
use crate::nn::{Activation, Mlp, Optimizer, ParameterSet};
use crate::trainer::{train, Policy, Seeds, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Learned window selection.
    ContexTda,
    /// Dense autoencoder on single target points.
    AeMlp,
    /// LSTM autoencoder on fixed-size target windows.
    AeLstm,
    /// Fixed windows, classifier + reconstruction + alignment, no discriminator.
    Rdc,
    /// Fixed windows with the full objective.
    RdcVrada,
    /// Uniformly random windows in training and scoring.
    RandContexTda,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::ContexTda,
        Method::AeMlp,
        Method::AeLstm,
        Method::Rdc,
        Method::RdcVrada,
        Method::RandContexTda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ContexTda => "ContexTDA",
            Method::AeMlp => "AE-MLP",
            Method::AeLstm => "AE-LSTM",
            Method::Rdc => "RDC",
            Method::RdcVrada => "RDC-VRADA",
            Method::RandContexTda => "RandContexTDA",
        }
    }

    /// Whether the method reads the labeled source domain.
    pub fn uses_source(self) -> bool {
        !matches!(self, Method::AeMlp | Method::AeLstm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Method settings not covered by [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    /// Window size of the fixed-window methods.
    pub window: usize,
}

/// The trainer settings a trainer-based method runs with. The fixed-window
/// methods force the constant action `(w, w)` and never train the agent.
/// Errors for the autoencoder baselines, which do not use the trainer.
pub fn training_config(method: Method, config: &TrainConfig, options: &BaselineOptions) -> Result<TrainConfig> {
    let w = options.window;
    let fixed = |discriminator: bool, objective: Coefficients| -> Result<TrainConfig> {
        if w == 0 {
            return Err(Error::InvalidArgument("fixed window must be at least 1".into()));
        }
        Ok(TrainConfig {
            k_max: config.k_max.max(w),
            policy: Policy::Constant(EnvAction { source: w, target: w }),
            train_agent: false,
            discriminator,
            objective,
            ..config.clone()
        })
    };
    match method {
        Method::ContexTda => Ok(TrainConfig {
            policy: Policy::Learned,
            train_agent: true,
            ..config.clone()
        }),
        Method::Rdc => fixed(false, Coefficients { lambda: 0.0, ..config.objective }),
        Method::RdcVrada => fixed(true, config.objective),
        Method::RandContexTda => Ok(TrainConfig {
            policy: Policy::Uniform,
            train_agent: false,
            ..config.clone()
        }),
        Method::AeMlp | Method::AeLstm => Err(Error::InvalidArgument(format!("{method} does not use the trainer"))),
    }
}

/// Trains `method` on `pair` and scores every target point. The ContexTDA
/// entry runs the learned policy; the others are the comparison baselines.
pub fn run_method(
    method: Method,
    pair: &DomainPair,
    config: &TrainConfig,
    options: &BaselineOptions,
) -> Result<ScoreSeries> {
    let w = options.window;
    match method {
        Method::AeMlp => ae_mlp(&pair.target, config),
        Method::AeLstm => ae_lstm(&pair.target, config, w),
        Method::ContexTda => {
            let out = train(pair, &training_config(method, config, options)?)?;
            infer_scores(&out.detector, &out.q, &out.counter, &pair.target, &pair.source)
        }
        Method::Rdc | Method::RdcVrada => {
            let out = train(pair, &training_config(method, config, options)?)?;
            score_fixed(&out.detector, &pair.target, w)
        }
        Method::RandContexTda => {
            let out = train(pair, &training_config(method, config, options)?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(Seeds::from(config.seed).scoring);
            score_random(&out.detector, &pair.target, config.k_max, &mut rng)
        }
    }
}

/// Minibatch order for one epoch.
fn shuffled(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx
}

/// Dense autoencoder on single points; score = squared reconstruction error.
pub fn ae_mlp(target: &TimeSeries, config: &TrainConfig) -> Result<ScoreSeries> {
    config.validate()?;
    let seeds = Seeds::from(config.seed);
    let mut init = ChaCha8Rng::seed_from_u64(seeds.init);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.detector);
    let d = target.dim();
    let arch = &config.architecture;
    let sizes: Vec<usize> = std::iter::once(d)
        .chain(arch.encoder_hidden.iter().copied())
        .chain(arch.decoder_hidden.iter().copied())
        .chain(std::iter::once(d))
        .collect();
    let mut ps = ParameterSet::new();
    let mlp = Mlp::register(&mut ps, "ae", &sizes, Activation::Identity, 0.0, &mut init);
    let mut opt = Optimizer::new(config.update_rule, config.learning_rate)?;
    let points = target.values();
    let mut none: Option<&mut ChaCha8Rng> = None;
    for _ in 0..config.epochs {
        for chunk in shuffled(target.len(), &mut rng).chunks(config.batch_size) {
            let mut grads = ps.zero_gradients();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let x = points.row(i);
                let trace = mlp.forward_trace(&ps, x, none.as_deref_mut())?;
                let d_out: Vec<f64> = trace.output().iter().zip(x).map(|(y, x)| 2.0 * scale * (y - x)).collect();
                mlp.backward(&ps, &trace, &d_out, &mut grads)?;
            }
            opt.step(&mut ps, &grads)?;
        }
    }
    let mut out = ScoreSeries {
        scores: Vec::with_capacity(target.len()),
        windows: vec![1; target.len()],
    };
    for x in points.iter_rows() {
        let y = mlp.forward(&ps, x)?;
        out.scores.push(crate::matrix::squared_distance(&y, x));
    }
    Ok(out)
}

/// LSTM autoencoder trained on fixed-size target windows only; score =
/// squared reconstruction error of the window ending at each point.
pub fn ae_lstm(target: &TimeSeries, config: &TrainConfig, window: usize) -> Result<ScoreSeries> {
    config.validate()?;
    if window == 0 || window > target.len() {
        return Err(Error::InvalidArgument(format!("window {window} out of range")));
    }
    let seeds = Seeds::from(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.detector);
    let d = target.dim();
    let mut bundle = DetectorBundle::new(
        DetectorConfig {
            discriminator: false,
            ..config.detector_config(d, d)
        },
        seeds.init,
    )?;
    let mut opt = Optimizer::new(config.update_rule, config.learning_rate)?;
    let windows: Vec<Matrix> = (0..target.len())
        .map(|t| target.sample_window(t, window).map(|s| s.values))
        .collect::<Result<_>>()?;
    for _ in 0..config.epochs {
        for chunk in shuffled(windows.len(), &mut rng).chunks(config.batch_size) {
            let batch: Vec<Matrix> = chunk.iter().map(|&i| windows[i].clone()).collect();
            bundle.update_reconstruction(&mut opt, &batch, Domain::Target)?;
        }
    }
    let scores = windows
        .iter()
        .map(|w| bundle.reconstruction_error(w, Domain::Target))
        .collect::<Result<_>>()?;
    Ok(ScoreSeries {
        scores,
        windows: vec![window; target.len()],
    })
}

/// One (method, seed) cell of a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<MethodResult, String>,
    pub runtime: Duration,
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub scores: ScoreSeries,
    pub predictions: PredictionSeries,
    pub macro_f1: f64,
    pub auc: f64,
}

/// Runs every method for every seed, thresholds the scores at `contamination`
/// and evaluates against the held-out target labels. A failing cell is
/// recorded with its error and does not stop the others.
pub fn compare(
    methods: &[Method],
    seeds: &[u64],
    pair: &DomainPair,
    config: &TrainConfig,
    options: &BaselineOptions,
    contamination: f64,
) -> Result<Vec<ComparisonRow>> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("methods or seeds".into()));
    }
    let labels = pair
        .target_labels
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("comparison needs held-out target labels".into()))?;
    let mut rows = Vec::with_capacity(methods.len() * seeds.len());
    for &method in methods {
        for &seed in seeds {
            let started = Instant::now();
            let config = TrainConfig { seed, ..config.clone() };
            let outcome = (|| -> Result<MethodResult> {
                let scores = run_method(method, pair, &config, options)?;
                let predictions = threshold_scores(&scores.scores, contamination)?;
                Ok(MethodResult {
                    macro_f1: macro_f1(&predictions.predictions, labels)?,
                    auc: auc(&scores.scores, labels)?,
                    scores,
                    predictions,
                })
            })()
            .map_err(|e| e.to_string());
            rows.push(ComparisonRow {
                method,
                seed,
                outcome,
                runtime: started.elapsed(),
            });
        }
    }
    Ok(rows)
}
