//! Joint training of the detector and the window-selection agent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, AgentConfig, QNetwork, Transition};
use crate::data::{format_sig, DomainPair};
use crate::detector::{Coefficients, DetectorBundle, DetectorConfig, LossBreakdown};
use crate::env::{ContextEnv, EnvAction, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Optimizer, UpdateRule};

/// How actions are chosen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Epsilon-greedy on the Q-network.
    Learned,
    /// Uniform over the action space.
    Uniform,
    /// Always the same action.
    Constant(EnvAction),
}

/// Layer sizes of the detector and agent networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
            head_hidden: vec![128, 128],
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Detector batch size (current window pair plus replayed pairs).
    pub batch_size: usize,
    pub k_max: usize,
    /// Weights of the detector objective.
    pub objective: Coefficients,
    pub reward: Coefficients,
    pub agent: AgentConfig,
    pub learning_rate: f64,
    pub update_rule: UpdateRule,
    pub architecture: Architecture,
    /// Build and train the domain discriminator.
    pub discriminator: bool,
    pub policy: Policy,
    /// Store transitions and train the Q-network. Off for baselines that never consult it.
    pub train_agent: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            k_max: 30,
            objective: Coefficients::default(),
            reward: Coefficients::default(),
            agent: AgentConfig::default(),
            learning_rate: 0.005,
            update_rule: UpdateRule::adam(),
            architecture: Architecture::default(),
            discriminator: true,
            policy: Policy::Learned,
            train_agent: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k_max == 0 {
            return bad("maximum window size must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("detector batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        self.objective.validate()?;
        self.reward.validate()?;
        self.agent.validate()?;
        if let Policy::Constant(a) = self.policy {
            EnvAction::new(a.source, a.target, self.k_max)?;
        }
        Ok(())
    }

    pub fn detector_config(&self, source_dim: usize, target_dim: usize) -> DetectorConfig {
        DetectorConfig {
            source_dim,
            target_dim,
            encoder_hidden: self.architecture.encoder_hidden.clone(),
            decoder_hidden: self.architecture.decoder_hidden.clone(),
            head_hidden: self.architecture.head_hidden.clone(),
            dropout: self.architecture.dropout,
            discriminator: self.discriminator,
        }
    }

    pub fn actions(&self) -> usize {
        self.k_max * self.k_max
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Seeds {
    pub init: u64,
    pub detector: u64,
    pub reset: u64,
    pub agent: u64,
    pub scoring: u64,
}

impl Seeds {
    pub(crate) fn from(seed: u64) -> Self {
        Seeds {
            init: splitmix(seed, 1),
            detector: splitmix(seed, 2),
            reset: splitmix(seed, 3),
            agent: splitmix(seed, 4),
            scoring: splitmix(seed, 5),
        }
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Tally of chosen actions by flat index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionCounter {
    k_max: usize,
    counts: BTreeMap<usize, u64>,
}

impl ActionCounter {
    pub fn new(k_max: usize) -> Self {
        ActionCounter {
            k_max,
            counts: BTreeMap::new(),
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn add(&mut self, index: usize) {
        *self.counts.entry(index).or_insert(0) += 1;
    }

    pub fn add_count(&mut self, index: usize, count: u64) {
        if count > 0 {
            *self.counts.entry(index).or_insert(0) += count;
        }
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(&index).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// `(index, count)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i, c))
    }

    fn marginal_mode(&self, pick: impl Fn(EnvAction) -> usize) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::Empty("action counter".into()));
        }
        let mut marginal = vec![0u64; self.k_max + 1];
        for (i, c) in self.iter() {
            marginal[pick(EnvAction::decode(i, self.k_max)?)] += c;
        }
        // first maximum: ties go to the smaller window
        let mut best = 1;
        for size in 2..=self.k_max {
            if marginal[size] > marginal[best] {
                best = size;
            }
        }
        Ok(best)
    }

    pub fn most_frequent_source_window(&self) -> Result<usize> {
        self.marginal_mode(|a| a.source)
    }

    pub fn most_frequent_target_window(&self) -> Result<usize> {
        self.marginal_mode(|a| a.target)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("source_window,target_window,count\n");
        for (i, c) in self.iter() {
            let a = EnvAction::decode(i, self.k_max)?;
            let _ = writeln!(out, "{},{},{c}", a.source, a.target);
        }
        write_file(path.as_ref(), &out)
    }

    pub fn read_csv(path: impl AsRef<Path>, k_max: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut counter = ActionCounter::new(k_max);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let field = |c: usize| -> Result<u64> {
                record.get(c).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: row + 1,
                    column: ["source_window", "target_window", "count"][c].into(),
                    message: "expected a non-negative integer".into(),
                })
            };
            let a = EnvAction::new(field(0)? as usize, field(1)? as usize, k_max)?;
            counter.add_count(a.encode(k_max), field(2)?);
        }
        Ok(counter)
    }
}

/// Source window with the highest marginal count; ties go to the smaller size.
pub fn most_frequent_source_window(counter: &ActionCounter) -> Result<usize> {
    counter.most_frequent_source_window()
}

/// One environment step of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub t: usize,
    pub action: EnvAction,
    pub reward: f64,
    pub losses: LossBreakdown,
    /// Mean TD loss of the agent steps that followed; absent when the agent is not trained.
    pub td_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub duration: Duration,
}

impl TrainReport {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn mean_reward(&self, epoch: usize) -> Option<f64> {
        let r: Vec<f64> = self.steps.iter().filter(|s| s.epoch == epoch).map(|s| s.reward).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,t,source_window,target_window,reward,loss_cls,loss_recon,loss_align,loss_disc,td_loss\n",
        );
        for s in &self.steps {
            let f = |v: f64| format_sig(v, 9);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.epoch,
                s.t,
                s.action.source,
                s.action.target,
                f(s.reward),
                f(s.losses.cls),
                f(s.losses.recon),
                f(s.losses.align),
                f(s.losses.disc),
                s.td_loss.map(f).unwrap_or_default()
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }

    /// `key=value` lines summarising the run. Wall-clock time is left out so
    /// identical runs produce identical files.
    pub fn summary(&self, counter: &ActionCounter) -> String {
        let mut out = String::new();
        let epochs = self.steps.last().map_or(0, |s| s.epoch + 1);
        let _ = writeln!(out, "epochs={epochs}");
        let _ = writeln!(out, "steps={}", self.steps.len());
        let mean = |v: Vec<f64>| {
            if v.is_empty() {
                String::from("nan")
            } else {
                format_sig(v.iter().sum::<f64>() / v.len() as f64, 9)
            }
        };
        let _ = writeln!(out, "mean_reward={}", mean(self.rewards()));
        let last = epochs.saturating_sub(1);
        let last_epoch: Vec<&StepRecord> = self.steps.iter().filter(|s| s.epoch == last).collect();
        let _ = writeln!(out, "last_epoch_mean_reward={}", mean(last_epoch.iter().map(|s| s.reward).collect()));
        for (key, get) in [
            ("last_epoch_loss_cls", (|l: &LossBreakdown| l.cls) as fn(&LossBreakdown) -> f64),
            ("last_epoch_loss_recon", |l| l.recon),
            ("last_epoch_loss_align", |l| l.align),
            ("last_epoch_loss_disc", |l| l.disc),
        ] {
            let _ = writeln!(out, "{key}={}", mean(last_epoch.iter().map(|s| get(&s.losses)).collect()));
        }
        let td: Vec<f64> = self.steps.iter().filter_map(|s| s.td_loss).collect();
        let _ = writeln!(out, "mean_td_loss={}", mean(td));
        let window = |r: Result<usize>| r.map_or_else(|_| String::from("none"), |w| w.to_string());
        let _ = writeln!(out, "most_frequent_source_window={}", window(counter.most_frequent_source_window()));
        let _ = writeln!(out, "most_frequent_target_window={}", window(counter.most_frequent_target_window()));
        out
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub detector: DetectorBundle,
    pub q: QNetwork,
    pub counter: ActionCounter,
    pub report: TrainReport,
    /// Transitions left in the replay buffer.
    pub buffer_len: usize,
}

/// Runs the joint loop: per epoch and time step, choose window sizes, update
/// the detector on the sampled windows, reward the choice, and train the agent.
///
/// Deterministic given `config.seed`. The detector's random stream (replay
/// sampling, dropout) is independent of the agent's, so the detector trajectory
/// depends only on the chosen actions.
pub fn train(pair: &DomainPair, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let seeds = Seeds::from(config.seed);
    let shortest = pair.source.len().min(pair.target.len());
    if config.k_max > shortest {
        return Err(Error::InvalidArgument(format!(
            "maximum window {} exceeds the shorter domain length {shortest}",
            config.k_max
        )));
    }
    let detector = DetectorBundle::new(
        config.detector_config(pair.source.dim(), pair.target.dim()),
        seeds.init,
    )?;
    let state_dim = 2 * detector.latent_dim();
    let mut agent = Agent::new(state_dim, config.actions(), config.agent.clone(), seeds.agent)?;
    let mut counter = ActionCounter::new(config.k_max);
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            detector,
            q: agent.q,
            counter,
            report,
            buffer_len: 0,
        });
    }

    let optimizer = Optimizer::new(config.update_rule, config.learning_rate)?;
    let env_config = EnvConfig {
        k_max: config.k_max,
        batch_size: config.batch_size,
        objective: config.objective,
        reward: config.reward,
        seed: seeds.detector,
    };
    let mut env = ContextEnv::new(pair.clone(), detector, optimizer, env_config)?;
    let horizon = env.horizon();
    let mut reset_rng = ChaCha8Rng::seed_from_u64(seeds.reset);
    let mut state = env.reset(&mut reset_rng)?;
    let mut last = None;

    for epoch in 0..config.epochs {
        if let Some(a) = last {
            state = env.restart(a)?;
        }
        for t in 0..horizon {
            let index = match config.policy {
                Policy::Learned => agent.act(&state)?,
                Policy::Uniform => agent.uniform_action(),
                Policy::Constant(a) => a.encode(config.k_max),
            };
            let action = EnvAction::decode(index, config.k_max)?;
            counter.add(index);
            let out = env.step(action).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, {m}")),
                other => other,
            })?;
            let td_loss = if config.train_agent {
                agent.remember(Transition {
                    state: std::mem::take(&mut state),
                    action: index,
                    next_state: out.state.clone(),
                    reward: out.reward,
                    terminal: t + 1 == horizon,
                });
                Some(agent.learn()?)
            } else {
                None
            };
            report.steps.push(StepRecord {
                epoch,
                t,
                action,
                reward: out.reward,
                losses: out.losses,
                td_loss,
            });
            state = out.state;
            last = Some(action);
        }
    }
    report.duration = started.elapsed();
    Ok(TrainOutcome {
        detector: env.into_detector(),
        q: agent.q,
        counter,
        report,
        buffer_len: agent.buffer.len(),
    })
}

/// Trained detector, Q-network and action counter with the settings needed to rebuild them.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub detector: DetectorBundle,
    pub q: QNetwork,
    pub counter: ActionCounter,
    pub q_hidden: Vec<usize>,
}

const MANIFEST: &str = "manifest.txt";

impl TrainedModel {
    pub fn from_outcome(outcome: &TrainOutcome, config: &TrainConfig) -> Self {
        TrainedModel {
            detector: outcome.detector.clone(),
            q: outcome.q.clone(),
            counter: outcome.counter.clone(),
            q_hidden: config.agent.hidden.clone(),
        }
    }

    /// Writes `manifest.txt`, `detector.params`, `q.params` and `actions.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = self.detector.config();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut m = String::new();
        let _ = writeln!(m, "format=contextda-model 1");
        let _ = writeln!(m, "source_dim={}", c.source_dim);
        let _ = writeln!(m, "target_dim={}", c.target_dim);
        let _ = writeln!(m, "heterogeneous={}", c.heterogeneous());
        let _ = writeln!(m, "encoder_hidden={}", list(&c.encoder_hidden));
        let _ = writeln!(m, "decoder_hidden={}", list(&c.decoder_hidden));
        let _ = writeln!(m, "head_hidden={}", list(&c.head_hidden));
        let _ = writeln!(m, "dropout={}", c.dropout);
        let _ = writeln!(m, "discriminator={}", c.discriminator);
        let _ = writeln!(m, "k_max={}", self.counter.k_max());
        let _ = writeln!(m, "q_hidden={}", list(&self.q_hidden));
        write_file(&dir.join(MANIFEST), &m)?;
        checkpoint::save(self.detector.params(), dir.join("detector.params"))?;
        checkpoint::save(self.q.params(), dir.join("q.params"))?;
        self.counter.write_csv(dir.join("actions.csv"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut fields = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("{}: malformed line {line:?}", path.display())))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("{}: missing {k}", path.display())))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Checkpoint(format!("{k} is not an integer")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| Error::Checkpoint(format!("{k} holds a non-integer"))))
                .collect()
        };
        if get("format")? != "contextda-model 1" {
            return Err(Error::Checkpoint(format!("{}: unknown format", path.display())));
        }
        let config = DetectorConfig {
            source_dim: num("source_dim")?,
            target_dim: num("target_dim")?,
            encoder_hidden: list("encoder_hidden")?,
            decoder_hidden: list("decoder_hidden")?,
            head_hidden: list("head_hidden")?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Checkpoint("dropout is not a number".into()))?,
            discriminator: get("discriminator")? == "true",
        };
        let k_max = num("k_max")?;
        let q_hidden = list("q_hidden")?;
        let mut detector = DetectorBundle::new(config, 0)?;
        checkpoint::load(detector.params_mut(), dir.join("detector.params"))?;
        let mut q = QNetwork::new(2 * detector.latent_dim(), &q_hidden, k_max * k_max, 0)?;
        checkpoint::load(q.params_mut(), dir.join("q.params"))?;
        let counter = ActionCounter::read_csv(dir.join("actions.csv"), k_max)?;
        Ok(TrainedModel {
            detector,
            q,
            counter,
            q_hidden,
        })
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row: e.position().map_or(0, |p| p.record() as usize),
        column: String::from("-"),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter(entries: &[((usize, usize), u64)], k: usize) -> ActionCounter {
        let mut c = ActionCounter::new(k);
        for &((m, n), count) in entries {
            c.add_count(EnvAction::new(m, n, k).unwrap().encode(k), count);
        }
        c
    }

    #[test]
    fn source_marginal_mode() {
        let c = counter(&[((3, 1), 5), ((3, 7), 4), ((2, 2), 6)], 8);
        assert_eq!(most_frequent_source_window(&c).unwrap(), 3);
        assert_eq!(counter(&[((4, 4), 1)], 5).most_frequent_source_window().unwrap(), 4);
        assert_eq!(counter(&[((2, 1), 5), ((6, 1), 5)], 8).most_frequent_source_window().unwrap(), 2);
        assert!(ActionCounter::new(3).most_frequent_source_window().is_err());
    }

    #[test]
    fn seeds_are_distinct_streams() {
        let s = Seeds::from(7);
        let all = [s.init, s.detector, s.reset, s.agent, s.scoring];
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
