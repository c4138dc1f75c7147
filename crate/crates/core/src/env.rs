//! The window-selection decision process: dual-domain latent states, window-size
//! actions, and rewards derived from the detector's losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DomainPair;
use crate::detector::{ClassWeights, Coefficients, DetectorBundle, Domain, LossBreakdown, WindowPair};
use crate::error::{Error, Result};
use crate::nn::Optimizer;

/// Smallest reward denominator; keeps rewards finite when the discriminator term dominates.
pub const REWARD_DENOMINATOR_FLOOR: f64 = 1e-6;

/// Window positions kept for replaying into detector batches.
pub const WINDOW_MEMORY: usize = 10_000;

/// Source and target window sizes, each in `1..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvAction {
    pub source: usize,
    pub target: usize,
}

impl EnvAction {
    pub fn new(source: usize, target: usize, k_max: usize) -> Result<Self> {
        if source == 0 || target == 0 || source > k_max || target > k_max {
            return Err(Error::OutOfRange(format!(
                "action ({source}, {target}) outside 1..={k_max}"
            )));
        }
        Ok(EnvAction { source, target })
    }

    /// Flat index `(m - 1) * k_max + (n - 1)`.
    pub fn encode(self, k_max: usize) -> usize {
        (self.source - 1) * k_max + (self.target - 1)
    }

    pub fn decode(index: usize, k_max: usize) -> Result<Self> {
        if k_max == 0 || index >= k_max * k_max {
            return Err(Error::OutOfRange(format!(
                "action index {index} outside 0..{}",
                k_max * k_max
            )));
        }
        Ok(EnvAction {
            source: index / k_max + 1,
            target: index % k_max + 1,
        })
    }
}

/// `1 / max(alpha*cls + beta*recon + gamma*align - lambda*disc, 1e-6)`.
pub fn compute_reward(losses: &LossBreakdown, coeffs: &Coefficients) -> f64 {
    let denominator = coeffs.alpha * losses.cls + coeffs.beta * losses.recon + coeffs.gamma * losses.align
        - coeffs.lambda * losses.disc;
    1.0 / denominator.max(REWARD_DENOMINATOR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub losses: LossBreakdown,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub k_max: usize,
    /// Detector batch: the current window pair plus `batch_size - 1` replayed pairs.
    pub batch_size: usize,
    /// Weights of the detector's training objective.
    pub objective: Coefficients,
    pub reward: Coefficients,
    /// Seeds replay sampling and dropout.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Placement {
    source_index: usize,
    source_size: usize,
    target_index: usize,
    target_size: usize,
}

/// Sequential environment over one domain pair. Owns the detector it trains.
#[derive(Debug, Clone)]
pub struct ContextEnv {
    pair: DomainPair,
    detector: DetectorBundle,
    optimizer: Optimizer,
    config: EnvConfig,
    weights: ClassWeights,
    rng: ChaCha8Rng,
    memory: Vec<Placement>,
    memory_next: usize,
    cursor: usize,
    horizon: usize,
    ready: bool,
}

impl ContextEnv {
    pub fn new(
        pair: DomainPair,
        detector: DetectorBundle,
        optimizer: Optimizer,
        config: EnvConfig,
    ) -> Result<Self> {
        let shortest = pair.source.len().min(pair.target.len());
        if shortest < 2 {
            return Err(Error::InvalidArgument(format!(
                "domains need at least 2 points, shortest has {shortest}"
            )));
        }
        if config.k_max == 0 || config.k_max > shortest {
            return Err(Error::InvalidArgument(format!(
                "maximum window {} must lie in 1..={shortest}",
                config.k_max
            )));
        }
        if config.batch_size == 0 {
            return Err(Error::InvalidArgument("detector batch size must be at least 1".into()));
        }
        if detector.dim(Domain::Source) != pair.source.dim()
            || detector.dim(Domain::Target) != pair.target.dim()
        {
            return Err(Error::Shape("detector dimensions do not match the domain pair".into()));
        }
        let weights = ClassWeights::inverse_frequency(pair.source_labels());
        Ok(ContextEnv {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            pair,
            detector,
            optimizer,
            config,
            weights,
            memory: Vec::new(),
            memory_next: 0,
            cursor: 0,
            horizon: shortest - 1,
            ready: false,
        })
    }

    /// Steps per episode: `min(T_source, T_target) - 1`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn k_max(&self) -> usize {
        self.config.k_max
    }

    pub fn detector(&self) -> &DetectorBundle {
        &self.detector
    }

    pub fn class_weights(&self) -> ClassWeights {
        self.weights
    }

    pub fn into_detector(self) -> DetectorBundle {
        self.detector
    }

    /// Draws uniform window sizes from `rng` and returns the initial state.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        let k = self.config.k_max;
        let action = EnvAction {
            source: rng.gen_range(1..=k),
            target: rng.gen_range(1..=k),
        };
        self.restart(action)
    }

    /// Rewinds the cursor to 0 and builds the state from windows of the given sizes.
    pub fn restart(&mut self, action: EnvAction) -> Result<Vec<f64>> {
        EnvAction::new(action.source, action.target, self.config.k_max)?;
        self.cursor = 0;
        self.ready = true;
        let p = self.placement(0, action);
        self.state(&self.window_pair(p)?)
    }

    /// Samples this step's windows, updates the detector on them plus replayed
    /// windows, and rewards the action from the pre-update losses.
    pub fn step(&mut self, action: EnvAction) -> Result<StepOutcome> {
        if !self.ready || self.cursor >= self.horizon {
            return Err(Error::EpisodeFinished(self.cursor));
        }
        let action = EnvAction::new(action.source, action.target, self.config.k_max)?;
        let t = self.cursor;
        let current = self.placement(t, action);
        let current_pair = self.window_pair(current)?;
        let state = self.state(&current_pair)?;

        let mut batch = Vec::with_capacity(self.config.batch_size);
        batch.push(current_pair);
        if !self.memory.is_empty() {
            for _ in 1..self.config.batch_size {
                let p = self.memory[self.rng.gen_range(0..self.memory.len())];
                batch.push(self.window_pair(p)?);
            }
        }
        self.remember(current);

        let losses = self
            .detector
            .update(&mut self.optimizer, &batch, &self.config.objective, &self.weights, &mut self.rng)
            .map_err(|e| Error::NonFinite(format!("step {t}: {e}")))?;
        let reward = compute_reward(&losses, &self.config.reward);
        self.cursor += 1;
        Ok(StepOutcome {
            state,
            reward,
            losses,
            t,
        })
    }

    fn placement(&self, t: usize, action: EnvAction) -> Placement {
        Placement {
            source_index: t % self.pair.source.len(),
            source_size: action.source,
            target_index: t % self.pair.target.len(),
            target_size: action.target,
        }
    }

    fn window_pair(&self, p: Placement) -> Result<WindowPair> {
        let labels = self.pair.source_labels();
        Ok(WindowPair {
            source: self.pair.source.sample_window(p.source_index, p.source_size)?.values,
            source_label: labels[p.source_index],
            target: self.pair.target.sample_window(p.target_index, p.target_size)?.values,
        })
    }

    fn state(&self, pair: &WindowPair) -> Result<Vec<f64>> {
        let mut s = self.detector.encode(&pair.source, Domain::Source)?;
        s.extend(self.detector.encode(&pair.target, Domain::Target)?);
        Ok(s)
    }

    fn remember(&mut self, p: Placement) {
        if self.memory.len() < WINDOW_MEMORY {
            self.memory.push(p);
        } else {
            self.memory[self.memory_next] = p;
            self.memory_next = (self.memory_next + 1) % WINDOW_MEMORY;
        }
    }
}
