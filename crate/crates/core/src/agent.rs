//! Deep Q-learning: Q-network, epsilon-greedy policy, replay buffer and target network.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, GradientSet, Mlp, Optimizer, ParameterSet, UpdateRule};

/// Dense network mapping a state to one Q-value per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    params: ParameterSet,
    mlp: Mlp,
}

impl QNetwork {
    pub fn new(state_dim: usize, hidden: &[usize], actions: usize, seed: u64) -> Result<Self> {
        if state_dim == 0 || actions == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("Q-network sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let sizes: Vec<usize> = std::iter::once(state_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(actions))
            .collect();
        let mlp = Mlp::register(&mut params, "q", &sizes, Activation::Identity, 0.0, &mut rng);
        Ok(QNetwork { params, mlp })
    }

    pub fn state_dim(&self) -> usize {
        self.mlp.input_size()
    }

    pub fn actions(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mlp.forward(&self.params, state)
    }

    /// Mean squared error between `Q(s, a)` and fixed targets, with its gradient.
    pub fn td_loss_gradients(&self, samples: &[(&[f64], usize, f64)]) -> Result<(f64, GradientSet)> {
        if samples.is_empty() {
            return Err(Error::Empty("TD batch".into()));
        }
        let mut grads = self.params.zero_gradients();
        let scale = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        let none: Option<&mut ChaCha8Rng> = None;
        let mut none = none;
        for &(state, action, target) in samples {
            if action >= self.actions() {
                return Err(Error::OutOfRange(format!("action {action} of {}", self.actions())));
            }
            let trace = self.mlp.forward_trace(&self.params, state, none.as_deref_mut())?;
            let diff = trace.output()[action] - target;
            loss += scale * diff * diff;
            let mut d_out = vec![0.0; self.actions()];
            d_out[action] = 2.0 * scale * diff;
            self.mlp.backward(&self.params, &trace, &d_out, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// Makes `self` a bit-identical copy of `source`.
    pub fn sync_from(&mut self, source: &QNetwork) -> Result<()> {
        self.params.copy_from(&source.params)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    q: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..q.actions()));
    }
    Ok(argmax(&q.q_values(state)?))
}

/// `r + gamma * max Q'` for non-terminal transitions, `r` otherwise.
pub fn td_target(reward: f64, discount: f64, next_q: &[f64], terminal: bool) -> f64 {
    if terminal || next_q.is_empty() {
        reward
    } else {
        reward + discount * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Bounded FIFO of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be at least 1".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 14)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn store(&mut self, tr: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    /// `k` transitions: with replacement when fewer than `k` are stored, without otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Empty("replay buffer".into()));
        }
        let n = self.items.len();
        if n < k {
            Ok((0..k).map(|_| &self.items[rng.gen_range(0..n)]).collect())
        } else {
            Ok(index::sample(rng, n, k).into_iter().map(|i| &self.items[i]).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub epsilon: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Agent training steps between target-network copies.
    pub sync_period: usize,
    /// Agent training steps per environment step.
    pub inner_steps: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            epsilon: 0.2,
            discount: 0.95,
            batch_size: 64,
            buffer_capacity: 10_000,
            sync_period: 100,
            inner_steps: 1,
            learning_rate: 1e-3,
            hidden: vec![256, 128, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} outside [0, 1)", self.discount));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.sync_period == 0 {
            return bad("agent batch, buffer capacity and sync period must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("agent learning rate {} must be positive", self.learning_rate));
        }
        if self.hidden.contains(&0) {
            return bad("Q-network layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// One Bellman regression step on `q` against targets from `target_q`.
/// Returns the mean squared TD error before the step.
pub fn agent_train_step<R: Rng + ?Sized>(
    q: &mut QNetwork,
    target_q: &QNetwork,
    buffer: &ReplayBuffer,
    config: &AgentConfig,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<f64> {
    let batch = buffer.sample(config.batch_size, rng)?;
    let mut targets = Vec::with_capacity(batch.len());
    for tr in &batch {
        let next = if tr.terminal {
            Vec::new()
        } else {
            target_q.q_values(&tr.next_state)?
        };
        targets.push(td_target(tr.reward, config.discount, &next, tr.terminal));
    }
    let samples: Vec<(&[f64], usize, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(tr, &y)| (tr.state.as_slice(), tr.action, y))
        .collect();
    let (loss, grads) = q.td_loss_gradients(&samples)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("TD loss {loss}")));
    }
    optimizer.step(q.params_mut(), &grads)?;
    Ok(loss)
}

/// Online and target networks, replay buffer and optimizer, with its own random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub q: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer,
    config: AgentConfig,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    train_steps: u64,
}

impl Agent {
    pub fn new(state_dim: usize, actions: usize, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let q = QNetwork::new(state_dim, &config.hidden, actions, seed)?;
        let target = q.clone();
        Ok(Agent {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            optimizer: Optimizer::new(UpdateRule::adam(), config.learning_rate)?,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7),
            q,
            target,
            config,
            train_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn act(&mut self, state: &[f64]) -> Result<usize> {
        select_action(&self.q, state, self.config.epsilon, &mut self.rng)
    }

    pub fn uniform_action(&mut self) -> usize {
        self.rng.gen_range(0..self.q.actions())
    }

    pub fn remember(&mut self, tr: Transition) {
        self.buffer.store(tr);
    }

    /// Runs the configured number of training steps, syncing the target on its
    /// period. Returns the mean TD loss of those steps.
    pub fn learn(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..self.config.inner_steps {
            total += agent_train_step(
                &mut self.q,
                &self.target,
                &self.buffer,
                &self.config,
                &mut self.optimizer,
                &mut self.rng,
            )?;
            self.train_steps += 1;
            if self.train_steps.is_multiple_of(self.config.sync_period as u64) {
                self.target.sync_from(&self.q)?;
            }
        }
        Ok(total / self.config.inner_steps.max(1) as f64)
    }
}
