//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must appear
//! in [`SCHEMA`]; unknown or repeated keys are rejected. Lists are comma
//! separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use contextda::agent::AgentConfig;
use contextda::baselines::{BaselineOptions, Method};
use contextda::detector::Coefficients;
use contextda::nn::UpdateRule;
use contextda::synthetic::SyntheticSpec;
use contextda::trainer::{Architecture, TrainConfig};

/// Every accepted key with a one-line description.
pub const SCHEMA: &[(&str, &str)] = &[
    ("seed", "run seed (integer, default 0)"),
    ("seeds", "seeds for compare (list, default: seed)"),
    ("out", "output directory (default out)"),
    ("contamination", "expected anomaly fraction in (0, 0.5] (default 0.05)"),
    ("data.source", "labeled source CSV; when absent the synthetic generator is used"),
    ("data.target", "target CSV (required with data.source)"),
    ("data.target_labels", "held-out target labels CSV with a label column (optional)"),
    ("data.normalize", "min-max scale each series to [0, 1] (default true)"),
    ("synthetic.seed", "generator seed (default 0)"),
    ("synthetic.length", "points per domain (default 2000)"),
    ("synthetic.source_dim", "source features (default 5)"),
    ("synthetic.target_dim", "target features (default 5)"),
    ("synthetic.anomaly_ratio", "fraction of anomalous points (default 0.05)"),
    ("synthetic.signature_lengths", "window lengths that reveal anomalies (default 2,8)"),
    ("train.epochs", "passes over the series (default 10)"),
    ("train.batch_size", "detector window pairs per step (default 128)"),
    ("train.k_max", "largest window size (default 30)"),
    ("train.learning_rate", "detector step size (default 0.005)"),
    ("train.optimizer", "adam or sgd (default adam)"),
    ("train.encoder_hidden", "LSTM encoder widths (default 256,128)"),
    ("train.decoder_hidden", "LSTM decoder widths (default 128,256)"),
    ("train.head_hidden", "classifier/discriminator widths (default 128,128)"),
    ("train.dropout", "dropout rate of the heads (default 0.2)"),
    ("train.discriminator", "train the domain discriminator (default true)"),
    ("objective.alpha", "classification weight (default 1)"),
    ("objective.beta", "reconstruction weight (default 1)"),
    ("objective.gamma", "alignment weight (default 1)"),
    ("objective.lambda", "discriminator weight (default 1)"),
    ("reward.alpha", "classification weight (default 1)"),
    ("reward.beta", "reconstruction weight (default 1)"),
    ("reward.gamma", "alignment weight (default 1)"),
    ("reward.lambda", "discriminator weight, subtracted (default 1)"),
    ("agent.epsilon", "exploration rate (default 0.2)"),
    ("agent.discount", "discount factor (default 0.95)"),
    ("agent.batch_size", "transitions per update (default 64)"),
    ("agent.buffer_capacity", "replay capacity (default 10000)"),
    ("agent.sync_period", "updates between target syncs (default 100)"),
    ("agent.inner_steps", "updates per environment step (default 1)"),
    ("agent.learning_rate", "Q-network step size (default 0.001)"),
    ("agent.hidden", "Q-network widths (default 256,128,64)"),
    ("compare.methods", "methods to compare (default: all)"),
    ("compare.window", "window of the fixed-window methods (default: train.k_max)"),
    ("compare.timing", "add runtime_s to the results (default false)"),
];

/// A configuration problem. Reported before any output is written.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        source: PathBuf,
        target: PathBuf,
        target_labels: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataSource,
    pub normalize: bool,
    pub train: TrainConfig,
    pub contamination: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub baseline: BaselineOptions,
    pub timing: bool,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Replaces the run seed and the compare seed list.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.seeds = vec![seed];
    }

    pub fn synthetic(&self) -> Option<&SyntheticSpec> {
        match &self.data {
            DataSource::Synthetic(s) => Some(s),
            DataSource::Files { .. } => None,
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Parses and validates a configuration. Relative data paths are kept as written.
pub fn parse(text: &str) -> Result<RunConfig> {
    let known: BTreeSet<&str> = SCHEMA.iter().map(|(k, _)| *k).collect();
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !known.contains(k) {
            return Err(ConfigError(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError(format!("line {}: key {k:?} repeated", i + 1)));
        }
    }
    Keys(map).build()
}

struct Keys(BTreeMap<String, String>);

impl Keys {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| ConfigError(format!("{key}: cannot parse {:?}", x.trim())))
                })
                .collect(),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.0.get(key).map(PathBuf::from)
    }

    fn coefficients(&self, prefix: &str) -> Result<Coefficients> {
        let d = Coefficients::default();
        let c = Coefficients {
            alpha: self.get(&format!("{prefix}.alpha"), d.alpha)?,
            beta: self.get(&format!("{prefix}.beta"), d.beta)?,
            gamma: self.get(&format!("{prefix}.gamma"), d.gamma)?,
            lambda: self.get(&format!("{prefix}.lambda"), d.lambda)?,
        };
        c.validate().map_err(|e| ConfigError(format!("{prefix}: {e}")))?;
        Ok(c)
    }

    fn build(&self) -> Result<RunConfig> {
        let seed: u64 = self.get("seed", 0)?;
        let data = match self.path("data.source") {
            Some(source) => {
                if let Some(k) = self.0.keys().find(|k| k.starts_with("synthetic.")) {
                    return Err(ConfigError(format!("{k} conflicts with data.source")));
                }
                DataSource::Files {
                    source,
                    target: self
                        .path("data.target")
                        .ok_or_else(|| ConfigError("data.target is required with data.source".into()))?,
                    target_labels: self.path("data.target_labels"),
                }
            }
            None => {
                if let Some(k) = ["data.target", "data.target_labels"].into_iter().find(|k| self.0.contains_key(*k)) {
                    return Err(ConfigError(format!("{k} requires data.source")));
                }
                let d = SyntheticSpec::default();
                let spec = SyntheticSpec {
                    seed: self.get("synthetic.seed", d.seed)?,
                    length: self.get("synthetic.length", d.length)?,
                    dims: (
                        self.get("synthetic.source_dim", d.dims.0)?,
                        self.get("synthetic.target_dim", d.dims.1)?,
                    ),
                    anomaly_ratio: self.get("synthetic.anomaly_ratio", d.anomaly_ratio)?,
                    signature_lengths: self
                        .list("synthetic.signature_lengths", d.signature_lengths.iter().copied().collect())?
                        .into_iter()
                        .collect(),
                };
                spec.validate().map_err(|e| ConfigError(format!("synthetic: {e}")))?;
                DataSource::Synthetic(spec)
            }
        };

        let da = AgentConfig::default();
        let agent = AgentConfig {
            epsilon: self.get("agent.epsilon", da.epsilon)?,
            discount: self.get("agent.discount", da.discount)?,
            batch_size: self.get("agent.batch_size", da.batch_size)?,
            buffer_capacity: self.get("agent.buffer_capacity", da.buffer_capacity)?,
            sync_period: self.get("agent.sync_period", da.sync_period)?,
            inner_steps: self.get("agent.inner_steps", da.inner_steps)?,
            learning_rate: self.get("agent.learning_rate", da.learning_rate)?,
            hidden: self.list("agent.hidden", da.hidden)?,
        };
        let d = TrainConfig::default();
        let arch = Architecture {
            encoder_hidden: self.list("train.encoder_hidden", d.architecture.encoder_hidden.clone())?,
            decoder_hidden: self.list("train.decoder_hidden", d.architecture.decoder_hidden.clone())?,
            head_hidden: self.list("train.head_hidden", d.architecture.head_hidden.clone())?,
            dropout: self.get("train.dropout", d.architecture.dropout)?,
        };
        let update_rule = match self.0.get("train.optimizer").map(|s| s.to_ascii_lowercase()).as_deref() {
            None | Some("adam") => UpdateRule::adam(),
            Some("sgd") => UpdateRule::Sgd,
            Some(other) => return Err(ConfigError(format!("train.optimizer: unknown optimizer {other:?}"))),
        };
        let train = TrainConfig {
            epochs: self.get("train.epochs", d.epochs)?,
            batch_size: self.get("train.batch_size", d.batch_size)?,
            k_max: self.get("train.k_max", d.k_max)?,
            objective: self.coefficients("objective")?,
            reward: self.coefficients("reward")?,
            agent,
            learning_rate: self.get("train.learning_rate", d.learning_rate)?,
            update_rule,
            architecture: arch,
            discriminator: self.get("train.discriminator", d.discriminator)?,
            seed,
            ..d
        };
        train.validate().map_err(|e| ConfigError(e.to_string()))?;
        if train.architecture.encoder_hidden.is_empty() || train.architecture.decoder_hidden.is_empty() {
            return Err(ConfigError("encoder and decoder need at least one layer".into()));
        }
        if !(0.0..1.0).contains(&train.architecture.dropout) {
            return Err(ConfigError(format!("train.dropout {} outside [0, 1)", train.architecture.dropout)));
        }
        if let Some(s) = self.synthetic_length(&data) {
            if train.k_max > s {
                return Err(ConfigError(format!("train.k_max {} exceeds synthetic.length {s}", train.k_max)));
            }
        }

        let contamination: f64 = self.get("contamination", 0.05)?;
        if !(contamination > 0.0 && contamination <= 0.5) {
            return Err(ConfigError(format!("contamination {contamination} outside (0, 0.5]")));
        }
        let seeds = self.list("seeds", vec![seed])?;
        if seeds.is_empty() {
            return Err(ConfigError("seeds is empty".into()));
        }
        let methods: Vec<Method> = match self.0.get("compare.methods") {
            None => Method::ALL.to_vec(),
            Some(v) => v
                .split(',')
                .map(|m| m.trim().parse().map_err(|e: contextda::Error| ConfigError(format!("compare.methods: {e}"))))
                .collect::<Result<_>>()?,
        };
        if methods.is_empty() {
            return Err(ConfigError("compare.methods is empty".into()));
        }
        if methods.iter().collect::<BTreeSet<_>>().len() != methods.len() {
            return Err(ConfigError("compare.methods lists a method twice".into()));
        }
        let window = self.get("compare.window", train.k_max)?;
        if window == 0 || window > train.k_max {
            return Err(ConfigError(format!("compare.window {window} outside 1..={}", train.k_max)));
        }
        Ok(RunConfig {
            data,
            normalize: self.get("data.normalize", true)?,
            contamination,
            seeds,
            out: self.path("out").unwrap_or_else(|| PathBuf::from("out")),
            methods,
            baseline: BaselineOptions { window },
            timing: self.get("compare.timing", false)?,
            train,
        })
    }

    fn synthetic_length(&self, data: &DataSource) -> Option<usize> {
        match data {
            DataSource::Synthetic(s) => Some(s.length),
            DataSource::Files { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.synthetic(), Some(&SyntheticSpec::default()));
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.methods.len(), 6);
        assert_eq!(c.baseline.window, 30);
        assert!(!c.timing);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse("train.epoch = 3").unwrap_err();
        assert!(e.0.contains("unknown key"), "{e}");
    }

    #[test]
    fn repeated_key_rejected() {
        assert!(parse("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn values_parse() {
        let c = parse(
            "# comment\nseed = 7\nseeds = 1, 2,3\ntrain.encoder_hidden = 4,2\n\
             reward.lambda = 0.1\ncompare.methods = ContexTDA, AE-LSTM\ntrain.k_max = 5\ncompare.window = 3\n",
        )
        .unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.train.architecture.encoder_hidden, vec![4, 2]);
        assert_eq!(c.train.reward.lambda, 0.1);
        assert_eq!(c.methods, vec![Method::ContexTda, Method::AeLstm]);
        assert_eq!(c.baseline.window, 3);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "contamination = 0.6",
            "contamination = 0",
            "train.k_max = 0",
            "train.k_max = 5\ncompare.window = 6",
            "train.optimizer = rmsprop",
            "reward.alpha = -1",
            "seeds = 1,x",
            "data.target = t.csv",
            "data.source = s.csv",
            "data.source = s.csv\ndata.target = t.csv\nsynthetic.length = 10",
            "synthetic.length = 5\ntrain.k_max = 10",
            "train.dropout = 1.0",
            "compare.methods = RDC, rdc",
            "no equals sign",
        ] {
            assert!(parse(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn seed_override_replaces_list() {
        let mut c = parse("seeds = 1,2").unwrap();
        c.override_seed(9);
        assert_eq!(c.seed(), 9);
        assert_eq!(c.seeds, vec![9]);
    }
}
