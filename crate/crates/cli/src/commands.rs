use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use contextda::baselines::{compare, ComparisonRow, Method};
use contextda::data::{format_sig, load_csv, load_labels, write_labels_csv, DomainPair};
use contextda::inference::{infer_scores, threshold_scores, write_scores_csv};
use contextda::metrics::{auc, macro_f1};
use contextda::synthetic::generate_synthetic;
use contextda::trainer::{train, TrainedModel};

use crate::config::{DataSource, RunConfig};

/// Exit status 1 for `Invalid`, 2 for `Runtime`.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<contextda::Error> for CliError {
    fn from(e: contextda::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(e: contextda::Error) -> CliError {
    CliError::Invalid(e.to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Loads (or generates) the domain pair. Problems with the inputs count as
/// validation errors since nothing has been written yet.
pub fn load_pair(config: &RunConfig) -> Result<DomainPair> {
    let pair = match &config.data {
        DataSource::Synthetic(spec) => generate_synthetic(spec).map_err(invalid)?,
        DataSource::Files {
            source,
            target,
            target_labels,
        } => {
            let src = load_csv(source).map_err(invalid)?;
            if src.labels().is_none() {
                return Err(CliError::Invalid(format!(
                    "source file {} has no label column",
                    source.display()
                )));
            }
            let tgt = load_csv(target).map_err(invalid)?;
            let labels = match target_labels {
                Some(p) => Some(load_labels(p).map_err(invalid)?),
                None => tgt.labels().map(<[u8]>::to_vec),
            };
            DomainPair::new(src, tgt, labels).map_err(invalid)?
        }
    };
    let k = config.train.k_max;
    if k > pair.source.len().min(pair.target.len()) {
        return Err(CliError::Invalid(format!("train.k_max {k} exceeds the shorter series length")));
    }
    Ok(if config.normalize { pair.normalized() } else { pair })
}

pub fn cmd_generate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = config
        .synthetic()
        .ok_or_else(|| CliError::Invalid("generate needs a synthetic spec, not data.source".into()))?;
    let pair = generate_synthetic(spec).map_err(invalid)?;
    create_dir(&config.out)?;
    let paths: Vec<PathBuf> = ["source.csv", "target.csv", "target_labels.csv"]
        .iter()
        .map(|f| config.out.join(f))
        .collect();
    pair.source.write_csv(&paths[0], true)?;
    pair.target.write_csv(&paths[1], false)?;
    write_labels_csv(&paths[2], pair.target_labels.as_deref().unwrap_or_default())?;
    Ok(paths)
}

pub fn cmd_train(config: &RunConfig, checkpoint: Option<&Path>) -> Result<String> {
    let pair = load_pair(config)?;
    let outcome = train(&pair, &config.train)?;
    create_dir(&config.out)?;
    let dir = checkpoint.map_or_else(|| config.out.join("checkpoint"), Path::to_path_buf);
    TrainedModel::from_outcome(&outcome, &config.train).save(&dir)?;
    outcome.report.write_csv(config.out.join("train_report.csv"))?;
    let summary = outcome.report.summary(&outcome.counter);
    write(&config.out.join("train_summary.txt"), &summary)?;
    Ok(summary)
}

/// Keys of the evaluation summary, in order.
pub const EVALUATE_KEYS: [&str; 4] = ["macro_f1", "auc", "contamination", "seed"];

pub fn cmd_evaluate(config: &RunConfig, checkpoint: Option<&Path>) -> Result<String> {
    let dir = checkpoint.map_or_else(|| config.out.join("checkpoint"), Path::to_path_buf);
    if !dir.exists() {
        return Err(CliError::Invalid(format!("checkpoint {} does not exist", dir.display())));
    }
    let pair = load_pair(config)?;
    let model = TrainedModel::load(&dir)?;
    let scores = infer_scores(&model.detector, &model.q, &model.counter, &pair.target, &pair.source)?;
    let predictions = threshold_scores(&scores.scores, config.contamination)?;
    let (f1, area) = match pair.target_labels.as_deref() {
        Some(labels) => (
            format_sig(macro_f1(&predictions.predictions, labels)?, 9),
            format_sig(auc(&scores.scores, labels)?, 9),
        ),
        None => ("unavailable".to_string(), "unavailable".to_string()),
    };
    create_dir(&config.out)?;
    write_scores_csv(config.out.join("scores.csv"), &scores, &predictions)?;
    let values = [f1, area, format_sig(config.contamination, 9), config.seed().to_string()];
    let mut summary = String::new();
    for (k, v) in EVALUATE_KEYS.iter().zip(values) {
        let _ = writeln!(summary, "{k}={v}");
    }
    write(&config.out.join("evaluate_summary.txt"), &summary)?;
    Ok(summary)
}

/// File-name form of a method name, e.g. `AE-LSTM` -> `ae_lstm`.
pub fn slug(method: Method) -> String {
    method
        .name()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Results table: one row per (method, seed), then one mean row per method.
pub fn results_csv(rows: &[ComparisonRow], methods: &[Method], timing: bool) -> String {
    let mut out = String::from("method,seed,status,macro_f1,auc");
    out.push_str(if timing { ",runtime_s\n" } else { "\n" });
    let f = |v: f64| format_sig(v, 9);
    for r in rows {
        let _ = match &r.outcome {
            Ok(m) => write!(out, "{},{},ok,{},{}", r.method, r.seed, f(m.macro_f1), f(m.auc)),
            Err(_) => write!(out, "{},{},failed,,", r.method, r.seed),
        };
        if timing {
            let _ = write!(out, ",{}", f(r.runtime.as_secs_f64()));
        }
        out.push('\n');
    }
    for &method in methods {
        let cells: Vec<&ComparisonRow> = rows.iter().filter(|r| r.method == method).collect();
        let ok: Vec<_> = cells.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let mean = |g: fn(&contextda::baselines::MethodResult) -> f64| {
            f(ok.iter().map(|m| g(m)).sum::<f64>() / ok.len() as f64)
        };
        let _ = if ok.is_empty() {
            write!(out, "{method},mean,failed,,")
        } else {
            write!(out, "{method},mean,ok,{},{}", mean(|m| m.macro_f1), mean(|m| m.auc))
        };
        if timing {
            let total: f64 = cells.iter().map(|r| r.runtime.as_secs_f64()).sum();
            let _ = write!(out, ",{}", f(total / cells.len().max(1) as f64));
        }
        out.push('\n');
    }
    out
}

/// Long format `method,seed,metric,value` for plotting.
pub fn plot_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,seed,metric,value\n");
    for r in rows {
        if let Ok(m) = &r.outcome {
            let _ = writeln!(out, "{},{},macro_f1,{}", r.method, r.seed, format_sig(m.macro_f1, 9));
            let _ = writeln!(out, "{},{},auc,{}", r.method, r.seed, format_sig(m.auc, 9));
        }
    }
    out
}

pub fn cmd_compare(config: &RunConfig) -> Result<Vec<ComparisonRow>> {
    let pair = load_pair(config)?;
    if pair.target_labels.is_none() {
        return Err(CliError::Invalid("compare needs held-out target labels".into()));
    }
    let rows = compare(
        &config.methods,
        &config.seeds,
        &pair,
        &config.train,
        &config.baseline,
        config.contamination,
    )?;
    let scores_dir = config.out.join("scores");
    create_dir(&scores_dir)?;
    for r in &rows {
        match &r.outcome {
            Ok(m) => write_scores_csv(
                scores_dir.join(format!("{}_seed{}.csv", slug(r.method), r.seed)),
                &m.scores,
                &m.predictions,
            )?,
            Err(e) => eprintln!("{} seed {} failed: {e}", r.method, r.seed),
        }
    }
    write(&config.out.join("results.csv"), &results_csv(&rows, &config.methods, config.timing))?;
    write(&config.out.join("plot.csv"), &plot_csv(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use contextda::baselines::MethodResult;
    use contextda::inference::{PredictionSeries, ScoreSeries};

    use super::*;

    fn row(method: Method, seed: u64, value: Option<f64>) -> ComparisonRow {
        ComparisonRow {
            method,
            seed,
            outcome: value
                .map(|v| MethodResult {
                    scores: ScoreSeries { scores: vec![], windows: vec![] },
                    predictions: PredictionSeries { predictions: vec![], threshold: 0.0 },
                    macro_f1: v,
                    auc: v,
                })
                .ok_or_else(|| "boom".to_string()),
            runtime: Duration::from_millis(500),
        }
    }

    #[test]
    fn two_methods_three_seeds() {
        let methods = [Method::Rdc, Method::AeMlp];
        let rows: Vec<_> = methods
            .iter()
            .flat_map(|&m| (0..3).map(move |s| row(m, s, Some(0.5 + s as f64 / 10.0))))
            .collect();
        let csv = results_csv(&rows, &methods, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,seed,status,macro_f1,auc");
        assert_eq!(lines.len(), 1 + 6 + 2);
        assert_eq!(lines[7], "RDC,mean,ok,0.6,0.6");
    }

    #[test]
    fn failed_cell_is_marked() {
        let methods = [Method::Rdc];
        let rows = vec![row(Method::Rdc, 0, None), row(Method::Rdc, 1, Some(0.25))];
        let csv = results_csv(&rows, &methods, true);
        assert!(csv.starts_with("method,seed,status,macro_f1,auc,runtime_s\n"));
        assert!(csv.contains("RDC,0,failed,,,0.5\n"));
        assert!(csv.contains("RDC,mean,ok,0.25,0.25,0.5\n"));
        assert_eq!(plot_csv(&rows).lines().count(), 3);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug(Method::AeLstm), "ae_lstm");
        assert_eq!(slug(Method::RdcVrada), "rdc_vrada");
        assert_eq!(slug(Method::ContexTda), "contextda");
    }
}
