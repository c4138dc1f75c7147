use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
synthetic.length = 60
train.epochs = 2
train.batch_size = 4
train.k_max = 4
train.encoder_hidden = 4,3
train.decoder_hidden = 3,4
train.head_hidden = 4
agent.hidden = 8
agent.batch_size = 8
reward.lambda = 0.1
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contextda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), format!("{TINY}{extra}")).unwrap();
    dir
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn generate_writes_three_files_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "synthetic.length = 100\n").unwrap();
    let out = run(dir.path(), &["generate", "--config", "run.cfg", "--out", "a"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (file, header) in [
        ("source.csv", "f0,f1,f2,f3,f4,label"),
        ("target.csv", "f0,f1,f2,f3,f4"),
        ("target_labels.csv", "label"),
    ] {
        let text = read(&dir.path().join("a"), file);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], header);
        assert_eq!(lines.len(), 101, "{file}");
    }
    run(dir.path(), &["generate", "--config", "run.cfg", "--out", "b"]);
    for file in ["source.csv", "target.csv", "target_labels.csv"] {
        assert_eq!(read(&dir.path().join("a"), file), read(&dir.path().join("b"), file));
    }
}

#[test]
fn train_report_has_one_row_per_step() {
    let dir = setup("");
    let out = run(dir.path(), &["train", "--config", "run.cfg", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // E * (T - 1) rows plus the header
    assert_eq!(read(&dir.path().join("o"), "train_report.csv").lines().count(), 1 + 2 * 59);
    for f in ["manifest.txt", "detector.params", "q.params", "actions.csv"] {
        assert!(dir.path().join("o/checkpoint").join(f).exists(), "{f}");
    }
}

#[test]
fn zero_epochs_gives_empty_report_and_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), TINY.replace("train.epochs = 2", "train.epochs = 0")).unwrap();
    let out = run(dir.path(), &["train", "--config", "run.cfg", "--out", "o", "--checkpoint", "ck"]);
    assert!(out.status.success());
    assert_eq!(read(&dir.path().join("o"), "train_report.csv").lines().count(), 1);
    assert!(dir.path().join("ck/detector.params").exists());
}

#[test]
fn missing_source_labels_names_the_file() {
    let dir = setup("");
    fs::write(dir.path().join("s.csv"), "a,b\n1,2\n3,4\n5,6\n7,8\n9,1\n").unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "data.source = s.csv\ndata.target = s.csv\ntrain.k_max = 2\n",
    )
    .unwrap();
    let out = run(dir.path(), &["train", "--config", "run.cfg", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s.csv"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_fails_before_writing() {
    let dir = setup("train.epoch = 3\n");
    let out = run(dir.path(), &["compare", "--config", "run.cfg", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn evaluate_is_repeatable_and_reports_documented_keys() {
    let dir = setup("");
    assert!(run(dir.path(), &["train", "--config", "run.cfg", "--out", "o"]).status.success());
    let out = run(dir.path(), &["evaluate", "--config", "run.cfg", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = (read(&dir.path().join("o"), "scores.csv"), read(&dir.path().join("o"), "evaluate_summary.txt"));
    run(dir.path(), &["evaluate", "--config", "run.cfg", "--out", "o"]);
    let second = (read(&dir.path().join("o"), "scores.csv"), read(&dir.path().join("o"), "evaluate_summary.txt"));
    assert_eq!(first, second);
    let keys: Vec<&str> = first.1.lines().map(|l| l.split_once('=').unwrap().0).collect();
    assert_eq!(keys, ["macro_f1", "auc", "contamination", "seed"]);
    let scores = &first.0;
    assert!(scores.starts_with("t,window_n,score,prediction\n"));
    assert_eq!(scores.lines().count(), 61);
}

#[test]
fn evaluate_without_labels_marks_metrics_unavailable() {
    let dir = setup("");
    assert!(run(dir.path(), &["generate", "--config", "run.cfg", "--out", "g"]).status.success());
    fs::write(
        dir.path().join("files.cfg"),
        TINY.replace("synthetic.length = 60\n", "data.source = g/source.csv\ndata.target = g/target.csv\n"),
    )
    .unwrap();
    assert!(run(dir.path(), &["train", "--config", "files.cfg", "--out", "o"]).status.success());
    let out = run(dir.path(), &["evaluate", "--config", "files.cfg", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir.path().join("o"), "evaluate_summary.txt");
    assert!(summary.contains("macro_f1=unavailable\nauc=unavailable\n"), "{summary}");
    assert_eq!(read(&dir.path().join("o"), "scores.csv").lines().count(), 61);
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let dir = setup("");
    let out = run(dir.path(), &["evaluate", "--config", "run.cfg", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_two_methods_three_seeds() {
    let dir = setup("seeds = 0,1,2\ncompare.methods = RDC, AE-MLP\ncompare.window = 3\n");
    let out = run(dir.path(), &["compare", "--config", "run.cfg", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let results = read(&o, "results.csv");
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines[0], "method,seed,status,macro_f1,auc");
    assert_eq!(lines.len(), 1 + 6 + 2);
    assert!(lines[7].starts_with("RDC,mean,ok,"));
    assert!(lines[8].starts_with("AE-MLP,mean,ok,"));
    assert_eq!(read(&o, "plot.csv").lines().count(), 1 + 6 * 2);
    assert!(o.join("scores/rdc_seed2.csv").exists());
    assert!(o.join("scores/ae_mlp_seed0.csv").exists());
}

#[test]
fn seed_flag_overrides_seed_list() {
    let dir = setup("seeds = 0,1,2\ncompare.methods = AE-MLP\n");
    assert!(run(dir.path(), &["compare", "--config", "run.cfg", "--out", "o", "--seed", "5"]).status.success());
    let results = read(&dir.path().join("o"), "results.csv");
    assert_eq!(results.lines().nth(1).unwrap().split(',').nth(1), Some("5"));
    assert_eq!(results.lines().count(), 3);
}

#[test]
fn timing_column_is_opt_in() {
    let dir = setup("compare.methods = AE-MLP\ncompare.timing = true\n");
    assert!(run(dir.path(), &["compare", "--config", "run.cfg", "--out", "o"]).status.success());
    assert!(read(&dir.path().join("o"), "results.csv").starts_with("method,seed,status,macro_f1,auc,runtime_s\n"));
}
