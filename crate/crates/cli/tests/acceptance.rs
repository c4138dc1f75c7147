//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed; exits nonzero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use contextda::agent::{Agent, AgentConfig, QNetwork, Transition};
use contextda::baselines::{compare, training_config, BaselineOptions, Method};
use contextda::data::TimeSeries;
use contextda::detector::losses::{loss_align, loss_cls, loss_disc, loss_recon};
use contextda::detector::{ClassWeights, Coefficients, DetectorBundle, DetectorConfig, Domain, LossBreakdown, WindowPair};
use contextda::env::{compute_reward, EnvAction};
use contextda::inference::threshold_scores;
use contextda::metrics::{auc, macro_f1};
use contextda::nn::{check_gradients, GradCheckConfig, ParameterSet};
use contextda::synthetic::{generate_synthetic, SyntheticSpec};
use contextda::trainer::{train, Architecture, Policy, TrainConfig};
use contextda::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

/// Name, check and time budget in seconds.
type Criterion = (&'static str, fn() -> Check, Option<u64>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Option<Duration>) -> Result<(), String> {
    match budget {
        Some(b) if elapsed > b => Err(format!("took {:.1}s, budget {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64())),
        _ => Ok(()),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn clamp(p: f64) -> f64 {
    p.clamp(1e-7, 1.0 - 1e-7)
}

fn weighted_bce(p: f64, y: u8, w: f64) -> f64 {
    let p = clamp(p);
    -w * (y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn tiny_detector(source_dim: usize, target_dim: usize) -> DetectorConfig {
    DetectorConfig {
        source_dim,
        target_dim,
        encoder_hidden: vec![4, 3],
        decoder_hidden: vec![3, 4],
        head_hidden: vec![4, 4],
        dropout: 0.2,
        discriminator: true,
    }
}

fn c1_loss_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bundle = DetectorBundle::new(tiny_detector(3, 3), 7).unwrap();
    let mut compared = 0;
    for b in 0..100 {
        let n = rng.gen_range(1..=8);
        // loss functions against direct formulas, probabilities reaching into the clamp
        let probs: Vec<f64> = (0..n)
            .map(|_| match rng.gen_range(0..5) {
                0 => rng.gen_range(0.0..1e-7),
                1 => 1.0 - rng.gen_range(0.0..1e-7),
                _ => rng.gen_range(0.0..1.0),
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let weights = ClassWeights::new(rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0)).unwrap();
        let want: f64 = probs.iter().zip(&labels).map(|(&p, &y)| weighted_bce(p, y, weights.for_label(y))).sum();
        let got = loss_cls(&probs, &labels, &weights).unwrap();
        ensure(close(got, want), || format!("batch {b}: L_cls {got} vs {want}"))?;
        let want: f64 = probs.iter().zip(&labels).map(|(&p, &y)| weighted_bce(p, y, 1.0)).sum();
        let got = loss_disc(&probs, &labels).unwrap();
        ensure(close(got, want), || format!("batch {b}: L_disc {got} vs {want}"))?;

        let m = rng.gen_range(1..=5);
        let xs: Vec<Matrix> = (0..n).map(|_| random_matrix(&mut rng, m, 3)).collect();
        let ys: Vec<Matrix> = (0..n).map(|_| random_matrix(&mut rng, m, 3)).collect();
        let pairs: Vec<(&Matrix, &Matrix)> = xs.iter().zip(&ys).collect();
        let want: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        let got = loss_recon(&pairs).unwrap();
        ensure(close(got, want), || format!("batch {b}: L_recon {got} vs {want}"))?;
        let zs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let zt: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let want: f64 = zs
            .iter()
            .zip(&zt)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        let got = loss_align(&zs, &zt).unwrap();
        ensure(close(got, want), || format!("batch {b}: L_align {got} vs {want}"))?;

        // the detector's breakdown against the same oracles built from its forward passes
        let batch: Vec<WindowPair> = (0..n)
            .map(|i| {
                let (ms, mt) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
                WindowPair {
                    source: random_matrix(&mut rng, ms, 3),
                    source_label: labels[i],
                    target: random_matrix(&mut rng, mt, 3),
                }
            })
            .collect();
        let got = bundle.evaluate_losses(&batch, &weights).unwrap();
        let mut want = LossBreakdown::default();
        for p in &batch {
            let z_s = bundle.encode(&p.source, Domain::Source).unwrap();
            let z_t = bundle.encode(&p.target, Domain::Target).unwrap();
            let sq = |a: &Matrix, b: &Matrix| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            if p.source_label == 0 {
                want.recon += sq(&p.source, &bundle.reconstruct(&z_s, p.source.rows(), Domain::Source).unwrap());
            }
            want.recon += sq(&p.target, &bundle.reconstruct(&z_t, p.target.rows(), Domain::Target).unwrap());
            want.align += z_s.iter().zip(&z_t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            want.cls += weighted_bce(bundle.classify(&z_s).unwrap(), p.source_label, weights.for_label(p.source_label));
            want.disc += weighted_bce(bundle.discriminate(&z_s).unwrap().unwrap(), 0, 1.0)
                + weighted_bce(bundle.discriminate(&z_t).unwrap().unwrap(), 1, 1.0);
        }
        for (name, g, w) in [
            ("cls", got.cls, want.cls),
            ("recon", got.recon, want.recon),
            ("align", got.align, want.align),
            ("disc", got.disc, want.disc),
        ] {
            ensure(close(g, w), || format!("batch {b}: detector {name} {g} vs {w}"))?;
        }
        compared += 8;
    }
    Ok(format!("100 batches, {compared} loss values within 1e-12"))
}

fn randomize_biases(params: &mut ParameterSet, rng: &mut ChaCha8Rng) {
    // zero biases put whole ReLU layers exactly on their kink
    for p in params.iter_mut().filter(|p| p.name.ends_with("bias")) {
        p.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
}

fn c2_gradients() -> Check {
    let config = GradCheckConfig::default();
    let (mut checked, mut kinks, mut worst) = (0, 0, 0.0f64);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for (ds, dt) in [(2, 2), (3, 2)] {
            let mut bundle = DetectorBundle::new(tiny_detector(ds, dt), seed).unwrap();
            randomize_biases(bundle.params_mut(), &mut rng);
            let batch: Vec<WindowPair> = (0..3)
                .map(|i| {
                    let (m, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
                    WindowPair {
                        source: random_matrix(&mut rng, m, ds),
                        source_label: (i % 2) as u8,
                        target: random_matrix(&mut rng, n, dt),
                    }
                })
                .collect();
            let coeffs = Coefficients {
                alpha: rng.gen_range(0.1..2.0),
                beta: rng.gen_range(0.1..2.0),
                gamma: rng.gen_range(0.1..2.0),
                lambda: rng.gen_range(0.1..2.0),
            };
            let weights = ClassWeights::new(1.7, 0.6).unwrap();
            let objective = |b: &DetectorBundle| {
                let none: Option<&mut ChaCha8Rng> = None;
                b.objective_gradients(&batch, &coeffs, &weights, none)
            };
            let (_, grads) = objective(&bundle).map_err(|e| e.to_string())?;
            let r = check_gradients(&mut bundle, |b| b.params_mut(), &grads, &config, |b| objective(b).map(|r| r.0))
                .map_err(|e| format!("detector seed {seed} dims ({ds},{dt}): {e}"))?;
            checked += r.checked;
            kinks += r.kinks;
            worst = worst.max(r.worst);
        }

        let mut q = QNetwork::new(6, &[4, 4], 4, seed).unwrap();
        randomize_biases(q.params_mut(), &mut rng);
        let states: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let samples: Vec<(&[f64], usize, f64)> = states
            .iter()
            .map(|s| (s.as_slice(), rng.gen_range(0..4), rng.gen_range(-1.0..2.0)))
            .collect();
        let (_, grads) = q.td_loss_gradients(&samples).map_err(|e| e.to_string())?;
        let r = check_gradients(&mut q, |q| q.params_mut(), &grads, &config, |q| q.td_loss_gradients(&samples).map(|r| r.0))
            .map_err(|e| format!("Q-network seed {seed}: {e}"))?;
        checked += r.checked;
        kinks += r.kinks;
        worst = worst.max(r.worst);
    }
    ensure(kinks * 100 <= checked, || format!("{kinks} kink entries out of {checked}"))?;
    Ok(format!(
        "encoder, decoder, classifier, discriminator, Q-network; 20 seeds; {checked} entries, worst rel err {worst:.2e}, {kinks} ReLU-kink entries"
    ))
}

fn c3_reward() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut clamped = 0;
    let mut monotone = 0;
    for i in 0..1000 {
        let c = Coefficients {
            alpha: rng.gen_range(0.0..3.0),
            beta: rng.gen_range(0.0..3.0),
            gamma: rng.gen_range(0.0..3.0),
            lambda: rng.gen_range(0.0..3.0),
        };
        let l = LossBreakdown {
            cls: rng.gen_range(0.0..4.0),
            recon: rng.gen_range(0.0..4.0),
            align: rng.gen_range(0.0..4.0),
            disc: rng.gen_range(0.0..4.0),
        };
        let denom = c.alpha * l.cls + c.beta * l.recon + c.gamma * l.align - c.lambda * l.disc;
        let r = compute_reward(&l, &c);
        ensure(r == 1.0 / denom.max(1e-6), || format!("tuple {i}: {r} vs denominator {denom}"))?;
        if denom <= 1e-6 {
            clamped += 1;
            ensure(r == 1e6, || format!("tuple {i}: clamped reward {r}"))?;
            continue;
        }
        let d = rng.gen_range(1e-3..0.5);
        for (name, worse) in [
            ("cls", LossBreakdown { cls: l.cls + d, ..l }),
            ("recon", LossBreakdown { recon: l.recon + d, ..l }),
            ("align", LossBreakdown { align: l.align + d, ..l }),
        ] {
            ensure(compute_reward(&worse, &c) <= r, || format!("tuple {i}: raising {name} raised the reward"))?;
        }
        ensure(compute_reward(&LossBreakdown { disc: l.disc + d, ..l }, &c) >= r, || {
            format!("tuple {i}: raising disc lowered the reward")
        })?;
        monotone += 1;
    }
    ensure(clamped > 0, || "no clamped tuples drawn".into())?;
    Ok(format!("1000 tuples exact ({clamped} clamped), monotone on {monotone} unclamped"))
}

fn c4_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut zero_den = 0;
    for i in 0..200 {
        let n = rng.gen_range(2..=200);
        let levels = rng.gen_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let (mut credit2, mut pairs) = (0u64, 0u64);
        for a in (0..n).filter(|&k| labels[k] == 1) {
            for b in (0..n).filter(|&k| labels[k] == 0) {
                pairs += 1;
                credit2 += match scores[a].partial_cmp(&scores[b]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        let want = credit2 as f64 / (2 * pairs) as f64;
        let got = auc(&scores, &labels).unwrap();
        ensure(got == want, || format!("instance {i}: auc {got} vs {want}"))?;

        let p_one = [0.0, 0.1, 0.5, 1.0][i % 4];
        let preds: Vec<u8> = (0..n).map(|_| rng.gen_bool(p_one) as u8).collect();
        let mut lab = labels.clone();
        if i % 7 == 0 {
            lab.iter_mut().for_each(|l| *l = 0);
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (p, l) in preds.iter().zip(&lab) {
            match (p, l) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                _ => fn_ += 1,
            }
        }
        zero_den += (tp + fp + fn_ == 0) as usize + (tn + fn_ + fp == 0) as usize;
        let f1 = |tp: u64, fp: u64, fn_: u64| {
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        };
        let want = (f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0;
        let got = macro_f1(&preds, &lab).unwrap();
        ensure(got == want, || format!("instance {i}: macro_f1 {got} vs {want}"))?;
    }
    ensure(zero_den > 0, || "no zero-denominator class drawn".into())?;
    Ok(format!("200 instances exact, {zero_den} zero-denominator classes"))
}

fn dqn_config(discount: f64) -> AgentConfig {
    AgentConfig {
        epsilon: 1.0,
        discount,
        batch_size: 32,
        buffer_capacity: 10_000,
        sync_period: 100,
        inner_steps: 1,
        learning_rate: 1e-3,
        hidden: vec![16, 16],
    }
}

fn c5_dqn() -> Check {
    let rewards = [1.0, 0.2];
    let state = vec![1.0, 0.0];
    let mut agent = Agent::new(2, 2, dqn_config(0.0), 11).unwrap();
    for _ in 0..3000 {
        let a = agent.act(&state).unwrap();
        agent.remember(Transition {
            state: state.clone(),
            action: a,
            next_state: state.clone(),
            reward: rewards[a],
            terminal: false,
        });
        agent.learn().unwrap();
    }
    let bandit = agent.q.q_values(&state).unwrap();
    for (got, want) in bandit.iter().zip(rewards) {
        ensure((got - want).abs() <= 0.05, || format!("bandit Q {bandit:?}"))?;
    }

    let discount = 0.95;
    let states = [vec![1.0, 0.0], vec![0.0, 1.0]];
    let mut agent = Agent::new(2, 2, dqn_config(discount), 5).unwrap();
    let mut s = 0;
    for _ in 0..5000 {
        let a = agent.act(&states[s]).unwrap();
        let (next, reward, terminal) = match (s, a) {
            (0, 0) => (1, 0.0, false),
            (0, _) => (0, 0.5, true),
            (_, 0) => (0, 1.0, true),
            _ => (0, 0.2, true),
        };
        agent.remember(Transition {
            state: states[s].clone(),
            action: a,
            next_state: states[next].clone(),
            reward,
            terminal,
        });
        agent.learn().unwrap();
        s = if terminal { 0 } else { next };
    }
    let expected = [[discount, 0.5], [1.0, 0.2]];
    let mut chain = Vec::new();
    for (st, want) in states.iter().zip(expected) {
        let q = agent.q.q_values(st).unwrap();
        for (got, w) in q.iter().zip(want) {
            ensure((got - w).abs() <= 0.05 * w, || format!("chain Q {q:?} vs {want:?}"))?;
        }
        chain.push(q);
    }
    Ok(format!(
        "bandit Q ({:.3}, {:.3}); chain Q ({:.3}, {:.3}), ({:.3}, {:.3})",
        bandit[0], bandit[1], chain[0][0], chain[0][1], chain[1][0], chain[1][1]
    ))
}

fn small_train_config() -> TrainConfig {
    let mut c = TrainConfig {
        epochs: 1,
        batch_size: 8,
        k_max: 10,
        architecture: Architecture {
            encoder_hidden: vec![8, 4],
            decoder_hidden: vec![4, 8],
            head_hidden: vec![8],
            dropout: 0.2,
        },
        reward: Coefficients { lambda: 0.1, ..Default::default() },
        ..Default::default()
    };
    c.agent.hidden = vec![16];
    c.agent.batch_size = 16;
    c
}

fn c6_equivalence() -> Check {
    // length 101 gives exactly 100 steps in one epoch
    let pair = generate_synthetic(&SyntheticSpec { length: 101, seed: 6, ..Default::default() }).unwrap().normalized();
    let mut report = Vec::new();
    for w in [1, 4, 10] {
        let base = small_train_config();
        let vrada = training_config(Method::RdcVrada, &base, &BaselineOptions { window: w }).unwrap();
        let forced = TrainConfig {
            policy: Policy::Constant(EnvAction { source: w, target: w }),
            ..base
        };
        ensure(forced.train_agent && vrada.discriminator, || "unexpected configs".into())?;
        let a = train(&pair, &vrada).map_err(|e| e.to_string())?;
        let b = train(&pair, &forced).map_err(|e| e.to_string())?;
        ensure(a.report.steps.len() == 100 && b.report.steps.len() == 100, || "expected 100 steps".into())?;
        let bits = |p: &ParameterSet| p.iter().flat_map(|p| p.values.iter().map(|v| v.to_bits())).collect::<Vec<u64>>();
        ensure(bits(a.detector.params()) == bits(b.detector.params()), || format!("window {w}: parameters differ"))?;
        report.push(w.to_string());
    }
    Ok(format!("bit-identical detector parameters after 100 steps for w in {{{}}}", report.join(", ")))
}

/// Desk-scale settings for the synthetic transfer experiment.
fn transfer_config() -> TrainConfig {
    let mut c = TrainConfig {
        epochs: 10,
        batch_size: 8,
        k_max: 10,
        learning_rate: 0.005,
        architecture: Architecture {
            encoder_hidden: vec![16, 8],
            decoder_hidden: vec![8, 16],
            head_hidden: vec![16, 16],
            dropout: 0.2,
        },
        reward: Coefficients { lambda: 0.1, ..Default::default() },
        ..Default::default()
    };
    c.agent.hidden = vec![32, 32];
    c.agent.batch_size = 32;
    c
}

fn c7_transfer() -> Check {
    let methods = [Method::ContexTda, Method::RandContexTda, Method::AeLstm];
    let config = transfer_config();
    let options = BaselineOptions { window: config.k_max };
    let mut sums = [(0.0, 0.0); 3];
    for seed in 0..5u64 {
        let pair = generate_synthetic(&SyntheticSpec { seed, ..Default::default() }).unwrap().normalized();
        let rows = compare(&methods, &[seed], &pair, &config, &options, 0.05).map_err(|e| e.to_string())?;
        for (i, row) in rows.iter().enumerate() {
            let m = row.outcome.as_ref().map_err(|e| format!("{} seed {seed}: {e}", row.method))?;
            sums[i].0 += m.auc / 5.0;
            sums[i].1 += m.macro_f1 / 5.0;
        }
    }
    let [ctx, rand, ae] = sums;
    let summary = format!(
        "mean AUC/F1: ContexTDA {:.4}/{:.4}, RandContexTDA {:.4}/{:.4}, AE-LSTM {:.4}/{:.4}",
        ctx.0, ctx.1, rand.0, rand.1, ae.0, ae.1
    );
    ensure(ctx.0 >= rand.0 && ctx.0 >= ae.0 && ctx.1 >= rand.1, || summary.clone())?;
    Ok(summary)
}

const CLI_CONFIG: &str = "\
synthetic.length = 80
train.epochs = 2
train.batch_size = 4
train.k_max = 5
train.encoder_hidden = 6,4
train.decoder_hidden = 4,6
train.head_hidden = 6
agent.hidden = 12
agent.batch_size = 8
reward.lambda = 0.1
seeds = 0,1
compare.window = 3
";

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_contextda"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn c8_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    fs::write(dir.join("run.cfg"), CLI_CONFIG).unwrap();
    let mut counted = 0;
    for cmd in ["train", "compare"] {
        for run in ["a", "b"] {
            cli(dir, &[cmd, "--config", "run.cfg", "--out", &format!("{cmd}_{run}")])?;
        }
        let a = csv_files(&dir.join(format!("{cmd}_a")));
        let b = csv_files(&dir.join(format!("{cmd}_b")));
        ensure(!a.is_empty(), || format!("{cmd} wrote no CSV"))?;
        ensure(a == b, || format!("{cmd} CSV outputs differ between reruns"))?;
        counted += a.len();
    }
    Ok(format!("train and compare reruns byte-identical ({counted} CSV files)"))
}

fn c9_edges() -> Check {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
    let s = TimeSeries::new("e", Matrix::from_rows(&rows).unwrap(), None).unwrap();
    let firsts = |t: usize, m: usize| -> Vec<f64> {
        let w = s.sample_window(t, m).unwrap().values;
        (0..w.rows()).map(|i| w.row(i)[0]).collect()
    };
    ensure(firsts(5, 3) == [3.0, 4.0, 5.0], || "t=5, m=3".into())?;
    ensure(firsts(0, 3) == [0.0, 0.0, 0.0], || "left padding at t=0".into())?;
    ensure(firsts(1, 4) == [0.0, 0.0, 0.0, 1.0], || "left padding at t=1".into())?;
    ensure(firsts(9, 1) == [9.0], || "unit window".into())?;
    ensure(firsts(9, 10) == (0..10).map(f64::from).collect::<Vec<_>>(), || "full window".into())?;
    ensure(s.sample_window(10, 1).is_err() && s.sample_window(3, 0).is_err(), || "window errors".into())?;

    let count = |p: &[u8]| p.iter().filter(|&&v| v == 1).count();
    for c in [0.01, 0.05, 0.3, 0.5] {
        let tied = threshold_scores(&[3.5; 40], c).unwrap();
        ensure(count(&tied.predictions) == 0, || format!("tied scores flagged at c={c}"))?;
    }
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    for (scores, c, want) in [(&hundred, 0.01, 1), (&hundred, 0.3, 30), (&ten, 0.01, 0), (&ten, 0.3, 3), (&ten, 0.1, 1)] {
        let p = threshold_scores(scores, c).unwrap();
        ensure(count(&p.predictions) == want, || format!("T={} c={c}: {} flagged", scores.len(), count(&p.predictions)))?;
        let top = scores.len() - want;
        ensure(p.predictions[top..].iter().all(|&v| v == 1), || format!("T={} c={c}: top not flagged", scores.len()))?;
    }
    let half = threshold_scores(&ten, 0.5).unwrap();
    ensure(ten.iter().zip(&half.predictions).all(|(s, &p)| (p == 1) == (*s > 5.5)), || "c=0.5 split".into())?;
    for bad in [0.0, -0.1, 0.51, f64::NAN] {
        ensure(threshold_scores(&ten, bad).is_err(), || format!("contamination {bad} accepted"))?;
    }
    Ok("padding, m=1, ties, contamination endpoints 0.01 and 0.3".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("loss oracles", c1_loss_oracles, Some(5)),
        ("gradient suite", c2_gradients, Some(60)),
        ("reward function", c3_reward, Some(1)),
        ("metric oracles", c4_metrics, Some(10)),
        ("DQN sanity", c5_dqn, Some(60)),
        ("code-path equivalence", c6_equivalence, None),
        ("synthetic transfer", c7_transfer, Some(15 * 60)),
        ("CLI determinism", c8_determinism, None),
        ("windowing and threshold edges", c9_edges, Some(5)),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            })
            .and_then(|detail| within_budget(started.elapsed(), budget.map(Duration::from_secs)).map(|_| detail));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name} [{secs:.1}s]: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
