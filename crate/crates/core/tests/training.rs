//! Training harness, persistence and command-line behaviour on tiny datasets.

use std::path::{Path, PathBuf};
use std::process::Command;

use tsslbp::backprop::BackpropConfig;
use tsslbp::data::DatasetHandle;
use tsslbp::loss::{Readout, TargetSpec};
use tsslbp::network::{init_weights, InitConfig, NetworkSpec};
use tsslbp::neuron::NeuronConfig;
use tsslbp::signal::Signal;
use tsslbp::train::checkpoint::{load_checkpoint, round_to_storage};
use tsslbp::train::{
    evaluate, model_digest, run_training, sample_gradient, train_epochs, OptimConfig, RunConfig, TrainOptions,
};
use tsslbp::Error;

fn idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0803u32, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = 0x0801u32.to_be_bytes().to_vec();
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Three classes of 4x4 images: a bright row, column or diagonal, with noise.
fn write_dataset(dir: &Path, prefix: &str, count: usize, seed: usize) {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..count {
        let class = i % 3;
        for r in 0..4 {
            for c in 0..4 {
                let on = match class {
                    0 => r == 1,
                    1 => c == 2,
                    _ => r == c,
                };
                let noise = ((i * 31 + r * 7 + c * 13 + seed) % 40) as u8;
                pixels.push(if on { 215 + noise } else { noise });
            }
        }
        labels.push(class as u8);
    }
    std::fs::write(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        idx_images(count, 4, 4, &pixels),
    )
    .unwrap();
    std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), idx_labels(&labels)).unwrap();
}

fn write_config(dir: &Path, epochs: usize, out: &str) -> PathBuf {
    write_dataset(dir, "train", 24, 0);
    write_dataset(dir, "t10k", 12, 5);
    let text = format!(
        "[model]
architecture = 4x4-12-3
n_steps = 5

[data]
format = idx
train_images = train-images-idx3-ubyte
train_labels = train-labels-idx1-ubyte
test_images = t10k-images-idx3-ubyte
test_labels = t10k-labels-idx1-ubyte

[train]
epochs = {epochs}
batch_size = 4
seed = 3
lr = 0.005
eps_slope = 0.125
dead_kappa = 2
serial = true
output_dir = {out}
"
    );
    let path = dir.join(format!("{out}.cfg"));
    std::fs::write(&path, text).unwrap();
    path
}

fn without_wall_clock(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(write_config(dir.path(), 0, "run0")).unwrap();
    let out = run_training(&cfg).unwrap();
    assert!(out.log.is_empty());
    let mut expected = cfg.network().unwrap();
    init_weights(&mut expected, cfg.train.seed, cfg.model.init);
    round_to_storage(&mut expected);
    let mut loaded = cfg.network().unwrap();
    let digest = model_digest(&loaded);
    load_checkpoint(&out.final_checkpoint, &mut loaded, &digest).unwrap();
    assert_eq!(loaded, expected);
    assert_eq!(
        std::fs::read(&out.checkpoints[0]).unwrap(),
        std::fs::read(&out.final_checkpoint).unwrap()
    );
}

#[test]
fn serial_runs_are_reproducible_and_parallel_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(write_config(dir.path(), 3, "a")).unwrap();
    let a = run_training(&cfg).unwrap();
    cfg.train.output_dir = dir.path().join("b");
    let b = run_training(&cfg).unwrap();
    cfg.train.output_dir = dir.path().join("c");
    cfg.train.serial = false;
    let c = run_training(&cfg).unwrap();

    let csv = |p: &Path| without_wall_clock(&std::fs::read_to_string(p).unwrap());
    assert_eq!(csv(&a.metrics), csv(&b.metrics));
    assert_eq!(csv(&a.metrics), csv(&c.metrics));
    assert_eq!(csv(&a.metrics).len(), 4);
    assert_eq!(csv(&a.metrics)[0], "epoch,train_loss,test_acc");
    for (x, y) in a
        .checkpoints
        .iter()
        .zip(&b.checkpoints)
        .chain(a.checkpoints.iter().zip(&c.checkpoints))
    {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let manifest = std::fs::read_to_string(&a.manifest).unwrap();
    assert!(manifest.contains("architecture = 4x4-12-3"));
    assert!(manifest.contains("# train set: 24 samples"));
}

fn toy_set() -> DatasetHandle {
    let inputs = (0..3)
        .map(|s| {
            Signal::from_vec(
                6,
                5,
                (0..30).map(|i| if (i / 5 + s) % 3 == 0 { 1.0 } else { 0.1 }).collect(),
            )
        })
        .collect();
    DatasetHandle::synthetic(inputs, vec![0, 1, 2], 3).unwrap()
}

#[test]
fn three_sample_memorization_loss_trends_down() {
    let data = toy_set();
    let mut net = NetworkSpec::from_arch("6-10-3", None, NeuronConfig::default(), 5).unwrap();
    init_weights(&mut net, 1, InitConfig::default());
    let opts = TrainOptions {
        epochs: 10,
        batch_size: 3,
        seed: 0,
        optim: OptimConfig {
            lr: 0.01,
            ..Default::default()
        },
        backprop: BackpropConfig {
            dead_kappa: 2.0,
            eps_slope: Some(0.125),
            ..Default::default()
        },
        target: TargetSpec::one_hot(3, 5, 3.0),
        readout: Readout::SummedPsc,
        serial: true,
    };
    let log = train_epochs(&mut net, &data, None, &opts, |_, _| Ok(())).unwrap();
    let losses: Vec<f64> = log.iter().map(|m| m.train_loss).collect();
    // Spike-count changes make the loss piecewise constant, so short plateaus are expected.
    assert!(losses.iter().all(|&l| l <= losses[0]), "{losses:?}");
    assert!(losses[9] < 0.7 * losses[0], "{losses:?}");
    let report = evaluate(&net, &data, &opts.target, opts.readout, true).unwrap();
    assert_eq!(report.correct, 3, "{losses:?}");
}

#[test]
fn evaluation_is_pure() {
    let data = toy_set();
    let mut net = NetworkSpec::from_arch("6-10-3", None, NeuronConfig::default(), 5).unwrap();
    init_weights(&mut net, 4, InitConfig::default());
    let before = net.clone();
    let target = TargetSpec::one_hot(3, 5, 3.0);
    let a = evaluate(&net, &data, &target, Readout::SummedPsc, true).unwrap();
    let b = evaluate(&net, &data, &target, Readout::SummedPsc, false).unwrap();
    assert_eq!(a, b);
    assert_eq!(net, before);
    assert_eq!(a.samples, 3);
}

#[test]
fn non_finite_loss_reports_its_origin() {
    let data = toy_set();
    let mut net = NetworkSpec::from_arch("6-4-3", None, NeuronConfig::default(), 5).unwrap();
    init_weights(&mut net, 4, InitConfig::default());
    net.layers[1].weights[2 * 4 + 1] = f64::NAN;
    let err = sample_gradient(
        &net,
        &data,
        0,
        &TargetSpec::one_hot(3, 5, 3.0),
        &BackpropConfig::default(),
    )
    .unwrap_err();
    match err {
        Error::NonFinite {
            what: "membrane potential",
            layer: 1,
            step: 0,
            neuron: 2,
        } => {}
        other => panic!("{other:?}"),
    }
}

fn cli(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tsslbp")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.success(), text)
}

#[test]
fn command_line_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2, "cli");
    let (ok, text) = cli(&["train", "--config", config.to_str().unwrap(), "--seed", "5", "--serial"]);
    assert!(ok, "{text}");
    assert!(text.contains("epoch   2"), "{text}");
    let ckpt = dir.path().join("cli/checkpoint.bin");
    let metrics = std::fs::read_to_string(dir.path().join("cli/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let (ok, text) = cli(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
    ]);
    assert!(ok, "{text}");
    assert!(text.contains("samples 12"), "{text}");

    let (ok, text) = cli(&["sparsity", "--checkpoint", ckpt.to_str().unwrap(), "--samples", "5"]);
    assert!(ok, "{text}");
    assert!(text.contains("samples: 5") && text.contains("layer 0 (12)"), "{text}");

    let mut tampered = std::fs::read(&ckpt).unwrap();
    tampered[14] ^= 0xff;
    let bad = dir.path().join("cli/tampered.bin");
    std::fs::write(&bad, tampered).unwrap();
    let (ok, text) = cli(&[
        "eval",
        "--checkpoint",
        bad.to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!ok);
    assert!(text.contains("digest"), "{text}");
}

#[test]
fn command_line_config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[model]\narchitecture = 4-2\nlearning_rate = 3\n").unwrap();
    let (ok, text) = cli(&["train", "--config", path.to_str().unwrap()]);
    assert!(!ok);
    assert!(text.contains("bad.cfg:3") && text.contains("learning_rate"), "{text}");
}

#[test]
fn command_line_arch_parse_and_gradcheck() {
    let (ok, text) = cli(&["arch-parse", "28x28-15C5-P2-40C5-P2-300-10"]);
    assert!(ok);
    assert!(text.contains("15x24x24") && text.contains("40x4x4 -> 300"), "{text}");
    let (ok, text) = cli(&["arch-parse", "28x28-15C5-Q2"]);
    assert!(!ok, "{text}");
    let (ok, text) = cli(&["gradcheck", "--case", "loss"]);
    assert!(ok, "{text}");
    assert!(text.starts_with("PASS loss"), "{text}");
}
