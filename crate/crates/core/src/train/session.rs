//! Training runs driven by a config file, writing metrics, manifest and checkpoints.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::checkpoint::{load_checkpoint, model_digest, save_checkpoint};
use super::config::RunConfig;
use super::run::{evaluate, train_epochs, EpochMetrics, EvalReport, TrainOptions};
use super::sparsity::{sparsity_profile, SparsityReport};
use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::network::{init_weights, NetworkSpec};

/// Files written by [`run_training`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutputs {
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    /// `checkpoint-epoch-000.bin` holds the initialization.
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub log: Vec<EpochMetrics>,
}

pub const MANIFEST: &str = "manifest.txt";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_text(cfg: &RunConfig, net: &NetworkSpec, train: &DatasetHandle, test: &DatasetHandle) -> String {
    let mut s = String::from("# tsslbp run manifest; this file is itself a loadable config\n");
    let _ = writeln!(s, "# model digest: {}", hex(&model_digest(net)));
    let _ = writeln!(s, "# parameters: {}", net.parameter_count());
    for (name, d) in [("train", train), ("test", test)] {
        let _ = writeln!(
            s,
            "# {name} set: {} samples of {} from {}, subset seed {:?}, class counts {:?}",
            d.len(),
            d.shape,
            d.kind.name(),
            d.shuffle_seed,
            d.class_counts()
        );
    }
    for line in net.describe().lines() {
        let _ = writeln!(s, "# {line}");
    }
    s.push('\n');
    s.push_str(&cfg.to_text());
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains according to `cfg` and writes into `cfg.train.output_dir`:
/// `metrics.csv`, `manifest.txt` and one checkpoint per epoch.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    let mut net = cfg.network()?;
    init_weights(&mut net, cfg.train.seed, cfg.model.init);
    let train = cfg.load_train()?;
    let test = cfg.load_test()?;
    for d in [&train, &test] {
        if d.shape.size() != net.input.size() {
            return Err(Error::Config(format!(
                "dataset samples have shape {}, network input is {}",
                d.shape, net.input
            )));
        }
    }
    let target = cfg.target_spec(&net)?;
    let opts = TrainOptions {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.train.seed,
        optim: cfg.train.optim,
        backprop: cfg.backprop(),
        target,
        readout: cfg.target.readout,
        serial: cfg.train.serial,
    };

    let dir = &cfg.train.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST);
    write_file(&manifest, &manifest_text(cfg, &net, &train, &test))?;
    let metrics = dir.join("metrics.csv");
    let mut csv = File::create(&metrics).map_err(|e| Error::io(&metrics, e))?;
    writeln!(csv, "{}", EpochMetrics::CSV_HEADER).map_err(|e| Error::io(&metrics, e))?;

    let digest = model_digest(&net);
    let ckpt = |epoch: usize| dir.join(format!("checkpoint-epoch-{epoch:03}.bin"));
    let mut checkpoints = vec![ckpt(0)];
    save_checkpoint(&net, &digest, ckpt(0))?;
    let log = train_epochs(&mut net, &train, Some(&test), &opts, |m, net| {
        writeln!(csv, "{}", m.csv_line()).map_err(|e| Error::io(&metrics, e))?;
        csv.flush().map_err(|e| Error::io(&metrics, e))?;
        let path = ckpt(m.epoch);
        save_checkpoint(net, &digest, &path)?;
        checkpoints.push(path);
        Ok(())
    })?;
    let final_checkpoint = dir.join("checkpoint.bin");
    save_checkpoint(&net, &digest, &final_checkpoint)?;
    Ok(RunOutputs {
        metrics,
        manifest,
        checkpoints,
        final_checkpoint,
        log,
    })
}

/// The manifest written next to a checkpoint by [`run_training`].
pub fn manifest_for(checkpoint: &Path) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new("")).join(MANIFEST)
}

/// Rebuilds the network described by `cfg` and fills in checkpoint weights.
pub fn restore(cfg: &RunConfig, checkpoint: &Path) -> Result<NetworkSpec> {
    let mut net = cfg.network()?;
    let digest = model_digest(&net);
    load_checkpoint(checkpoint, &mut net, &digest)?;
    Ok(net)
}

/// Evaluates a checkpoint on `data`.
pub fn evaluate_checkpoint(cfg: &RunConfig, checkpoint: &Path, data: &DatasetHandle) -> Result<EvalReport> {
    let net = restore(cfg, checkpoint)?;
    evaluate(
        &net,
        data,
        &cfg.target_spec(&net)?,
        cfg.target.readout,
        cfg.train.serial,
    )
}

/// Firing-count profile of a checkpoint on the first `n_samples` of `data`.
pub fn profile_checkpoint(
    cfg: &RunConfig,
    checkpoint: &Path,
    data: &DatasetHandle,
    n_samples: usize,
) -> Result<SparsityReport> {
    sparsity_profile(&restore(cfg, checkpoint)?, data, n_samples)
}
