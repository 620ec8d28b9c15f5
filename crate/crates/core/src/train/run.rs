//! Mini-batch training and evaluation loops.

use std::time::Instant;

use rayon::prelude::*;

use super::optim::{OptimConfig, OptimState};
use crate::backprop::{BackpropConfig, GradientSet};
use crate::data::{make_batches, DatasetHandle};
use crate::error::{Error, Result};
use crate::loss::{classify, classify_by_count, filtered_distance, Readout, TargetSpec};
use crate::network::{backward_network, forward_network, loss_output_psc, ForwardRecord, LayerRecord, NetworkSpec};

/// Settings of a training run that are not part of the network itself.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch batch shuffle.
    pub seed: u64,
    pub optim: OptimConfig,
    pub backprop: BackpropConfig,
    pub target: TargetSpec,
    pub readout: Readout,
    /// Process the samples of a batch one after another on the calling thread.
    pub serial: bool,
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub train_loss: f64,
    /// Test accuracy after the epoch, if a test set was given.
    pub test_acc: Option<f64>,
    pub wall_ms: u128,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,test_acc,wall_ms";

    pub fn csv_line(&self) -> String {
        let acc = self.test_acc.map_or(String::new(), |a| format!("{a:.6}"));
        format!("{},{:.9e},{acc},{}", self.epoch, self.train_loss, self.wall_ms)
    }
}

/// Locates the first non-finite potential or PSC in a forward record.
fn non_finite_site(record: &ForwardRecord) -> Option<(usize, usize, usize)> {
    for (idx, layer) in record.layers.iter().enumerate() {
        let found = match layer {
            LayerRecord::Spiking { trace, .. } => trace.u.first_non_finite().or_else(|| trace.a.first_non_finite()),
            LayerRecord::Pooled { psc } => psc.first_non_finite(),
        };
        if let Some((neuron, step)) = found {
            return Some((idx, step, neuron));
        }
    }
    None
}

/// Loss and weight gradient of one sample.
pub fn sample_gradient(
    net: &NetworkSpec,
    data: &DatasetHandle,
    index: usize,
    target: &TargetSpec,
    bp: &BackpropConfig,
) -> Result<(f64, GradientSet)> {
    let sample = data.sample(index, net.n_steps)?;
    let record = forward_network(&sample.input_psc, net)?;
    let target_psc = target.target_psc(sample.label)?;
    let out = loss_output_psc(&record, net, target.kernel_tau);
    let loss = filtered_distance(&out, &target_psc)?.total;
    // A NaN potential never crosses threshold, so it can hide behind a finite loss.
    if let Some((layer, step, neuron)) = non_finite_site(&record) {
        return Err(Error::NonFinite {
            what: "membrane potential",
            layer,
            step,
            neuron,
        });
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            layer: net.layers.len() - 1,
            step: 0,
            neuron: 0,
        });
    }
    let grads = backward_network(&record, &target_psc, target.kernel_tau, net, bp)?;
    Ok((loss, grads))
}

/// Summed loss and mean gradient over a batch. Per-sample results are reduced
/// in index order, so serial and parallel evaluation agree bit for bit.
pub fn batch_gradient(
    net: &NetworkSpec,
    data: &DatasetHandle,
    indices: &[usize],
    target: &TargetSpec,
    bp: &BackpropConfig,
    serial: bool,
) -> Result<(f64, GradientSet)> {
    let per_sample: Vec<Result<(f64, GradientSet)>> = if serial {
        indices
            .iter()
            .map(|&i| sample_gradient(net, data, i, target, bp))
            .collect()
    } else {
        indices
            .par_iter()
            .map(|&i| sample_gradient(net, data, i, target, bp))
            .collect()
    };
    let mut total = GradientSet::zeros_like(&net.layers);
    let mut loss = 0.0;
    for r in per_sample {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    if !indices.is_empty() {
        total.scale(1.0 / indices.len() as f64);
    }
    Ok((loss, total))
}

/// Trains `net` in place. `on_epoch` sees each epoch's metrics and the
/// weights after it, and may abort the run by returning an error.
pub fn train_epochs(
    net: &mut NetworkSpec,
    train: &DatasetHandle,
    test: Option<&DatasetHandle>,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochMetrics, &NetworkSpec) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if opts.target.n_out != net.output_size() || opts.target.n_steps != net.n_steps {
        return Err(Error::Config(format!(
            "target rasters are {}x{}, network output is {}x{}",
            opts.target.n_out,
            opts.target.n_steps,
            net.output_size(),
            net.n_steps
        )));
    }
    let mut state = OptimState::new(opts.optim, &net.layers);
    let mut log = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for batch in make_batches(train.len(), opts.batch_size, opts.seed, epoch as u64) {
            let (loss, grads) = batch_gradient(net, train, &batch, &opts.target, &opts.backprop, opts.serial)?;
            loss_sum += loss;
            state.apply(&grads, &mut net.layers)?;
        }
        let test_acc = match test {
            Some(t) => Some(evaluate(net, t, &opts.target, opts.readout, opts.serial)?.accuracy),
            None => None,
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len().max(1) as f64,
            test_acc,
            wall_ms: start.elapsed().as_millis(),
        };
        on_epoch(&metrics, net)?;
        log.push(metrics);
    }
    Ok(log)
}

/// Accuracy and loss of a network over a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub total_loss: f64,
    pub mean_loss: f64,
}

/// Classifies every sample. Never modifies the network.
pub fn evaluate(
    net: &NetworkSpec,
    data: &DatasetHandle,
    target: &TargetSpec,
    readout: Readout,
    serial: bool,
) -> Result<EvalReport> {
    if data.shape.size() != net.input.size() {
        return Err(Error::ArchitectureMismatch(format!(
            "network expects {} inputs, dataset provides {}",
            net.input.size(),
            data.shape.size()
        )));
    }
    let one = |i: usize| -> Result<(bool, f64)> {
        let sample = data.sample(i, net.n_steps)?;
        let record = forward_network(&sample.input_psc, net)?;
        let out = loss_output_psc(&record, net, target.kernel_tau);
        let predicted = match readout {
            Readout::SummedPsc => classify(&out),
            Readout::SpikeCount => classify_by_count(record.output_spikes()),
        };
        let loss = if sample.label < target.n_classes {
            filtered_distance(&out, &target.target_psc(sample.label)?)?.total
        } else {
            f64::NAN
        };
        Ok((predicted == sample.label, loss))
    };
    let results: Vec<Result<(bool, f64)>> = if serial {
        (0..data.len()).map(one).collect()
    } else {
        (0..data.len()).into_par_iter().map(one).collect()
    };
    let mut correct = 0;
    let mut total_loss = 0.0;
    for r in results {
        let (hit, loss) = r?;
        correct += usize::from(hit);
        total_loss += loss;
    }
    let n = data.len();
    Ok(EvalReport {
        samples: n,
        correct,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        total_loss,
        mean_loss: if n == 0 { 0.0 } else { total_loss / n as f64 },
    })
}
