//! Firing-count histograms over inference runs.

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::network::{forward_network, NetworkSpec};
use crate::neuron::SpikeRecord;

/// Fraction of neurons firing `k` times in the window, for `k = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSparsity {
    pub layer: usize,
    pub neurons: usize,
    pub fractions: Vec<f64>,
}

/// Firing-count histograms averaged over samples, per spiking layer and
/// pooled over all spiking neurons.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub n_steps: usize,
    pub samples: usize,
    pub layers: Vec<LayerSparsity>,
    pub overall: Vec<f64>,
}

impl SparsityReport {
    pub fn silent_fraction(&self) -> f64 {
        self.overall[0]
    }

    pub fn render(&self) -> String {
        let mut out = format!("samples: {}\n", self.samples);
        let header: Vec<String> = (0..=self.n_steps).map(|k| format!("{k:>7}")).collect();
        out.push_str(&format!("{:<14}{}\n", "spikes", header.join("")));
        let row = |fr: &[f64]| fr.iter().map(|f| format!("{:>6.2}%", 100.0 * f)).collect::<String>();
        for l in &self.layers {
            out.push_str(&format!(
                "{:<14}{}\n",
                format!("layer {} ({})", l.layer, l.neurons),
                row(&l.fractions)
            ));
        }
        out.push_str(&format!("{:<14}{}\n", "all", row(&self.overall)));
        out
    }
}

fn count_histogram(spikes: &SpikeRecord, n_steps: usize, hist: &mut [usize]) {
    debug_assert_eq!(hist.len(), n_steps + 1);
    for n in 0..spikes.neurons() {
        hist[spikes.spike_count(n)] += 1;
    }
}

/// Runs inference on the first `n_samples` samples (all of them if fewer) and
/// averages the per-sample firing-count histograms.
pub fn sparsity_profile(net: &NetworkSpec, data: &DatasetHandle, n_samples: usize) -> Result<SparsityReport> {
    if n_samples == 0 {
        return Err(Error::Config("sparsity profile needs at least one sample".into()));
    }
    let samples = n_samples.min(data.len());
    if samples == 0 {
        return Err(Error::Config("dataset is empty".into()));
    }
    let t = net.n_steps;
    let spiking: Vec<usize> = (0..net.layers.len()).filter(|&i| net.layers[i].is_spiking()).collect();
    let mut layer_sums = vec![vec![0.0; t + 1]; spiking.len()];
    let mut overall_sum = vec![0.0; t + 1];
    for i in 0..samples {
        let record = forward_network(&data.sample(i, t)?.input_psc, net)?;
        let mut pooled = vec![0usize; t + 1];
        for (slot, &idx) in spiking.iter().enumerate() {
            let spikes = record.layers[idx].spikes().expect("spiking layer");
            let mut hist = vec![0usize; t + 1];
            count_histogram(spikes, t, &mut hist);
            let n = spikes.neurons() as f64;
            for k in 0..=t {
                layer_sums[slot][k] += hist[k] as f64 / n;
                pooled[k] += hist[k];
            }
        }
        let total: usize = pooled.iter().sum();
        for k in 0..=t {
            overall_sum[k] += pooled[k] as f64 / total as f64;
        }
    }
    let avg = |v: Vec<f64>| v.into_iter().map(|x| x / samples as f64).collect::<Vec<f64>>();
    Ok(SparsityReport {
        n_steps: t,
        samples,
        layers: spiking
            .iter()
            .zip(layer_sums)
            .map(|(&idx, sums)| LayerSparsity {
                layer: idx,
                neurons: net.layers[idx].output_size(),
                fractions: avg(sums),
            })
            .collect(),
        overall: avg(overall_sum),
    })
}
