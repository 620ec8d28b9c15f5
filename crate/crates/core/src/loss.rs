//! Target spike trains, the filtered squared-distance loss and class readout.

use crate::error::{Error, Result};
use crate::neuron::{filter_raster, SpikeRecord};
use crate::signal::Signal;

/// Desired output rasters per class plus the loss kernel constant.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub n_classes: usize,
    pub n_out: usize,
    pub n_steps: usize,
    /// `[class][neuron][step]`, flattened. Entries are 0 or 1.
    pattern: Vec<u8>,
    pub kernel_tau: f64,
}

impl TargetSpec {
    /// The true class's neuron fires at every step, all others stay silent.
    pub fn one_hot(n_classes: usize, n_steps: usize, kernel_tau: f64) -> Self {
        let mut pattern = vec![0u8; n_classes * n_classes * n_steps];
        for c in 0..n_classes {
            let base = (c * n_classes + c) * n_steps;
            pattern[base..base + n_steps].fill(1);
        }
        Self {
            n_classes,
            n_out: n_classes,
            n_steps,
            pattern,
            kernel_tau,
        }
    }

    /// A user-supplied table of rasters, one `[n_out][n_steps]` block per class.
    pub fn custom(n_classes: usize, n_out: usize, n_steps: usize, pattern: Vec<u8>, kernel_tau: f64) -> Result<Self> {
        if pattern.len() != n_classes * n_out * n_steps {
            return Err(Error::Shape(format!(
                "target pattern holds {} entries, expected {}x{}x{}",
                pattern.len(),
                n_classes,
                n_out,
                n_steps
            )));
        }
        if pattern.iter().any(|&v| v > 1) {
            return Err(Error::Config("target pattern entries must be 0 or 1".into()));
        }
        if !(kernel_tau > 1.0) {
            return Err(Error::Config(format!("kernel_tau must be > 1, got {kernel_tau}")));
        }
        Ok(Self {
            n_classes,
            n_out,
            n_steps,
            pattern,
            kernel_tau,
        })
    }

    pub fn pattern(&self) -> &[u8] {
        &self.pattern
    }

    /// Desired output raster for `label`.
    pub fn encode(&self, label: usize) -> Result<SpikeRecord> {
        if label >= self.n_classes {
            return Err(Error::LabelRange {
                label,
                n_classes: self.n_classes,
            });
        }
        let block = self.n_out * self.n_steps;
        Ok(SpikeRecord::from_raster(
            self.n_out,
            self.n_steps,
            self.pattern[label * block..(label + 1) * block].to_vec(),
        ))
    }

    /// Desired raster for `label`, filtered by the loss kernel.
    pub fn target_psc(&self, label: usize) -> Result<Signal> {
        Ok(filter_raster(&self.encode(label)?, self.kernel_tau))
    }
}

pub fn encode_target(label: usize, spec: &TargetSpec) -> Result<SpikeRecord> {
    spec.encode(label)
}

/// Loss value with its per-step and per-neuron breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub per_step: Vec<f64>,
    pub per_neuron: Vec<f64>,
}

/// Squared distance between two already-filtered spike trains.
pub fn filtered_distance(actual: &Signal, desired: &Signal) -> Result<LossReport> {
    if !actual.same_shape(desired) {
        return Err(Error::Shape(format!(
            "actual {}x{} vs desired {}x{}",
            actual.channels(),
            actual.steps(),
            desired.channels(),
            desired.steps()
        )));
    }
    let mut per_step = vec![0.0; actual.steps()];
    let mut per_neuron = vec![0.0; actual.channels()];
    for (n, total) in per_neuron.iter_mut().enumerate() {
        for (t, (a, d)) in actual.channel(n).iter().zip(desired.channel(n)).enumerate() {
            let e = 0.5 * (d - a) * (d - a);
            per_step[t] += e;
            *total += e;
        }
    }
    Ok(LossReport {
        total: per_step.iter().sum(),
        per_step,
        per_neuron,
    })
}

/// Van Rossum style loss: both rasters are filtered with the first-order
/// kernel of time constant `kernel_tau` and compared step by step.
pub fn van_rossum_loss(actual: &SpikeRecord, desired: &SpikeRecord, kernel_tau: f64) -> Result<LossReport> {
    if actual.neurons() != desired.neurons() || actual.steps() != desired.steps() {
        return Err(Error::Shape(format!(
            "actual raster {}x{} vs desired {}x{}",
            actual.neurons(),
            actual.steps(),
            desired.neurons(),
            desired.steps()
        )));
    }
    filtered_distance(&filter_raster(actual, kernel_tau), &filter_raster(desired, kernel_tau))
}

/// `dE[t]/da[t] = a[t] - d[t]` for every output neuron and step.
pub fn loss_psc_grad(actual: &Signal, desired: &Signal) -> Signal {
    let data = actual
        .as_slice()
        .iter()
        .zip(desired.as_slice())
        .map(|(a, d)| a - d)
        .collect();
    Signal::from_vec(actual.channels(), actual.steps(), data)
}

/// How output activity is scored for classification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Readout {
    #[default]
    SummedPsc,
    SpikeCount,
}

/// Index of the output neuron with the largest summed PSC. Ties go to the
/// lowest index.
pub fn classify(output_psc: &Signal) -> usize {
    argmax_first((0..output_psc.channels()).map(|n| output_psc.channel(n).iter().sum()))
}

/// Same rule over spike counts.
pub fn classify_by_count(spikes: &SpikeRecord) -> usize {
    argmax_first((0..spikes.neurons()).map(|n| spikes.spike_count(n) as f64))
}

fn argmax_first(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_pattern() {
        let spec = TargetSpec::one_hot(3, 5, 3.0);
        let r = spec.encode(0).unwrap();
        assert_eq!(r.row(0), &[1, 1, 1, 1, 1]);
        assert_eq!(r.row(1), &[0; 5]);
        assert_eq!(r.row(2), &[0; 5]);
        assert_ne!(spec.encode(1).unwrap(), r);
        assert!(matches!(spec.encode(3), Err(Error::LabelRange { .. })));
    }

    #[test]
    fn custom_pattern_validation() {
        assert!(TargetSpec::custom(2, 1, 3, vec![1, 0, 1, 0, 1, 0], 3.0).is_ok());
        assert!(TargetSpec::custom(2, 1, 3, vec![1, 0, 1], 3.0).is_err());
        assert!(TargetSpec::custom(1, 1, 3, vec![1, 2, 1], 3.0).is_err());
    }

    #[test]
    fn single_missed_spike() {
        let desired = SpikeRecord::from_rows(&[vec![1, 0, 0]]);
        let actual = SpikeRecord::silent(1, 3);
        let report = van_rossum_loss(&actual, &desired, 2.0).unwrap();
        assert!((report.total - 0.65625).abs() < 1e-15);
        assert_eq!(report.per_step, vec![0.5, 0.125, 0.03125]);
        assert_eq!(van_rossum_loss(&desired, &desired, 2.0).unwrap().total, 0.0);
        assert!(van_rossum_loss(&SpikeRecord::silent(2, 3), &desired, 2.0).is_err());
    }

    #[test]
    fn classify_ties_go_low() {
        let s = Signal::from_rows(&[vec![0.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0], vec![4.0, 0.0]]);
        assert_eq!(classify(&s), 1);
        assert_eq!(classify(&Signal::zeros(4, 3)), 0);
        let s = Signal::from_rows(&[vec![0.0], vec![0.0], vec![5.0]]);
        assert_eq!(classify(&s), 2);
        let r = SpikeRecord::from_rows(&[vec![1, 0], vec![1, 1], vec![1, 1]]);
        assert_eq!(classify_by_count(&r), 1);
    }

    proptest! {
        #[test]
        fn loss_is_symmetric_and_decomposes(
            a in prop::collection::vec(0u8..2, 12),
            d in prop::collection::vec(0u8..2, 12),
            tau in 1.5f64..6.0,
        ) {
            let ra = SpikeRecord::from_raster(2, 6, a);
            let rd = SpikeRecord::from_raster(2, 6, d);
            let fwd = van_rossum_loss(&ra, &rd, tau).unwrap();
            let back = van_rossum_loss(&rd, &ra, tau).unwrap();
            prop_assert_eq!(fwd.total, back.total);
            prop_assert!(fwd.total >= 0.0);
            prop_assert!((fwd.total - fwd.per_step.iter().sum::<f64>()).abs() <= 1e-9 * fwd.total.max(1e-300));
            prop_assert!((fwd.total - fwd.per_neuron.iter().sum::<f64>()).abs() <= 1e-9 * fwd.total.max(1e-12));
            prop_assert_eq!(fwd.total == 0.0, ra == rd);
        }

        #[test]
        fn classify_ignores_positive_scaling(
            x in prop::collection::vec(0.0f64..3.0, 15),
            k in 0.01f64..100.0,
        ) {
            let s = Signal::from_vec(5, 3, x.clone());
            let scaled = Signal::from_vec(5, 3, x.iter().map(|v| v * k).collect());
            prop_assert_eq!(classify(&s), classify(&scaled));
        }
    }
}
