//! Dataset ingestion, input encoding, batching and subset selection.

mod batch;
mod events;
mod idx;

pub use batch::make_batches;
pub use events::{bin_events, events_to_psc, load_event_dir, parse_aer, parse_text_events, Event, EventBinning};
pub use idx::{load_cifar_batch, load_idx, read_idx_images, read_idx_labels, IdxImages};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Geometry;
use crate::signal::Signal;

/// Where a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    IdxImages,
    CifarBinary,
    EventBins,
    Synthetic,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::IdxImages => "idx-images",
            SourceKind::CifarBinary => "cifar-binary",
            SourceKind::EventBins => "event-bins",
            SourceKind::Synthetic => "synthetic",
        }
    }
}

/// One stored input. Static images are encoded on demand for any window length.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    /// Normalized pixel intensities in `[0, 1]`.
    Static(Vec<f64>),
    /// A precomputed PSC series `[channels, n_steps]`.
    Psc(Signal),
}

/// An encoded input with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input_psc: Signal,
    pub label: usize,
}

/// An in-memory dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHandle {
    pub kind: SourceKind,
    pub shape: Geometry,
    pub n_classes: usize,
    /// Seed of the shuffle used to select this subset, if any.
    pub shuffle_seed: Option<u64>,
    inputs: Vec<Input>,
    labels: Vec<usize>,
}

impl DatasetHandle {
    pub fn new(
        kind: SourceKind,
        shape: Geometry,
        n_classes: usize,
        inputs: Vec<Input>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.len(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelRange { label, n_classes });
        }
        for input in &inputs {
            let (channels, finite) = match input {
                Input::Static(px) => (px.len(), px.iter().all(|v| v.is_finite())),
                Input::Psc(s) => (s.channels(), s.is_finite()),
            };
            if channels != shape.size() {
                return Err(Error::Shape(format!(
                    "input has {channels} channels, dataset shape is {shape}"
                )));
            }
            if !finite {
                return Err(Error::Shape("input contains non-finite values".into()));
            }
        }
        Ok(Self {
            kind,
            shape,
            n_classes,
            shuffle_seed: None,
            inputs,
            labels,
        })
    }

    /// A dataset of precomputed PSC series.
    pub fn synthetic(inputs: Vec<Signal>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let channels = inputs.first().map_or(0, Signal::channels);
        Self::new(
            SourceKind::Synthetic,
            Geometry::flat(channels),
            n_classes,
            inputs.into_iter().map(Input::Psc).collect(),
            labels,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, index: usize) -> &Input {
        &self.inputs[index]
    }

    /// Encodes sample `index` over a window of `n_steps`.
    pub fn sample(&self, index: usize, n_steps: usize) -> Result<Sample> {
        let input_psc = match &self.inputs[index] {
            Input::Static(px) => encode_static(px, n_steps),
            Input::Psc(s) if s.steps() == n_steps => s.clone(),
            Input::Psc(s) => {
                return Err(Error::Shape(format!(
                    "sample {index} spans {} steps, window is {n_steps}",
                    s.steps()
                )))
            }
        };
        Ok(Sample {
            input_psc,
            label: self.labels[index],
        })
    }

    /// The first `n` samples after a seeded shuffle. `n` larger than the
    /// dataset keeps every sample.
    pub fn subset(&self, n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(n);
        Self {
            kind: self.kind,
            shape: self.shape,
            n_classes: self.n_classes,
            shuffle_seed: Some(seed),
            inputs: order.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Constant-current encoding: every step carries the pixel value.
pub fn encode_static(pixels: &[f64], n_steps: usize) -> Signal {
    let mut data = Vec::with_capacity(pixels.len() * n_steps);
    for &p in pixels {
        data.extend(std::iter::repeat_n(p, n_steps));
    }
    Signal::from_vec(pixels.len(), n_steps, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_encoding() {
        let s = encode_static(&[0.0, 1.0, 0.5], 5);
        assert_eq!(s.channel(0), &[0.0; 5]);
        assert_eq!(s.channel(1), &[1.0; 5]);
        assert_eq!(s.channel(2), &[0.5; 5]);
    }

    fn toy(n: usize) -> DatasetHandle {
        let inputs = (0..n).map(|i| Input::Static(vec![i as f64 / n as f64])).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        DatasetHandle::new(SourceKind::Synthetic, Geometry::flat(1), 3, inputs, labels).unwrap()
    }

    #[test]
    fn subset_is_seeded_and_recorded() {
        let d = toy(20);
        let a = d.subset(5, 11);
        assert_eq!(a, d.subset(5, 11));
        assert_eq!(a.len(), 5);
        assert_eq!(a.shuffle_seed, Some(11));
        assert_ne!(a.labels(), d.subset(5, 12).labels());
        assert_eq!(d.subset(100, 1).len(), 20);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let err = DatasetHandle::new(
            SourceKind::Synthetic,
            Geometry::flat(1),
            2,
            vec![Input::Static(vec![0.0])],
            vec![2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::LabelRange { label: 2, n_classes: 2 }));
        let err = DatasetHandle::new(
            SourceKind::Synthetic,
            Geometry::flat(2),
            2,
            vec![Input::Static(vec![0.0])],
            vec![0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn psc_window_must_match() {
        let d = DatasetHandle::synthetic(vec![Signal::zeros(2, 4)], vec![0], 1).unwrap();
        assert!(d.sample(0, 4).is_ok());
        assert!(d.sample(0, 5).is_err());
    }
}
