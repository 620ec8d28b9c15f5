//! Channel-major time series storage shared by the forward and backward passes.

use std::ops::{Index, IndexMut};

/// A real-valued series over `channels × steps`, stored channel-major so that
/// each channel's history is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    channels: usize,
    steps: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, steps: usize) -> Self {
        Self {
            channels,
            steps,
            data: vec![0.0; channels * steps],
        }
    }

    /// Wraps channel-major data. Panics if the length does not match.
    pub fn from_vec(channels: usize, steps: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            channels * steps,
            "signal data length does not match {channels}x{steps}"
        );
        Self { channels, steps, data }
    }

    /// Builds a signal from one row per channel.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let steps = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == steps), "ragged rows");
        Self {
            channels: rows.len(),
            steps,
            data: rows.concat(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.steps..(c + 1) * self.steps]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.steps..(c + 1) * self.steps]
    }

    /// Copies the values of every channel at step `t` into `out`.
    pub fn column_into(&self, t: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.data[c * self.steps + t];
        }
    }

    /// Writes `values` as the column at step `t`.
    pub fn set_column(&mut self, t: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.channels);
        for (c, v) in values.iter().enumerate() {
            self.data[c * self.steps + t] = *v;
        }
    }

    pub fn same_shape(&self, other: &Signal) -> bool {
        self.channels == other.channels && self.steps == other.steps
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Position of the first non-finite entry as `(channel, step)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.steps.max(1), i % self.steps.max(1)))
    }
}

impl Index<(usize, usize)> for Signal {
    type Output = f64;

    fn index(&self, (c, t): (usize, usize)) -> &f64 {
        &self.data[c * self.steps + t]
    }
}

impl IndexMut<(usize, usize)> for Signal {
    fn index_mut(&mut self, (c, t): (usize, usize)) -> &mut f64 {
        &mut self.data[c * self.steps + t]
    }
}
