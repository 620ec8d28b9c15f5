//! Discrete-time leaky integrate-and-fire neurons with a first-order synapse
//! and reset by subtraction.
//!
//! One step of a neuron, given the weighted input current `i[t]`:
//!
//! ```text
//! u[t] = (1 - 1/tau_m) * (u[t-1] - v_th * s[t-1]) + i[t]
//! s[t] = 1 if u[t] >= v_th else 0
//! a[t] = (1 - 1/tau_s) * a[t-1] + s[t]
//! ```
//!
//! `u[t]` is recorded before the reset, the reset is carried into the next
//! step. The synaptic input gain `1/tau_s` is folded into the weights, so a
//! single spike produces a PSC that starts at 1.

use crate::error::{Error, Result};
use crate::layers::LayerParams;
use crate::signal::Signal;

/// Constants of the LIF model. The simulation step is fixed at one time unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronConfig {
    /// Membrane time constant in steps, > 1.
    pub tau_m: f64,
    /// Synaptic time constant in steps, > 1.
    pub tau_s: f64,
    /// Firing threshold, > 0. Also the reset magnitude.
    pub v_th: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            tau_m: 5.0,
            tau_s: 3.0,
            v_th: 1.0,
        }
    }
}

impl NeuronConfig {
    pub fn new(tau_m: f64, tau_s: f64, v_th: f64) -> Result<Self> {
        let cfg = Self { tau_m, tau_s, v_th };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 1.0 && self.tau_m.is_finite()) {
            return Err(Error::Config(format!("tau_m must be > 1, got {}", self.tau_m)));
        }
        if !(self.tau_s > 1.0 && self.tau_s.is_finite()) {
            return Err(Error::Config(format!("tau_s must be > 1, got {}", self.tau_s)));
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Config(format!("v_th must be > 0, got {}", self.v_th)));
        }
        Ok(())
    }

    /// Per-step membrane retention `1 - 1/tau_m`.
    pub fn membrane_decay(&self) -> f64 {
        1.0 - 1.0 / self.tau_m
    }

    /// Per-step synaptic retention `1 - 1/tau_s`.
    pub fn synaptic_decay(&self) -> f64 {
        1.0 - 1.0 / self.tau_s
    }

    pub fn step_psc(&self, a_prev: f64, spike: u8) -> f64 {
        step_psc(a_prev, spike, self.tau_s)
    }

    pub fn step_membrane(&self, u_prev: f64, i_net: f64, fired_prev: u8) -> f64 {
        self.membrane_decay() * (u_prev - self.v_th * f64::from(fired_prev)) + i_net
    }

    pub fn fire(&self, u: f64) -> u8 {
        u8::from(u >= self.v_th)
    }
}

/// First-order synaptic filter step with time constant `tau`.
#[inline]
pub fn step_psc(a_prev: f64, spike: u8, tau: f64) -> f64 {
    (1.0 - 1.0 / tau) * a_prev + f64::from(spike)
}

/// Filters every channel of a binary raster through the first-order kernel.
pub fn filter_raster(raster: &SpikeRecord, tau: f64) -> Signal {
    let mut out = Signal::zeros(raster.neurons(), raster.steps());
    for n in 0..raster.neurons() {
        let row = raster.row(n);
        let dst = out.channel_mut(n);
        let mut a = 0.0;
        for (t, &s) in row.iter().enumerate() {
            a = step_psc(a, s, tau);
            dst[t] = a;
        }
    }
    out
}

/// Binary spike raster of a population together with per-neuron firing steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeRecord {
    neurons: usize,
    steps: usize,
    raster: Vec<u8>,
    firing_steps: Vec<Vec<usize>>,
}

impl SpikeRecord {
    pub fn silent(neurons: usize, steps: usize) -> Self {
        Self {
            neurons,
            steps,
            raster: vec![0; neurons * steps],
            firing_steps: vec![Vec::new(); neurons],
        }
    }

    /// Builds a record from a neuron-major binary raster. Any nonzero entry
    /// counts as a spike.
    pub fn from_raster(neurons: usize, steps: usize, raster: Vec<u8>) -> Self {
        assert_eq!(raster.len(), neurons * steps, "raster length mismatch");
        let raster: Vec<u8> = raster.into_iter().map(|v| u8::from(v != 0)).collect();
        let firing_steps = (0..neurons)
            .map(|n| {
                raster[n * steps..(n + 1) * steps]
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s == 1)
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        Self {
            neurons,
            steps,
            raster,
            firing_steps,
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let steps = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == steps), "ragged raster rows");
        Self::from_raster(rows.len(), steps, rows.concat())
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn raster(&self) -> &[u8] {
        &self.raster
    }

    pub fn row(&self, neuron: usize) -> &[u8] {
        &self.raster[neuron * self.steps..(neuron + 1) * self.steps]
    }

    pub fn get(&self, neuron: usize, t: usize) -> u8 {
        self.raster[neuron * self.steps + t]
    }

    pub fn firing_steps(&self, neuron: usize) -> &[usize] {
        &self.firing_steps[neuron]
    }

    pub fn spike_count(&self, neuron: usize) -> usize {
        self.firing_steps[neuron].len()
    }

    pub fn total_spikes(&self) -> usize {
        self.firing_steps.iter().map(Vec::len).sum()
    }

    fn push_spike(&mut self, neuron: usize, t: usize) {
        self.raster[neuron * self.steps + t] = 1;
        self.firing_steps[neuron].push(t);
    }

    /// Checks that `firing_steps` lists exactly the raster's ones, ascending.
    pub fn is_consistent(&self) -> bool {
        (0..self.neurons).all(|n| {
            let expected: Vec<usize> = self
                .row(n)
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == 1)
                .map(|(t, _)| t)
                .collect();
            self.raster.iter().all(|&v| v <= 1) && expected == self.firing_steps[n]
        })
    }
}

/// Borrowed view of one neuron's recorded state.
#[derive(Clone, Copy, Debug)]
pub struct NeuronTrace<'a> {
    /// Membrane potential before reset.
    pub u: &'a [f64],
    /// Unweighted PSC generated by the neuron's own spikes.
    pub a: &'a [f64],
    /// Weighted input current.
    pub i_net: &'a [f64],
}

/// Recorded state of a whole population.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub u: Signal,
    pub a: Signal,
    pub i_net: Signal,
}

impl LayerTrace {
    pub fn neuron(&self, n: usize) -> NeuronTrace<'_> {
        NeuronTrace {
            u: self.u.channel(n),
            a: self.a.channel(n),
            i_net: self.i_net.channel(n),
        }
    }

    pub fn neurons(&self) -> usize {
        self.u.channels()
    }

    pub fn steps(&self) -> usize {
        self.u.steps()
    }
}

/// Runs LIF dynamics for every neuron given its input current series.
pub fn simulate_neurons(i_net: Signal, cfg: &NeuronConfig) -> (LayerTrace, SpikeRecord) {
    let (neurons, steps) = (i_net.channels(), i_net.steps());
    let mut u = Signal::zeros(neurons, steps);
    let mut a = Signal::zeros(neurons, steps);
    let mut spikes = SpikeRecord::silent(neurons, steps);
    for n in 0..neurons {
        let input = i_net.channel(n);
        let (mut u_prev, mut a_prev, mut fired_prev) = (0.0, 0.0, 0u8);
        for t in 0..steps {
            let u_t = cfg.step_membrane(u_prev, input[t], fired_prev);
            let s_t = cfg.fire(u_t);
            let a_t = cfg.step_psc(a_prev, s_t);
            u[(n, t)] = u_t;
            a[(n, t)] = a_t;
            if s_t == 1 {
                spikes.push_spike(n, t);
            }
            (u_prev, a_prev, fired_prev) = (u_t, a_t, s_t);
        }
    }
    (LayerTrace { u, a, i_net }, spikes)
}

/// Drives a population through a weighted layer.
///
/// `incoming_psc` holds one PSC series per presynaptic channel. The layer's
/// linear map is applied at each step to form the input current.
pub fn simulate_layer(
    incoming_psc: &Signal,
    weights: &LayerParams,
    cfg: &NeuronConfig,
    n_steps: usize,
) -> Result<(LayerTrace, SpikeRecord)> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    if incoming_psc.steps() != n_steps {
        return Err(Error::Shape(format!(
            "input has {} steps, expected {n_steps}",
            incoming_psc.steps()
        )));
    }
    let i_net = weights.apply(incoming_psc)?;
    Ok(simulate_neurons(i_net, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Geometry, LayerParams};
    use proptest::prelude::*;

    fn cfg(tau_m: f64, tau_s: f64, v_th: f64) -> NeuronConfig {
        NeuronConfig::new(tau_m, tau_s, v_th).unwrap()
    }

    #[test]
    fn psc_recursion() {
        let c = cfg(5.0, 2.0, 1.0);
        assert_eq!(c.step_psc(0.0, 0), 0.0);
        let a0 = c.step_psc(0.0, 1);
        assert_eq!(a0, 1.0);
        assert_eq!(c.step_psc(a0, 0), 0.5);
        let c4 = cfg(5.0, 4.0, 1.0);
        assert!((c4.step_psc(0.8, 1) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn membrane_recursion() {
        let c = cfg(2.0, 3.0, 1.0);
        assert_eq!(c.step_membrane(0.0, 0.0, 0), 0.0);
        assert_eq!(c.step_membrane(1.0, 0.0, 0), 0.5);
        assert!((c.step_membrane(1.2, 0.3, 1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn threshold_equality_fires() {
        let c = NeuronConfig::default();
        assert_eq!(c.fire(c.v_th - 1e-9), 0);
        assert_eq!(c.fire(c.v_th), 1);
        assert_eq!(c.fire(2.0 * c.v_th), 1);
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(NeuronConfig::new(1.0, 3.0, 1.0).is_err());
        assert!(NeuronConfig::new(5.0, 0.5, 1.0).is_err());
        assert!(NeuronConfig::new(5.0, 3.0, 0.0).is_err());
    }

    fn dense(out: usize, inp: usize, w: Vec<f64>) -> LayerParams {
        LayerParams::dense(inp, out, w).unwrap()
    }

    #[test]
    fn zero_input_stays_silent() {
        let input = Signal::zeros(3, 6);
        let layer = dense(2, 3, vec![0.7; 6]);
        let (trace, spikes) = simulate_layer(&input, &layer, &NeuronConfig::default(), 6).unwrap();
        assert_eq!(spikes.total_spikes(), 0);
        assert!(trace.u.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_drive_fires_every_step() {
        let c = cfg(2.0, 3.0, 1.0);
        let input = Signal::from_rows(&[vec![1.0, 1.0]]);
        let layer = dense(1, 1, vec![1.2]);
        let (trace, spikes) = simulate_layer(&input, &layer, &c, 2).unwrap();
        assert!((trace.u[(0, 0)] - 1.2).abs() < 1e-15);
        assert!((trace.u[(0, 1)] - 1.3).abs() < 1e-15);
        assert_eq!(spikes.firing_steps(0), &[0, 1]);
    }

    #[test]
    fn weak_single_spike_never_fires() {
        let c = cfg(2.0, 2.0, 1.0);
        let steps = 20;
        let mut pre = SpikeRecord::silent(1, steps);
        pre.push_spike(0, 0);
        let psc = filter_raster(&pre, c.tau_s);
        let layer = dense(1, 1, vec![0.4]);
        let (trace, spikes) = simulate_layer(&psc, &layer, &c, steps).unwrap();
        assert_eq!(spikes.total_spikes(), 0);
        let peak = trace.u.channel(0).iter().cloned().fold(f64::MIN, f64::max);
        assert!((peak - 0.4).abs() < 1e-12, "peak {peak}");
    }

    #[test]
    fn mismatched_weights_are_a_config_error() {
        let input = Signal::zeros(3, 4);
        let layer = dense(2, 5, vec![0.0; 10]);
        assert!(simulate_layer(&input, &layer, &NeuronConfig::default(), 4).is_err());
        let layer = LayerParams::avg_pool(Geometry::new(1, 2, 2), 2).unwrap();
        assert!(simulate_layer(&input, &layer, &NeuronConfig::default(), 4).is_err());
    }

    proptest! {
        #[test]
        fn reset_is_carried_into_next_step(
            drive in prop::collection::vec(0.0f64..2.0, 2..30),
            tau_m in 1.5f64..10.0,
        ) {
            let c = cfg(tau_m, 3.0, 1.0);
            let steps = drive.len();
            let (trace, spikes) = simulate_neurons(Signal::from_vec(1, steps, drive.clone()), &c);
            prop_assert!(spikes.is_consistent());
            for t in 0..steps - 1 {
                let carried = trace.u[(0, t + 1)] - drive[t + 1];
                let expected = if spikes.get(0, t) == 1 {
                    c.membrane_decay() * (trace.u[(0, t)] - c.v_th)
                } else {
                    c.membrane_decay() * trace.u[(0, t)]
                };
                prop_assert!((carried - expected).abs() < 1e-12);
            }
        }

        #[test]
        fn psc_is_linear_in_spikes(
            a in prop::collection::vec(0u8..2, 1..25),
            b in prop::collection::vec(0u8..2, 1..25),
            tau_s in 1.5f64..8.0,
        ) {
            let n = a.len().min(b.len());
            let ra = SpikeRecord::from_raster(1, n, a[..n].to_vec());
            let rb = SpikeRecord::from_raster(1, n, b[..n].to_vec());
            let fa = filter_raster(&ra, tau_s);
            let fb = filter_raster(&rb, tau_s);
            // Sum of two rasters may hold a 2, so filter it directly.
            let mut acc = 0.0;
            for t in 0..n {
                acc = (1.0 - 1.0 / tau_s) * acc + f64::from(a[t] + b[t]);
                prop_assert!((acc - fa[(0, t)] - fb[(0, t)]).abs() < 1e-12);
                prop_assert!(fa[(0, t)] >= 0.0);
            }
        }

        #[test]
        fn deterministic_and_consistent(
            w in prop::collection::vec(-1.0f64..2.0, 6),
            x in prop::collection::vec(0.0f64..1.0, 3 * 8),
        ) {
            let input = Signal::from_vec(3, 8, x);
            let layer = dense(2, 3, w);
            let c = NeuronConfig::default();
            let first = simulate_layer(&input, &layer, &c, 8).unwrap();
            let second = simulate_layer(&input, &layer, &c, 8).unwrap();
            prop_assert!(first.1.is_consistent());
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn zero_weights_never_fire() {
        let input = Signal::from_vec(4, 10, vec![1.0; 40]);
        let layer = dense(3, 4, vec![0.0; 12]);
        let (_, spikes) = simulate_layer(&input, &layer, &NeuronConfig::default(), 10).unwrap();
        assert_eq!(spikes.total_spikes(), 0);
    }
}
