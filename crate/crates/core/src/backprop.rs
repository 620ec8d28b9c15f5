//! Backward pass that routes error through firing times.
//!
//! A neuron's PSC at step `t_k` depends on its potential at an earlier step
//! `t_m` only if the neuron fired at `t_m`. The sensitivity
//! `phi(t_k, t_m) = d a[t_k] / d u[t_m]` has two parts:
//!
//! * inter-neuron: moving the spike at `t_m` shifts the onset of its PSC,
//!   `dpsc_dtm(t_k, t_m) * dt_m/du[t_m]` with `dt_m/du = -1 / (du/dt)`;
//! * intra-neuron: the reset at `t_m` changes the potential at the next spike
//!   `t_p`, which then moves `t_p`. This adds
//!   `phi(t_k, t_p) * d(reset)[t_p]/dt_m * dt_m/du[t_m]` when `t_m < t_p < t_k`.
//!
//! The backpropagated error of a layer is
//! `delta[t_m] = sum_{k >= m} phi(t_k, t_m) * dL/da[t_k]`, and weight
//! gradients are `sum_m delta[t_m] (x) a_pre[t_m]`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::layers::LayerParams;
use crate::neuron::{NeuronConfig, NeuronTrace};
use crate::signal::Signal;

/// Windows up to this length store phi densely.
pub const DENSE_PHI_MAX_STEPS: usize = 64;

/// Which effect of a firing-time shift on the PSC drives the inter-neuron term.
///
/// Moving a spike earlier adds a whole PSC onset to the steps it now covers
/// while letting the tail decay one step longer. `Onset` follows the first
/// effect: `d a[t_k]/d t_m = -exp(-(t_k - t_m)/tau_s) / tau_s`, so that higher
/// potential at a spike means more downstream current. `Decay` uses the
/// pointwise derivative of the continuous tail, the same magnitude with a
/// positive sign. Only `Onset` makes gradient descent reduce the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PscTiming {
    #[default]
    Onset,
    Decay,
}

impl PscTiming {
    pub fn sign(self) -> f64 {
        match self {
            PscTiming::Onset => -1.0,
            PscTiming::Decay => 1.0,
        }
    }
}

/// Knobs of the backward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackpropConfig {
    /// Lower clamp on the potential slope at a spike. `None` means
    /// `0.1 * v_th / tau_m` of the layer in question.
    pub eps_slope: Option<f64>,
    /// Gain of the surrogate sensitivity given to neurons that never fire
    /// during the window. Zero disables it.
    pub dead_kappa: f64,
    pub psc_timing: PscTiming,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        Self {
            eps_slope: None,
            dead_kappa: 0.0,
            psc_timing: PscTiming::Onset,
        }
    }
}

impl BackpropConfig {
    pub fn slope_floor(&self, cfg: &NeuronConfig) -> f64 {
        self.eps_slope.unwrap_or(0.1 * cfg.v_th / cfg.tau_m)
    }
}

/// Potential slope at a firing step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeSlope {
    /// `(-u + i_net) / tau_m` before clamping.
    pub raw: f64,
    /// Value actually used, at least the clamp floor.
    pub value: f64,
}

impl SpikeSlope {
    pub fn clamped(&self) -> bool {
        self.value != self.raw
    }
}

/// Slope `du/dt` of the continuous membrane equation at a firing step,
/// clamped from below at `floor`.
///
/// # Panics
/// If the neuron did not fire at `t_m`.
pub fn du_dt_at_spike(
    trace: &NeuronTrace<'_>,
    spikes: &[u8],
    t_m: usize,
    cfg: &NeuronConfig,
    floor: f64,
) -> SpikeSlope {
    assert!(spikes.get(t_m) == Some(&1), "du_dt_at_spike: no spike at step {t_m}");
    let raw = (-trace.u[t_m] + trace.i_net[t_m]) / cfg.tau_m;
    SpikeSlope {
        raw,
        value: raw.max(floor),
    }
}

/// Derivative of the continuous PSC tail at `t_k` with respect to the time
/// `t_m` of the spike that produced it. See [`PscTiming`] for how the backward
/// pass signs it.
pub fn dpsc_dtm(t_k: usize, t_m: usize, tau_s: f64) -> f64 {
    debug_assert!(t_m <= t_k);
    (-((t_k - t_m) as f64) / tau_s).exp() / tau_s
}

/// Derivative of the decaying reset at `t_p` with respect to the time `t_m`
/// of the spike that caused it.
pub fn dreset_dtm(t_p: usize, t_m: usize, cfg: &NeuronConfig) -> f64 {
    -(cfg.v_th / cfg.tau_m) * (-((t_p - t_m) as f64) / cfg.tau_m).exp()
}

#[derive(Clone, Debug, PartialEq)]
enum PhiStorage {
    /// Row-major `[t_k][t_m]`.
    Dense(Vec<f64>),
    /// Column `t_m` holds values for `t_k = t_m..steps`.
    Columns(BTreeMap<usize, Vec<f64>>),
}

/// Per-neuron sensitivities `phi(t_k, t_m)`, zero for `t_k < t_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiTable {
    steps: usize,
    storage: PhiStorage,
}

impl PhiTable {
    pub fn zeros(steps: usize) -> Self {
        let storage = if steps <= DENSE_PHI_MAX_STEPS {
            PhiStorage::Dense(vec![0.0; steps * steps])
        } else {
            PhiStorage::Columns(BTreeMap::new())
        };
        Self { steps, storage }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, PhiStorage::Dense(_))
    }

    pub fn get(&self, t_k: usize, t_m: usize) -> f64 {
        assert!(t_k < self.steps && t_m < self.steps, "phi index out of range");
        if t_k < t_m {
            return 0.0;
        }
        match &self.storage {
            PhiStorage::Dense(v) => v[t_k * self.steps + t_m],
            PhiStorage::Columns(cols) => cols.get(&t_m).map_or(0.0, |c| c[t_k - t_m]),
        }
    }

    /// Sets an entry. Panics on `t_k < t_m`.
    pub fn set(&mut self, t_k: usize, t_m: usize, value: f64) {
        assert!(t_k >= t_m && t_k < self.steps, "phi entry ({t_k}, {t_m}) is not causal");
        let steps = self.steps;
        match &mut self.storage {
            PhiStorage::Dense(v) => v[t_k * steps + t_m] = value,
            PhiStorage::Columns(cols) => {
                cols.entry(t_m).or_insert_with(|| vec![0.0; steps - t_m])[t_k - t_m] = value;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.storage {
            PhiStorage::Dense(v) => v.iter().all(|&x| x == 0.0),
            PhiStorage::Columns(cols) => cols.values().flatten().all(|&x| x == 0.0),
        }
    }

    /// `sum_{k >= m} phi(k, m) * g[k]` for every `m`.
    pub fn contract(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.steps);
        out.fill(0.0);
        match &self.storage {
            PhiStorage::Dense(v) => {
                for (k, &gk) in g.iter().enumerate() {
                    if gk == 0.0 {
                        continue;
                    }
                    let row = &v[k * self.steps..k * self.steps + k + 1];
                    for (o, p) in out.iter_mut().zip(row) {
                        *o += p * gk;
                    }
                }
            }
            PhiStorage::Columns(cols) => {
                for (&m, col) in cols {
                    out[m] = col.iter().zip(&g[m..]).map(|(p, gk)| p * gk).sum();
                }
            }
        }
    }
}

fn logistic_slope(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 - s)
}

/// Fills the phi table of one neuron from its trace and spike raster.
///
/// Columns are filled from the last spike backwards so that the column of
/// the next spike is complete when an earlier spike chains onto it.
pub fn build_phi(
    trace: &NeuronTrace<'_>,
    spikes: &[u8],
    cfg: &NeuronConfig,
    bp: &BackpropConfig,
    n_steps: usize,
) -> PhiTable {
    assert!(
        trace.u.len() == n_steps && spikes.len() == n_steps,
        "trace and raster must span n_steps"
    );
    let mut phi = PhiTable::zeros(n_steps);
    let floor = bp.slope_floor(cfg);
    let firing: Vec<usize> = (0..n_steps).filter(|&t| spikes[t] == 1).collect();

    if firing.is_empty() {
        if bp.dead_kappa != 0.0 {
            for t in 0..n_steps {
                let surrogate = bp.dead_kappa * logistic_slope(trace.u[t] - cfg.v_th);
                phi.set(t, t, surrogate);
            }
        }
        return phi;
    }

    let sign = bp.psc_timing.sign();
    for (idx, &t_m) in firing.iter().enumerate().rev() {
        let dt_du = -1.0 / du_dt_at_spike(trace, spikes, t_m, cfg, floor).value;
        let next = firing.get(idx + 1).copied();
        let reset_gain = next.map(|t_p| dreset_dtm(t_p, t_m, cfg) * dt_du);
        for t_k in t_m..n_steps {
            let mut value = sign * dpsc_dtm(t_k, t_m, cfg.tau_s) * dt_du;
            if let (Some(t_p), Some(gain)) = (next, reset_gain) {
                if t_p < t_k {
                    value += phi.get(t_k, t_p) * gain;
                }
            }
            phi.set(t_k, t_m, value);
        }
    }
    phi
}

/// Backpropagated error of a population, one series per neuron.
pub type DeltaTrace = Signal;

/// Contracts each neuron's phi table with the gradient of the loss with
/// respect to that neuron's PSC.
pub fn contract_phi(phi: &[PhiTable], psc_grad: &Signal) -> Result<DeltaTrace> {
    if phi.len() != psc_grad.channels() {
        return Err(Error::Shape(format!(
            "{} phi tables for {} neurons",
            phi.len(),
            psc_grad.channels()
        )));
    }
    let steps = psc_grad.steps();
    let mut delta = Signal::zeros(phi.len(), steps);
    for (n, table) in phi.iter().enumerate() {
        if table.steps() != steps {
            return Err(Error::Shape(format!(
                "phi table spans {} steps, gradient {steps}",
                table.steps()
            )));
        }
        let mut out = vec![0.0; steps];
        table.contract(psc_grad.channel(n), &mut out);
        delta.channel_mut(n).copy_from_slice(&out);
    }
    Ok(delta)
}

/// Error of the output layer under the squared distance between filtered
/// spike trains: `dE[t_k]/da[t_k] = a[t_k] - target[t_k]`.
pub fn delta_output(out_psc: &Signal, target_psc: &Signal, phi: &[PhiTable], n_steps: usize) -> Result<DeltaTrace> {
    if !out_psc.same_shape(target_psc) || out_psc.steps() != n_steps {
        return Err(Error::Shape(format!(
            "output {}x{} vs target {}x{} over {n_steps} steps",
            out_psc.channels(),
            out_psc.steps(),
            target_psc.channels(),
            target_psc.steps()
        )));
    }
    let grad: Vec<f64> = out_psc
        .as_slice()
        .iter()
        .zip(target_psc.as_slice())
        .map(|(a, d)| a - d)
        .collect();
    contract_phi(phi, &Signal::from_vec(out_psc.channels(), n_steps, grad))
}

/// Maps the next layer's error back through its weights and then through
/// this layer's phi tables.
pub fn delta_hidden(
    next_weights: &LayerParams,
    next_delta: &DeltaTrace,
    phi: &[PhiTable],
    n_steps: usize,
) -> Result<DeltaTrace> {
    if next_delta.steps() != n_steps {
        return Err(Error::Shape(format!(
            "delta spans {} steps, expected {n_steps}",
            next_delta.steps()
        )));
    }
    let psc_grad = next_weights.adjoint(next_delta)?;
    contract_phi(phi, &psc_grad)
}

/// `dL/dW = sum_m delta[t_m] (x) a_pre[t_m]` for a weighted layer.
pub fn weight_grad(layer: &LayerParams, pre_psc: &Signal, delta: &DeltaTrace) -> Result<Vec<f64>> {
    layer.weight_grad(pre_psc, delta)
}

/// Per-layer gradients, each shaped like that layer's weights (empty for pooling).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(layers: &[LayerParams]) -> Self {
        Self {
            layers: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.layers.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().flatten().all(|&g| g == 0.0)
    }

    /// First layer holding a non-finite entry, with the entry index.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .find_map(|(l, g)| g.iter().position(|v| !v.is_finite()).map(|i| (l, i)))
    }
}
