//! Independent checks of the backward-pass mathematics.
//!
//! The input-to-loss map of a discrete spiking network is piecewise constant
//! in the weights, so finite differences of the loss are not a valid oracle
//! for the firing-time gradient. The checks here instead cover the pieces that
//! can be verified:
//!
//! * [`phi_direct`] re-evaluates the phi case table literally, entry by entry,
//!   with no code shared with [`crate::backprop::build_phi`];
//! * [`spike_shift_check`] perturbs a weight in a finely integrated
//!   continuous-time circuit and compares the measured shift of the first
//!   spike with the linearized prediction `-du / (du/dt)`;
//! * [`loss_fd_check`] compares the loss gradient with central differences.

pub mod suite;

use crate::backprop::{du_dt_at_spike, BackpropConfig, PhiTable};
use crate::loss::{filtered_distance, loss_psc_grad};
use crate::neuron::{NeuronConfig, NeuronTrace};
use crate::signal::Signal;

/// Literal evaluation of `phi(t_k, t_m)` for one neuron.
///
/// `spikes[t]` is the raster, `u` and `i_net` the recorded potential and
/// input current.
pub fn phi_direct(spikes: &[u8], u: &[f64], i_net: &[f64], cfg: &NeuronConfig, bp: &BackpropConfig) -> PhiTable {
    let n = spikes.len();
    let mut table = PhiTable::zeros(n);
    let fired_any = spikes.iter().any(|&s| s != 0);
    for t_m in 0..n {
        for t_k in t_m..n {
            let value = if fired_any {
                phi_entry(t_k, t_m, spikes, u, i_net, cfg, bp)
            } else if t_k == t_m && bp.dead_kappa != 0.0 {
                let x = u[t_m] - cfg.v_th;
                let sig = 1.0 / (1.0 + (-x).exp());
                bp.dead_kappa * sig * (1.0 - sig)
            } else {
                0.0
            };
            table.set(t_k, t_m, value);
        }
    }
    table
}

fn phi_entry(
    t_k: usize,
    t_m: usize,
    spikes: &[u8],
    u: &[f64],
    i_net: &[f64],
    cfg: &NeuronConfig,
    bp: &BackpropConfig,
) -> f64 {
    // Case a: no spike at t_m.
    if spikes[t_m] == 0 {
        return 0.0;
    }
    let floor = bp.eps_slope.unwrap_or(0.1 * cfg.v_th / cfg.tau_m);
    let slope = ((i_net[t_m] - u[t_m]) / cfg.tau_m).max(floor);
    let dt_du = -1.0 / slope;
    let sign = bp.psc_timing.sign();
    let gap = (t_k - t_m) as f64;
    let inter = sign * (1.0 / cfg.tau_s) * (-gap / cfg.tau_s).exp() * dt_du;

    let next_spike = (t_m + 1..t_k).find(|&t| spikes[t] != 0);
    match next_spike {
        // Case b: no further spike strictly between t_m and t_k.
        None => inter,
        // Case c: chain through the reset into the next spike.
        Some(t_p) => {
            let reset = -(cfg.v_th / cfg.tau_m) * (-((t_p - t_m) as f64) / cfg.tau_m).exp();
            inter + phi_entry(t_k, t_p, spikes, u, i_net, cfg, bp) * reset * dt_du
        }
    }
}

/// A one-input, one-neuron circuit for the spike-time-shift experiment.
///
/// The presynaptic channel carries the continuous PSC
/// `a(t) = baseline + sum_f exp(-(t - t_f)/tau_s)` over `input_spikes`; the
/// neuron integrates `tau_m du/dt = -u + w a(t)` and fires with reset by
/// subtraction when `u >= v_th`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftExperiment {
    pub cfg: NeuronConfig,
    pub weight: f64,
    pub baseline: f64,
    pub input_spikes: Vec<f64>,
    /// Weight perturbation.
    pub delta_w: f64,
    /// Sub-steps per unit time, at least 10.
    pub subdivision: usize,
    /// Simulated duration in time units.
    pub duration: f64,
    /// Clamp floor used for the slope; `None` means the backward-pass default.
    pub eps_slope: Option<f64>,
}

impl ShiftExperiment {
    fn psc(&self, t: f64) -> f64 {
        self.baseline
            + self
                .input_spikes
                .iter()
                .filter(|&&tf| tf <= t)
                .map(|&tf| (-(t - tf) / self.cfg.tau_s).exp())
                .sum::<f64>()
    }

    /// Crossing times for weight `w`, plus the potential history the neuron
    /// would follow without any reset.
    fn simulate(&self, w: f64) -> FineRun {
        let dt = 1.0 / self.subdivision as f64;
        let n = (self.duration * self.subdivision as f64).ceil() as usize;
        let (mut u, mut free) = (0.0, 0.0);
        let mut history = Vec::with_capacity(n + 1);
        let mut crossings = Vec::new();
        history.push(free);
        for j in 1..=n {
            let t_prev = (j - 1) as f64 * dt;
            let drive = w * self.psc(t_prev);
            let u_new = u + dt * (-u + drive) / self.cfg.tau_m;
            free += dt * (-free + drive) / self.cfg.tau_m;
            history.push(free);
            if u_new >= self.cfg.v_th {
                let frac = (self.cfg.v_th - u) / (u_new - u);
                crossings.push(t_prev + frac * dt);
                u = u_new - self.cfg.v_th;
            } else {
                u = u_new;
            }
        }
        FineRun { dt, history, crossings }
    }
}

struct FineRun {
    dt: f64,
    /// Reset-free potential at each grid point. It matches the actual
    /// potential up to the first crossing.
    history: Vec<f64>,
    crossings: Vec<f64>,
}

impl FineRun {
    /// Reset-free potential at time `t`, linearly interpolated.
    fn potential_at(&self, t: f64) -> f64 {
        let x = t / self.dt;
        let j = (x.floor() as usize).min(self.history.len() - 2);
        let frac = x - j as f64;
        self.history[j] + frac * (self.history[j + 1] - self.history[j])
    }
}

/// Outcome of [`spike_shift_check`].
#[derive(Clone, Debug, PartialEq)]
pub enum ShiftOutcome {
    Valid(ShiftReport),
    /// The perturbation changed the number of spikes, or the base circuit
    /// never fired.
    Invalid {
        base_spikes: usize,
        perturbed_spikes: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftReport {
    pub first_spike: f64,
    pub measured: f64,
    pub predicted: f64,
    pub relative_error: f64,
    /// Raw slope at the spike before clamping.
    pub raw_slope: f64,
    /// The slope clamp engaged, so the prediction is bounded rather than linearized.
    pub clamped: bool,
}

/// Compares the measured shift of the first spike under a weight perturbation
/// with the prediction `-du/(du/dt)` from the firing-time linearization.
pub fn spike_shift_check(exp: &ShiftExperiment) -> ShiftOutcome {
    assert!(exp.subdivision >= 10, "subdivision factor must be at least 10");
    let base = exp.simulate(exp.weight);
    let perturbed = exp.simulate(exp.weight + exp.delta_w);
    if base.crossings.is_empty() || base.crossings.len() != perturbed.crossings.len() {
        return ShiftOutcome::Invalid {
            base_spikes: base.crossings.len(),
            perturbed_spikes: perturbed.crossings.len(),
        };
    }
    let t_star = base.crossings[0];
    let measured = perturbed.crossings[0] - t_star;

    let u_star = base.potential_at(t_star);
    let du = perturbed.potential_at(t_star) - u_star;
    let i_star = exp.weight * exp.psc(t_star);
    let floor = BackpropConfig {
        eps_slope: exp.eps_slope,
        ..Default::default()
    }
    .slope_floor(&exp.cfg);
    let trace = NeuronTrace {
        u: &[u_star],
        a: &[0.0],
        i_net: &[i_star],
    };
    let slope = du_dt_at_spike(&trace, &[1], 0, &exp.cfg, floor);
    let predicted = -du / slope.value;

    let relative_error = if measured == 0.0 && predicted == 0.0 {
        0.0
    } else {
        (measured - predicted).abs() / measured.abs()
    };
    ShiftOutcome::Valid(ShiftReport {
        first_spike: t_star,
        measured,
        predicted,
        relative_error,
        raw_slope: slope.raw,
        clamped: slope.clamped(),
    })
}

/// Result of a finite-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

/// Floor on the denominator of relative errors, so that gradients that are
/// both essentially zero compare as equal.
pub const FD_ABS_FLOOR: f64 = 1e-6;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_ABS_FLOOR)
}

/// Compares `dE[t_k]/da[t_k] = a - d` against central differences of the
/// per-step loss, perturbing every output PSC entry by `+-h`.
pub fn loss_fd_check(output_psc: &Signal, target_psc: &Signal, h: f64) -> FdReport {
    let analytic = loss_psc_grad(output_psc, target_psc);
    let mut report = FdReport {
        max_relative_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
    };
    let mut probe = output_psc.clone();
    for n in 0..output_psc.channels() {
        for k in 0..output_psc.steps() {
            let orig = probe[(n, k)];
            probe[(n, k)] = orig + h;
            let plus = filtered_distance(&probe, target_psc).expect("shapes match").per_step[k];
            probe[(n, k)] = orig - h;
            let minus = filtered_distance(&probe, target_psc).expect("shapes match").per_step[k];
            probe[(n, k)] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let exact = analytic[(n, k)];
            report.max_relative_error = report.max_relative_error.max(relative_error(exact, numeric));
            report.max_abs_analytic = report.max_abs_analytic.max(exact.abs());
            report.max_abs_numeric = report.max_abs_numeric.max(numeric.abs());
        }
    }
    report
}

/// Loss of a single output neuron whose one spike sits at continuous time
/// `spike_time`, sampled at integer steps against `target`.
fn timed_spike_loss(spike_time: f64, target: &[f64], tau: f64) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let t = k as f64;
            let a = if t >= spike_time {
                (-(t - spike_time) / tau).exp()
            } else {
                0.0
            };
            0.5 * (a - d) * (a - d)
        })
        .sum()
}

/// Analytic derivative of [`timed_spike_loss`] with respect to the spike time,
/// through the pointwise kernel-tail derivative.
fn timed_spike_grad(spike_time: f64, target: &[f64], tau: f64) -> f64 {
    target
        .iter()
        .enumerate()
        .filter(|(k, _)| *k as f64 >= spike_time)
        .map(|(k, d)| {
            let decay = (-(k as f64 - spike_time) / tau).exp();
            (decay - d) * decay / tau
        })
        .sum()
}

/// Absolute error of the central difference of the spike-time loss at step `h`.
///
/// Unlike the PSC-level loss, which is exactly quadratic and therefore has no
/// truncation error, this map has a nonzero third derivative, so the error
/// shrinks as `h^2`.
pub fn timing_fd_error(spike_time: f64, target: &[f64], tau: f64, h: f64) -> f64 {
    let numeric =
        (timed_spike_loss(spike_time + h, target, tau) - timed_spike_loss(spike_time - h, target, tau)) / (2.0 * h);
    (numeric - timed_spike_grad(spike_time, target, tau)).abs()
}

/// Observed convergence orders `log2(err(h_i) / err(h_{i+1}))` over a halving sequence.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
