//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export wraps a plain Rust function that returns `Result<_, String>`,
//! so the logic is testable off the browser.

use wasm_bindgen::prelude::*;

use tsslbp::backprop::{build_phi, BackpropConfig, PscTiming};
use tsslbp::loss::filtered_distance;
use tsslbp::network::{backward_network, forward_network, init_weights, loss_output_psc, InitConfig, NetworkSpec};
use tsslbp::neuron::{filter_raster, simulate_neurons, NeuronConfig, SpikeRecord};
use tsslbp::signal::Signal;
use tsslbp::train::{OptimConfig, OptimState};

fn neuron_config(tau_m: f64, tau_s: f64, v_th: f64) -> Result<NeuronConfig, String> {
    NeuronConfig::new(tau_m, tau_s, v_th).map_err(|e| e.to_string())
}

/// Membrane potential, spikes and PSC of one neuron driven by `current`.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronTrace {
    u: Vec<f64>,
    psc: Vec<f64>,
    spikes: Vec<u8>,
}

#[wasm_bindgen]
impl NeuronTrace {
    /// Potential before reset at each step.
    pub fn potential(&self) -> Vec<f64> {
        self.u.clone()
    }

    pub fn psc(&self) -> Vec<f64> {
        self.psc.clone()
    }

    pub fn spikes(&self) -> Vec<u8> {
        self.spikes.clone()
    }
}

pub fn trace_neuron(current: &[f64], tau_m: f64, tau_s: f64, v_th: f64) -> Result<NeuronTrace, String> {
    if current.is_empty() {
        return Err("input current is empty".into());
    }
    let cfg = neuron_config(tau_m, tau_s, v_th)?;
    let (trace, spikes) = simulate_neurons(Signal::from_vec(1, current.len(), current.to_vec()), &cfg);
    Ok(NeuronTrace {
        u: trace.u.channel(0).to_vec(),
        psc: trace.a.channel(0).to_vec(),
        spikes: spikes.row(0).to_vec(),
    })
}

#[wasm_bindgen(js_name = traceNeuron)]
pub fn trace_neuron_js(current: &[f64], tau_m: f64, tau_s: f64, v_th: f64) -> Result<NeuronTrace, JsError> {
    trace_neuron(current, tau_m, tau_s, v_th).map_err(|e| JsError::new(&e))
}

/// Row-major `n x n` table of d a[t_k] / d u[t_m] for one neuron, row `t_k`.
pub fn phi_matrix(
    current: &[f64],
    tau_m: f64,
    tau_s: f64,
    v_th: f64,
    onset: bool,
    dead_kappa: f64,
) -> Result<Vec<f64>, String> {
    let n = current.len();
    if n == 0 {
        return Err("input current is empty".into());
    }
    let cfg = neuron_config(tau_m, tau_s, v_th)?;
    let (trace, spikes) = simulate_neurons(Signal::from_vec(1, n, current.to_vec()), &cfg);
    let bp = BackpropConfig {
        psc_timing: if onset { PscTiming::Onset } else { PscTiming::Decay },
        dead_kappa,
        ..Default::default()
    };
    let phi = build_phi(&trace.neuron(0), spikes.row(0), &cfg, &bp, n);
    let mut out = vec![0.0; n * n];
    for t_k in 0..n {
        for t_m in 0..n {
            out[t_k * n + t_m] = phi.get(t_k, t_m);
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = phiMatrix)]
pub fn phi_matrix_js(
    current: &[f64],
    tau_m: f64,
    tau_s: f64,
    v_th: f64,
    onset: bool,
    dead_kappa: f64,
) -> Result<Vec<f64>, JsError> {
    phi_matrix(current, tau_m, tau_s, v_th, onset, dead_kappa).map_err(|e| JsError::new(&e))
}

/// A small network learning to reproduce a fixed output raster, one Adam
/// step per call to [`SequenceLearner::step`].
#[wasm_bindgen]
pub struct SequenceLearner {
    net: NetworkSpec,
    input: Signal,
    target_raster: SpikeRecord,
    target: Signal,
    optim: OptimState,
    backprop: BackpropConfig,
    iterations: usize,
}

impl SequenceLearner {
    /// The target is the output raster of a teacher network with the same
    /// shape, so a perfect fit exists.
    pub fn build(seed: u64, hidden: usize, outputs: usize, steps: usize, lr: f64) -> Result<Self, String> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(format!("learning rate must be positive, got {lr}"));
        }
        let cfg = NeuronConfig::default();
        let arch = format!("10-{hidden}-{outputs}");
        let mut net = NetworkSpec::from_arch(&arch, None, cfg, steps).map_err(|e| e.to_string())?;
        init_weights(&mut net, seed, InitConfig { gain: 3.0 });
        let mut teacher = net.clone();
        init_weights(&mut teacher, seed.wrapping_add(50), InitConfig { gain: 4.5 });
        // Deterministic pseudo-random input currents in [0, 1).
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let input = Signal::from_vec(
            10,
            steps,
            (0..10 * steps)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect(),
        );
        let target_raster = forward_network(&input, &teacher)
            .map_err(|e| e.to_string())?
            .output_spikes()
            .clone();
        let target = filter_raster(&target_raster, cfg.tau_s);
        let optim = OptimState::new(
            OptimConfig {
                lr,
                ..Default::default()
            },
            &net.layers,
        );
        Ok(Self {
            net,
            input,
            target_raster,
            target,
            optim,
            backprop: BackpropConfig {
                dead_kappa: 2.0,
                ..Default::default()
            },
            iterations: 0,
        })
    }

    fn run(&mut self, update: bool) -> Result<(f64, SpikeRecord), String> {
        let rec = forward_network(&self.input, &self.net).map_err(|e| e.to_string())?;
        let tau = self.net.neuron.tau_s;
        let out = loss_output_psc(&rec, &self.net, tau);
        let loss = filtered_distance(&out, &self.target).map_err(|e| e.to_string())?.total;
        if update {
            let grads =
                backward_network(&rec, &self.target, tau, &self.net, &self.backprop).map_err(|e| e.to_string())?;
            self.optim
                .apply(&grads, &mut self.net.layers)
                .map_err(|e| e.to_string())?;
            self.iterations += 1;
        }
        Ok((loss, rec.output_spikes().clone()))
    }

    /// Loss before the update, then one Adam step.
    pub fn train_step(&mut self) -> Result<f64, String> {
        self.run(true).map(|(loss, _)| loss)
    }

    pub fn current_output(&mut self) -> Result<Vec<u8>, String> {
        self.run(false).map(|(_, spikes)| spikes.raster().to_vec())
    }
}

#[wasm_bindgen]
impl SequenceLearner {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, hidden: usize, outputs: usize, steps: usize, lr: f64) -> Result<SequenceLearner, JsError> {
        Self::build(seed as u64, hidden, outputs, steps, lr).map_err(|e| JsError::new(&e))
    }

    /// Loss before the update; applies one Adam step.
    pub fn step(&mut self) -> Result<f64, JsError> {
        self.train_step().map_err(|e| JsError::new(&e))
    }

    /// Current output raster, row-major `[neuron][step]`.
    pub fn output(&mut self) -> Result<Vec<u8>, JsError> {
        self.current_output().map_err(|e| JsError::new(&e))
    }

    pub fn target(&self) -> Vec<u8> {
        self.target_raster.raster().to_vec()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn outputs(&self) -> usize {
        self.net.output_size()
    }

    pub fn steps(&self) -> usize {
        self.net.n_steps
    }
}
