//! Feedforward network assembly, forward and backward passes, initialization.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backprop::{build_phi, contract_phi, BackpropConfig, GradientSet, PhiTable};
use crate::error::{Error, Result};
use crate::layers::{Geometry, LayerKind, LayerParams};
use crate::loss::loss_psc_grad;
use crate::neuron::{filter_raster, simulate_neurons, LayerTrace, NeuronConfig, SpikeRecord};
use crate::signal::Signal;

/// One token of an architecture string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchLayer {
    /// `300`: fully connected layer of 300 neurons.
    Dense(usize),
    /// `20C5`: 20 filters of 5x5, stride 1, no padding.
    Conv { channels: usize, kernel: usize },
    /// `P2`: 2x2 average pooling with stride 2.
    Pool(usize),
}

impl fmt::Display for ArchLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchLayer::Dense(n) => write!(f, "{n}"),
            ArchLayer::Conv { channels, kernel } => write!(f, "{channels}C{kernel}"),
            ArchLayer::Pool(k) => write!(f, "P{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Token {
    Int(usize),
    Shape(Geometry),
    Layer(ArchLayer),
}

fn parse_usize(s: &str, whole: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Arch(format!("bad number {s:?} in token {whole:?}"))),
    }
}

fn parse_token(tok: &str) -> Result<Token> {
    let t = tok.trim();
    if t.is_empty() {
        return Err(Error::Arch("empty layer token".into()));
    }
    if let Some(rest) = t.strip_prefix(['P', 'p']) {
        return Ok(Token::Layer(ArchLayer::Pool(parse_usize(rest, t)?)));
    }
    if let Some((ch, k)) = t.split_once(['C', 'c']) {
        return Ok(Token::Layer(ArchLayer::Conv {
            channels: parse_usize(ch, t)?,
            kernel: parse_usize(k, t)?,
        }));
    }
    if t.contains('x') {
        let dims = t.split('x').map(|d| parse_usize(d, t)).collect::<Result<Vec<_>>>()?;
        return match dims.as_slice() {
            [h, w] => Ok(Token::Shape(Geometry::new(1, *h, *w))),
            [c, h, w] => Ok(Token::Shape(Geometry::new(*c, *h, *w))),
            _ => Err(Error::Arch(format!("input shape {t:?} must be HxW or CxHxW"))),
        };
    }
    Ok(Token::Int(parse_usize(t, t)?))
}

/// Splits an architecture string such as `28x28-15C5-P2-40C5-P2-300-10` into
/// its input shape and layer list.
///
/// When `input` is given every token is a layer (a leading shape token must
/// agree with it). Otherwise the first token names the input: a bare integer
/// for a flat vector or `HxW` / `CxHxW` for an image.
pub fn parse_architecture(s: &str, input: Option<Geometry>) -> Result<(Geometry, Vec<ArchLayer>)> {
    let mut tokens = s
        .split('-')
        .map(parse_token)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .peekable();
    let geometry = match (tokens.peek().copied(), input) {
        (Some(Token::Shape(g)), Some(given)) => {
            if g != given && !(g.size() == given.size() && given.is_flat()) {
                return Err(Error::Arch(format!("input shape {g} conflicts with {given}")));
            }
            tokens.next();
            g
        }
        (Some(Token::Shape(g)), None) => {
            tokens.next();
            g
        }
        (Some(Token::Int(n)), None) => {
            tokens.next();
            Geometry::flat(n)
        }
        (_, Some(given)) => given,
        (_, None) => {
            return Err(Error::Arch(format!(
                "{s:?} does not start with an input size and none was given"
            )))
        }
    };
    let layers = tokens
        .map(|t| match t {
            Token::Int(n) => Ok(ArchLayer::Dense(n)),
            Token::Layer(l) => Ok(l),
            Token::Shape(g) => Err(Error::Arch(format!("shape {g} is only allowed as the first token"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        return Err(Error::Arch(format!("{s:?} has no layers")));
    }
    Ok((geometry, layers))
}

/// Resolves an architecture string into zero-weight layers without checking
/// that the result is a trainable network.
pub fn build_layers(arch: &str, input: Option<Geometry>) -> Result<(Geometry, Vec<LayerParams>)> {
    let (geometry, arch_layers) = parse_architecture(arch, input)?;
    let mut layers = Vec::with_capacity(arch_layers.len());
    let mut current = geometry;
    for (idx, spec) in arch_layers.iter().enumerate() {
        let layer = match *spec {
            ArchLayer::Dense(n) => LayerParams::dense_from(current, n, vec![0.0; n * current.size()]),
            ArchLayer::Conv { channels, kernel } => LayerParams::conv2d(
                current,
                channels,
                kernel,
                1,
                0,
                vec![0.0; channels * current.channels * kernel * kernel],
            ),
            ArchLayer::Pool(k) => LayerParams::avg_pool(current, k),
        }
        .map_err(|e| Error::LayerShape {
            layer: idx,
            kind: spec_kind(spec),
            message: e.to_string(),
        })?;
        current = layer.output;
        layers.push(layer);
    }
    Ok((geometry, layers))
}

/// Ordered layers with neuron constants and window length.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input: Geometry,
    pub layers: Vec<LayerParams>,
    pub neuron: NeuronConfig,
    pub n_steps: usize,
}

impl NetworkSpec {
    /// Builds a network with zero weights from an architecture string.
    pub fn from_arch(arch: &str, input: Option<Geometry>, neuron: NeuronConfig, n_steps: usize) -> Result<Self> {
        let (geometry, layers) = build_layers(arch, input)?;
        Self::new(geometry, layers, neuron, n_steps)
    }

    pub fn new(input: Geometry, layers: Vec<LayerParams>, neuron: NeuronConfig, n_steps: usize) -> Result<Self> {
        let net = Self {
            input,
            layers,
            neuron,
            n_steps,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        self.neuron.validate()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Config("network has no layers".into()))?;
        if !last.is_spiking() {
            return Err(Error::Config("the last layer must be a spiking layer".into()));
        }
        let mut size = self.input.size();
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.input_size() != size {
                return Err(Error::LayerShape {
                    layer: idx,
                    kind: layer.kind.name(),
                    message: format!("expects {} inputs, previous layer gives {size}", layer.input_size()),
                });
            }
            if layer.weights.len() != layer.weight_shape().iter().product::<usize>() * usize::from(layer.is_spiking()) {
                return Err(Error::LayerShape {
                    layer: idx,
                    kind: layer.kind.name(),
                    message: format!(
                        "weight count {} does not match shape {:?}",
                        layer.weights.len(),
                        layer.weight_shape()
                    ),
                });
            }
            if let Some(cfg) = &layer.neuron {
                cfg.validate()?;
            }
            size = layer.output_size();
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, LayerParams::output_size)
    }

    /// Neuron constants in effect for layer `idx`.
    pub fn neuron_config(&self, idx: usize) -> NeuronConfig {
        self.layers[idx].neuron.unwrap_or(self.neuron)
    }

    /// Human-readable resolved shapes, one line per layer.
    pub fn describe(&self) -> String {
        let mut out = format!("input: {}\n", self.input);
        for (i, l) in self.layers.iter().enumerate() {
            let label = match l.kind {
                LayerKind::Dense => format!("dense {}", l.output_size()),
                LayerKind::Conv2d { kernel, .. } => format!("conv {}C{kernel}", l.output.channels),
                LayerKind::AvgPool { size } => format!("pool P{size}"),
            };
            out.push_str(&format!(
                "layer {i}: {label:<12} {} -> {}  weights {:?}\n",
                l.input,
                l.output,
                l.weight_shape()
            ));
        }
        out
    }

    /// Total number of trainable weights.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }
}

fn spec_kind(spec: &ArchLayer) -> &'static str {
    match spec {
        ArchLayer::Dense(_) => "dense",
        ArchLayer::Conv { .. } => "conv2d",
        ArchLayer::Pool(_) => "avgpool",
    }
}

/// Scale of the uniform initialization: weights are drawn from
/// `U(-gain * v_th / sqrt(fan_in), gain * v_th / sqrt(fan_in))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    pub gain: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { gain: 3.0 }
    }
}

/// Fills every weighted layer with seeded fan-in-scaled uniform weights.
pub fn init_weights(net: &mut NetworkSpec, seed: u64, init: InitConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in 0..net.layers.len() {
        let v_th = net.neuron_config(idx).v_th;
        let layer = &mut net.layers[idx];
        if !layer.is_spiking() {
            continue;
        }
        let bound = init.gain * v_th / (layer.fan_in() as f64).sqrt();
        for w in layer.weights.iter_mut() {
            *w = rng.gen_range(-bound..=bound);
        }
    }
}

/// What one layer produced during the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerRecord {
    Spiking { trace: LayerTrace, spikes: SpikeRecord },
    Pooled { psc: Signal },
}

impl LayerRecord {
    pub fn output_psc(&self) -> &Signal {
        match self {
            LayerRecord::Spiking { trace, .. } => &trace.a,
            LayerRecord::Pooled { psc } => psc,
        }
    }

    pub fn spikes(&self) -> Option<&SpikeRecord> {
        match self {
            LayerRecord::Spiking { spikes, .. } => Some(spikes),
            LayerRecord::Pooled { .. } => None,
        }
    }
}

/// Everything recorded by [`forward_network`], enough for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardRecord {
    pub input: Signal,
    pub layers: Vec<LayerRecord>,
}

impl ForwardRecord {
    /// PSC series of the last layer.
    pub fn output_psc(&self) -> &Signal {
        self.layers.last().expect("network has layers").output_psc()
    }

    pub fn output_spikes(&self) -> &SpikeRecord {
        self.layers
            .last()
            .and_then(LayerRecord::spikes)
            .expect("last layer is spiking")
    }

    /// PSC series feeding layer `idx`.
    pub fn layer_input(&self, idx: usize) -> &Signal {
        if idx == 0 {
            &self.input
        } else {
            self.layers[idx - 1].output_psc()
        }
    }
}

/// Runs every layer in order. Pooling layers average PSCs without neurons.
pub fn forward_network(input_psc: &Signal, net: &NetworkSpec) -> Result<ForwardRecord> {
    if input_psc.channels() != net.input.size() || input_psc.steps() != net.n_steps {
        return Err(Error::Shape(format!(
            "network input expects {}x{} (channels x steps), got {}x{}",
            net.input.size(),
            net.n_steps,
            input_psc.channels(),
            input_psc.steps()
        )));
    }
    let mut records: Vec<LayerRecord> = Vec::with_capacity(net.layers.len());
    for (idx, layer) in net.layers.iter().enumerate() {
        let input = records.last().map_or(input_psc, LayerRecord::output_psc);
        let current = layer.apply(input).map_err(|e| Error::LayerShape {
            layer: idx,
            kind: layer.kind.name(),
            message: e.to_string(),
        })?;
        let record = if layer.is_spiking() {
            let (trace, spikes) = simulate_neurons(current, &net.neuron_config(idx));
            LayerRecord::Spiking { trace, spikes }
        } else {
            LayerRecord::Pooled { psc: current }
        };
        records.push(record);
    }
    Ok(ForwardRecord {
        input: input_psc.clone(),
        layers: records,
    })
}

/// Output-layer PSC as seen by the loss kernel.
pub fn loss_output_psc(record: &ForwardRecord, net: &NetworkSpec, kernel_tau: f64) -> Signal {
    let out_cfg = net.neuron_config(net.layers.len() - 1);
    if kernel_tau == out_cfg.tau_s {
        record.output_psc().clone()
    } else {
        filter_raster(record.output_spikes(), kernel_tau)
    }
}

/// Phi tables of a spiking layer, skipping neurons whose PSC gradient is zero.
fn layer_phi(
    trace: &LayerTrace,
    spikes: &SpikeRecord,
    psc_grad: &Signal,
    cfg: &NeuronConfig,
    bp: &BackpropConfig,
) -> Vec<PhiTable> {
    let steps = trace.steps();
    (0..trace.neurons())
        .map(|n| {
            if psc_grad.channel(n).iter().all(|&g| g == 0.0) {
                PhiTable::zeros(steps)
            } else {
                build_phi(&trace.neuron(n), spikes.row(n), cfg, bp, steps)
            }
        })
        .collect()
}

/// Gradients of the loss with respect to every layer's weights, given the
/// forward record and the loss-filtered target of the output layer.
pub fn backward_network(
    record: &ForwardRecord,
    target_psc: &Signal,
    kernel_tau: f64,
    net: &NetworkSpec,
    bp: &BackpropConfig,
) -> Result<GradientSet> {
    if record.layers.len() != net.layers.len() {
        return Err(Error::Shape(format!(
            "record holds {} layers, network {}",
            record.layers.len(),
            net.layers.len()
        )));
    }
    let out_psc = loss_output_psc(record, net, kernel_tau);
    if !out_psc.same_shape(target_psc) {
        return Err(Error::Shape(format!(
            "target is {}x{}, output {}x{}",
            target_psc.channels(),
            target_psc.steps(),
            out_psc.channels(),
            out_psc.steps()
        )));
    }
    let mut grads = GradientSet::zeros_like(&net.layers);
    let mut psc_grad = loss_psc_grad(&out_psc, target_psc);
    let last = net.layers.len() - 1;

    for idx in (0..net.layers.len()).rev() {
        let layer = &net.layers[idx];
        let upstream_grad = match &record.layers[idx] {
            LayerRecord::Spiking { trace, spikes } => {
                if trace.neurons() != layer.output_size() {
                    return Err(Error::Shape(format!("record of layer {idx} does not match its size")));
                }
                let mut cfg = net.neuron_config(idx);
                if idx == last {
                    cfg.tau_s = kernel_tau;
                }
                let phi = layer_phi(trace, spikes, &psc_grad, &cfg, bp);
                let delta = contract_phi(&phi, &psc_grad)?;
                grads.layers[idx] = layer.weight_grad(record.layer_input(idx), &delta)?;
                delta
            }
            LayerRecord::Pooled { .. } => psc_grad,
        };
        if idx == 0 {
            break;
        }
        psc_grad = if upstream_grad.as_slice().iter().all(|&g| g == 0.0) {
            Signal::zeros(layer.input_size(), upstream_grad.steps())
        } else {
            layer.adjoint(&upstream_grad)?
        };
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_notation() {
        let (g, layers) = parse_architecture("15C5-P2-40C5-P2-300", Some(Geometry::new(1, 28, 28))).unwrap();
        assert_eq!(g, Geometry::new(1, 28, 28));
        assert_eq!(
            layers,
            vec![
                ArchLayer::Conv {
                    channels: 15,
                    kernel: 5
                },
                ArchLayer::Pool(2),
                ArchLayer::Conv {
                    channels: 40,
                    kernel: 5
                },
                ArchLayer::Pool(2),
                ArchLayer::Dense(300),
            ]
        );
        let (g, layers) = parse_architecture("784-400-10", None).unwrap();
        assert_eq!(g, Geometry::flat(784));
        assert_eq!(layers, vec![ArchLayer::Dense(400), ArchLayer::Dense(10)]);
        let (g, _) = parse_architecture("2x34x34-800-10", None).unwrap();
        assert_eq!(g, Geometry::new(2, 34, 34));
    }

    #[test]
    fn rejects_malformed_strings() {
        for bad in [
            "",
            "784",
            "784--10",
            "784-C5-10",
            "784-Px-10",
            "784-0-10",
            "10-28x28",
            "784-12C",
        ] {
            assert!(parse_architecture(bad, None).is_err(), "{bad:?} should fail");
        }
        assert!(parse_architecture("15C5", None).is_err());
    }

    #[test]
    fn resolves_conv_shapes() {
        let net = NetworkSpec::from_arch("28x28-15C5-P2-40C5-P2-300-10", None, NeuronConfig::default(), 5).unwrap();
        let outs: Vec<Geometry> = net.layers.iter().map(|l| l.output).collect();
        assert_eq!(
            outs,
            vec![
                Geometry::new(15, 24, 24),
                Geometry::new(15, 12, 12),
                Geometry::new(40, 8, 8),
                Geometry::new(40, 4, 4),
                Geometry::flat(300),
                Geometry::flat(10),
            ]
        );
        assert!(net.describe().contains("layer 4: dense 300"));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let err = NetworkSpec::from_arch("4x4-2C5-10", None, NeuronConfig::default(), 5).unwrap_err();
        assert!(matches!(err, Error::LayerShape { layer: 0, .. }), "{err}");
        let err = NetworkSpec::from_arch("8x8-2C3-P2", None, NeuronConfig::default(), 5).unwrap_err();
        assert!(err.to_string().contains("last layer"));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let base = NetworkSpec::from_arch("100-10", None, NeuronConfig::default(), 5).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        let mut c = base.clone();
        init_weights(&mut a, 42, InitConfig::default());
        init_weights(&mut b, 42, InitConfig::default());
        init_weights(&mut c, 43, InitConfig::default());
        assert_eq!(a, b);
        assert_ne!(a.layers[0].weights, c.layers[0].weights);
        let bound = 3.0 / 10.0;
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].weights.iter().any(|w| w.abs() > 0.9 * bound));
    }

    #[test]
    fn zero_input_zero_output() {
        let mut net = NetworkSpec::from_arch("6-5-3", None, NeuronConfig::default(), 5).unwrap();
        init_weights(&mut net, 1, InitConfig::default());
        let rec = forward_network(&Signal::zeros(6, 5), &net).unwrap();
        assert!(rec.output_psc().as_slice().iter().all(|&v| v == 0.0));
        assert!(forward_network(&Signal::zeros(5, 5), &net).is_err());
    }

    #[test]
    fn perfect_target_gives_zero_gradient() {
        let mut net = NetworkSpec::from_arch("6-5-3", None, NeuronConfig::default(), 5).unwrap();
        init_weights(&mut net, 9, InitConfig { gain: 6.0 });
        let input = Signal::from_vec(6, 5, vec![1.0; 30]);
        let rec = forward_network(&input, &net).unwrap();
        assert!(rec.output_spikes().total_spikes() > 0);
        let target = rec.output_psc().clone();
        let g = backward_network(&rec, &target, net.neuron.tau_s, &net, &BackpropConfig::default()).unwrap();
        assert!(g.is_zero());
    }
}
