//! Linear maps between populations: dense, 2-D convolution and average pooling.
//!
//! Every layer works on flat per-step vectors. Spatial layers interpret them as
//! `[channels, height, width]` in row-major order, so a dense layer placed after
//! a convolution sees the flattened feature map.

use std::fmt;

use crate::error::{Error, Result};
use crate::neuron::NeuronConfig;
use crate::signal::Signal;

/// Spatial shape of a layer's input or output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// A flat vector of `n` features.
    pub fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub fn size(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_flat(&self) -> bool {
        self.height == 1 && self.width == 1
    }

    #[inline]
    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    /// Accepts `N`, `HxW` or `CxHxW`.
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .trim()
            .split('x')
            .map(|d| d.trim().parse::<usize>().ok().filter(|&n| n > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Config(format!("bad shape {s:?}")))?;
        match dims.as_slice() {
            [n] => Ok(Geometry::flat(*n)),
            [h, w] => Ok(Geometry::new(1, *h, *w)),
            [c, h, w] => Ok(Geometry::new(*c, *h, *w)),
            _ => Err(Error::Config(format!("bad shape {s:?}"))),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_flat() {
            write!(f, "{}", self.channels)
        } else {
            write!(f, "{}x{}x{}", self.channels, self.height, self.width)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        size: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::AvgPool { .. } => "avgpool",
        }
    }
}

/// A layer's kind, geometry and weights.
///
/// Dense weights are `[out, in]`, convolution weights `[out_ch, in_ch, k, k]`.
/// Pooling layers carry no weights and no neurons.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub kind: LayerKind,
    pub input: Geometry,
    pub output: Geometry,
    pub weights: Vec<f64>,
    /// Constant input current added to every neuron at every step.
    pub bias_current: f64,
    /// Per-layer override of the network's neuron constants.
    pub neuron: Option<NeuronConfig>,
}

impl LayerParams {
    pub fn dense(inputs: usize, outputs: usize, weights: Vec<f64>) -> Result<Self> {
        Self::dense_from(Geometry::flat(inputs), outputs, weights)
    }

    /// Dense layer reading a (possibly spatial) input as a flat vector.
    pub fn dense_from(input: Geometry, outputs: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != outputs * input.size() {
            return Err(Error::Shape(format!(
                "dense {}->{} needs {} weights, got {}",
                input.size(),
                outputs,
                outputs * input.size(),
                weights.len()
            )));
        }
        Ok(Self {
            kind: LayerKind::Dense,
            input,
            output: Geometry::flat(outputs),
            weights,
            bias_current: 0.0,
            neuron: None,
        })
    }

    pub fn conv2d(
        input: Geometry,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || out_channels == 0 {
            return Err(Error::Shape(
                "conv2d kernel, stride and channels must be positive".into(),
            ));
        }
        let (ph, pw) = (input.height + 2 * padding, input.width + 2 * padding);
        if ph < kernel || pw < kernel {
            return Err(Error::Shape(format!(
                "conv2d kernel {kernel} larger than padded input {ph}x{pw}"
            )));
        }
        let output = Geometry::new(out_channels, (ph - kernel) / stride + 1, (pw - kernel) / stride + 1);
        let expected = out_channels * input.channels * kernel * kernel;
        if weights.len() != expected {
            return Err(Error::Shape(format!(
                "conv2d needs {expected} weights, got {}",
                weights.len()
            )));
        }
        Ok(Self {
            kind: LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            },
            input,
            output,
            weights,
            bias_current: 0.0,
            neuron: None,
        })
    }

    pub fn avg_pool(input: Geometry, size: usize) -> Result<Self> {
        if size == 0 || input.height < size || input.width < size {
            return Err(Error::Shape(format!("pool size {size} does not fit input {input}")));
        }
        Ok(Self {
            kind: LayerKind::AvgPool { size },
            input,
            output: Geometry::new(input.channels, input.height / size, input.width / size),
            weights: Vec::new(),
            bias_current: 0.0,
            neuron: None,
        })
    }

    pub fn is_spiking(&self) -> bool {
        !matches!(self.kind, LayerKind::AvgPool { .. })
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn output_size(&self) -> usize {
        self.output.size()
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.input.size(),
            LayerKind::Conv2d { kernel, .. } => self.input.channels * kernel * kernel,
            LayerKind::AvgPool { size } => size * size,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense => vec![self.output.size(), self.input.size()],
            LayerKind::Conv2d { kernel, .. } => {
                vec![self.output.channels, self.input.channels, kernel, kernel]
            }
            LayerKind::AvgPool { .. } => Vec::new(),
        }
    }

    /// Applies the layer's linear map to one step's input vector.
    pub fn forward_step(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_size());
        debug_assert_eq!(y.len(), self.output_size());
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.input_size();
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &self.weights[o * n_in..(o + 1) * n_in];
                    *yo = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            } => {
                y.fill(0.0);
                self.for_each_tap(kernel, stride, padding, |wi, xi, yi| {
                    y[yi] += self.weights[wi] * x[xi];
                });
            }
            LayerKind::AvgPool { size } => {
                let scale = 1.0 / (size * size) as f64;
                y.fill(0.0);
                self.for_each_pool_tap(size, |xi, yi| y[yi] += scale * x[xi]);
            }
        }
        if self.bias_current != 0.0 {
            y.iter_mut().for_each(|v| *v += self.bias_current);
        }
    }

    /// Transpose of [`forward_step`](Self::forward_step) without the bias.
    pub fn adjoint_step(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_size());
        debug_assert_eq!(y.len(), self.output_size());
        x.fill(0.0);
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.input_size();
                for (o, &yo) in y.iter().enumerate() {
                    if yo == 0.0 {
                        continue;
                    }
                    let row = &self.weights[o * n_in..(o + 1) * n_in];
                    for (xi, w) in x.iter_mut().zip(row) {
                        *xi += w * yo;
                    }
                }
            }
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            } => {
                self.for_each_tap(kernel, stride, padding, |wi, xi, yi| {
                    x[xi] += self.weights[wi] * y[yi];
                });
            }
            LayerKind::AvgPool { size } => {
                let scale = 1.0 / (size * size) as f64;
                self.for_each_pool_tap(size, |xi, yi| x[xi] += scale * y[yi]);
            }
        }
    }

    /// Accumulates `d(sum_t <y_t, W x_t>)/dW` for one step into `grad`.
    pub fn accumulate_grad_step(&self, y: &[f64], x: &[f64], grad: &mut [f64]) {
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.input_size();
                for (o, &yo) in y.iter().enumerate() {
                    if yo == 0.0 {
                        continue;
                    }
                    let row = &mut grad[o * n_in..(o + 1) * n_in];
                    for (g, v) in row.iter_mut().zip(x) {
                        *g += yo * v;
                    }
                }
            }
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
            } => {
                self.for_each_tap(kernel, stride, padding, |wi, xi, yi| {
                    grad[wi] += y[yi] * x[xi];
                });
            }
            LayerKind::AvgPool { .. } => {}
        }
    }

    /// Calls `f(weight_index, input_index, output_index)` for every valid
    /// kernel tap of the convolution.
    fn for_each_tap(&self, kernel: usize, stride: usize, padding: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (inp, out) = (self.input, self.output);
        let pad = padding as isize;
        for oc in 0..out.channels {
            for ic in 0..inp.channels {
                let wbase = (oc * inp.channels + ic) * kernel * kernel;
                for oy in 0..out.height {
                    for ox in 0..out.width {
                        let yi = out.index(oc, oy, ox);
                        for ky in 0..kernel {
                            let iy = (oy * stride + ky) as isize - pad;
                            if iy < 0 || iy >= inp.height as isize {
                                continue;
                            }
                            for kx in 0..kernel {
                                let ix = (ox * stride + kx) as isize - pad;
                                if ix < 0 || ix >= inp.width as isize {
                                    continue;
                                }
                                let xi = inp.index(ic, iy as usize, ix as usize);
                                f(wbase + ky * kernel + kx, xi, yi);
                            }
                        }
                    }
                }
            }
        }
    }

    fn for_each_pool_tap(&self, size: usize, mut f: impl FnMut(usize, usize)) {
        let (inp, out) = (self.input, self.output);
        for c in 0..out.channels {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    let yi = out.index(c, oy, ox);
                    for dy in 0..size {
                        for dx in 0..size {
                            f(inp.index(c, oy * size + dy, ox * size + dx), yi);
                        }
                    }
                }
            }
        }
    }

    /// Applies the linear map at every step of a PSC series.
    pub fn apply(&self, input: &Signal) -> Result<Signal> {
        if input.channels() != self.input_size() {
            return Err(Error::Shape(format!(
                "{} layer expects {} input channels, got {}",
                self.kind.name(),
                self.input_size(),
                input.channels()
            )));
        }
        if !self.is_spiking() && self.bias_current != 0.0 {
            return Err(Error::Shape("pooling layers take no bias".into()));
        }
        let steps = input.steps();
        let mut out = Signal::zeros(self.output_size(), steps);
        let mut x = vec![0.0; self.input_size()];
        let mut y = vec![0.0; self.output_size()];
        for t in 0..steps {
            input.column_into(t, &mut x);
            self.forward_step(&x, &mut y);
            out.set_column(t, &y);
        }
        Ok(out)
    }

    /// Applies the transposed map at every step.
    pub fn adjoint(&self, output_grad: &Signal) -> Result<Signal> {
        if output_grad.channels() != self.output_size() {
            return Err(Error::Shape(format!(
                "{} adjoint expects {} channels, got {}",
                self.kind.name(),
                self.output_size(),
                output_grad.channels()
            )));
        }
        let steps = output_grad.steps();
        let mut out = Signal::zeros(self.input_size(), steps);
        let mut x = vec![0.0; self.input_size()];
        let mut y = vec![0.0; self.output_size()];
        for t in 0..steps {
            output_grad.column_into(t, &mut y);
            self.adjoint_step(&y, &mut x);
            out.set_column(t, &x);
        }
        Ok(out)
    }

    /// Weight gradient `sum_t delta[t] (x) pre_psc[t]`, shaped like the weights.
    pub fn weight_grad(&self, pre_psc: &Signal, delta: &Signal) -> Result<Vec<f64>> {
        if pre_psc.channels() != self.input_size()
            || delta.channels() != self.output_size()
            || pre_psc.steps() != delta.steps()
        {
            return Err(Error::Shape(format!(
                "weight_grad: input {}x{}, delta {}x{} for layer {}->{}",
                pre_psc.channels(),
                pre_psc.steps(),
                delta.channels(),
                delta.steps(),
                self.input_size(),
                self.output_size()
            )));
        }
        let mut grad = vec![0.0; self.weights.len()];
        let mut x = vec![0.0; self.input_size()];
        let mut y = vec![0.0; self.output_size()];
        for t in 0..delta.steps() {
            delta.column_into(t, &mut y);
            if y.iter().all(|&v| v == 0.0) {
                continue;
            }
            pre_psc.column_into(t, &mut x);
            self.accumulate_grad_step(&y, &x, &mut grad);
        }
        Ok(grad)
    }

    /// Materializes the layer as an explicit `[out, in]` matrix.
    pub fn to_dense_matrix(&self) -> Vec<f64> {
        let (n_in, n_out) = (self.input_size(), self.output_size());
        let mut m = vec![0.0; n_out * n_in];
        let mut x = vec![0.0; n_in];
        let mut y = vec![0.0; n_out];
        let linear = LayerParams {
            bias_current: 0.0,
            ..self.clone()
        };
        for j in 0..n_in {
            x.fill(0.0);
            x[j] = 1.0;
            linear.forward_step(&x, &mut y);
            for o in 0..n_out {
                m[o * n_in + j] = y[o];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_output_shape() {
        let l = LayerParams::conv2d(Geometry::new(1, 28, 28), 15, 5, 1, 0, vec![0.0; 375]).unwrap();
        assert_eq!(l.output, Geometry::new(15, 24, 24));
        let p = LayerParams::avg_pool(l.output, 2).unwrap();
        assert_eq!(p.output, Geometry::new(15, 12, 12));
        assert!(LayerParams::conv2d(Geometry::new(1, 3, 3), 1, 5, 1, 0, vec![0.0; 25]).is_err());
    }

    #[test]
    fn pool_averages_blocks() {
        let p = LayerParams::avg_pool(Geometry::new(1, 2, 4), 2).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let mut y = [0.0; 2];
        p.forward_step(&x, &mut y);
        assert_eq!(y, [3.5, 5.5]);
    }

    #[test]
    fn adjoints_pass_inner_product_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layers = [
            LayerParams::dense(5, 3, random_vec(&mut rng, 15)).unwrap(),
            LayerParams::conv2d(Geometry::new(2, 6, 5), 3, 3, 1, 1, random_vec(&mut rng, 54)).unwrap(),
            LayerParams::conv2d(Geometry::new(2, 7, 7), 2, 3, 2, 0, random_vec(&mut rng, 36)).unwrap(),
            LayerParams::avg_pool(Geometry::new(3, 6, 4), 2).unwrap(),
        ];
        for l in &layers {
            let x = random_vec(&mut rng, l.input_size());
            let y = random_vec(&mut rng, l.output_size());
            let mut ax = vec![0.0; l.output_size()];
            let mut aty = vec![0.0; l.input_size()];
            l.forward_step(&x, &mut ax);
            l.adjoint_step(&y, &mut aty);
            let (lhs, rhs) = (dot(&ax, &y), dot(&x, &aty));
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                "{:?}: {lhs} vs {rhs}",
                l.kind
            );
        }
    }

    #[test]
    fn weight_grad_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = LayerParams::dense(4, 3, random_vec(&mut rng, 12)).unwrap();
        let pre = Signal::from_vec(4, 5, random_vec(&mut rng, 20));
        let delta = Signal::from_vec(3, 5, random_vec(&mut rng, 15));
        let g = l.weight_grad(&pre, &delta).unwrap();
        for o in 0..3 {
            for j in 0..4 {
                let mut expected = 0.0;
                for t in 0..5 {
                    expected += delta[(o, t)] * pre[(j, t)];
                }
                assert!((g[o * 4 + j] - expected).abs() < 1e-14);
            }
        }
        let scalar = LayerParams::dense(1, 1, vec![1.0]).unwrap();
        let g = scalar
            .weight_grad(&Signal::from_vec(1, 1, vec![0.5]), &Signal::from_vec(1, 1, vec![0.3]))
            .unwrap();
        assert!((g[0] - 0.15).abs() < 1e-15);
        assert!(scalar.weight_grad(&Signal::zeros(2, 1), &Signal::zeros(1, 1)).is_err());
    }

    #[test]
    fn conv_grad_is_adjoint_of_weight_map() {
        // <y, conv_W(x)> is linear in W, so its gradient is exact under finite differences.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = LayerParams::conv2d(Geometry::new(2, 5, 5), 2, 3, 1, 1, random_vec(&mut rng, 36)).unwrap();
        let x = random_vec(&mut rng, l.input_size());
        let y = random_vec(&mut rng, l.output_size());
        let mut g = vec![0.0; l.weights.len()];
        l.accumulate_grad_step(&y, &x, &mut g);
        for (wi, gw) in g.iter().enumerate() {
            let mut e = l.clone();
            e.weights.iter_mut().for_each(|w| *w = 0.0);
            e.weights[wi] = 1.0;
            let mut out = vec![0.0; l.output_size()];
            e.forward_step(&x, &mut out);
            assert!((dot(&out, &y) - gw).abs() < 1e-12);
        }
    }

    #[test]
    fn materialized_conv_matches_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = LayerParams::conv2d(Geometry::new(2, 4, 4), 3, 3, 1, 0, random_vec(&mut rng, 54)).unwrap();
        let m = l.to_dense_matrix();
        let d = LayerParams::dense(l.input_size(), l.output_size(), m).unwrap();
        let x = random_vec(&mut rng, l.input_size());
        let (mut a, mut b) = (vec![0.0; l.output_size()], vec![0.0; l.output_size()]);
        l.forward_step(&x, &mut a);
        d.forward_step(&x, &mut b);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
