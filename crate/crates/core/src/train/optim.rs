//! First-order optimizers over per-layer weight arrays.

use crate::backprop::GradientSet;
use crate::error::{Error, Result};
use crate::layers::LayerParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimKind::Adam,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state. Adam moments are shaped like the weights they track.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn new(config: OptimConfig, layers: &[LayerParams]) -> Self {
        let zeros: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Applies one update. Rejects non-finite gradients before touching
    /// any weight.
    pub fn apply(&mut self, grads: &GradientSet, layers: &mut [LayerParams]) -> Result<()> {
        if grads.layers.len() != layers.len() || self.m.len() != layers.len() {
            return Err(Error::Shape("gradient set does not match the network".into()));
        }
        for (idx, (g, l)) in grads.layers.iter().zip(layers.iter()).enumerate() {
            if g.len() != l.weights.len() || self.m[idx].len() != g.len() {
                return Err(Error::Shape(format!(
                    "layer {idx}: gradient holds {} entries, weights {}",
                    g.len(),
                    l.weights.len()
                )));
            }
        }
        if let Some((layer, index)) = grads.first_non_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                layer,
                step: self.step as usize,
                neuron: index,
            });
        }
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimKind::Sgd => {
                for (g, l) in grads.layers.iter().zip(layers.iter_mut()) {
                    for (w, gi) in l.weights.iter_mut().zip(g) {
                        *w -= c.lr * gi;
                    }
                }
            }
            OptimKind::Adam => {
                let t = self.step as i32;
                let bias1 = 1.0 - c.beta1.powi(t);
                let bias2 = 1.0 - c.beta2.powi(t);
                for (idx, (g, l)) in grads.layers.iter().zip(layers.iter_mut()).enumerate() {
                    let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
                    for i in 0..g.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        l.weights[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// One Adam (or SGD, per `state.config.kind`) update of `layers`.
pub fn adam_step(state: &mut OptimState, grads: &GradientSet, layers: &mut [LayerParams]) -> Result<()> {
    state.apply(grads, layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Vec<f64>) -> Vec<LayerParams> {
        let n = w.len();
        vec![LayerParams::dense(n, 1, w).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut layers = layer(vec![0.3, -0.2]);
        let mut state = OptimState::new(OptimConfig::default(), &layers);
        let before = layers.clone();
        state
            .apply(
                &GradientSet {
                    layers: vec![vec![0.0, 0.0]],
                },
                &mut layers,
            )
            .unwrap();
        assert_eq!(layers, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut layers = layer(vec![0.0, 0.0, 0.0]);
        let cfg = OptimConfig::default();
        let mut state = OptimState::new(cfg, &layers);
        let g = GradientSet {
            layers: vec![vec![2.5, -0.01, 40.0]],
        };
        state.apply(&g, &mut layers).unwrap();
        // m_hat = g and v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
        for (w, gi) in layers[0].weights.iter().zip(&g.layers[0]) {
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
            assert!((w.abs() - cfg.lr).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_states_give_identical_updates() {
        let g = GradientSet {
            layers: vec![vec![0.1, -0.7]],
        };
        let mut a = layer(vec![0.5, 0.5]);
        let mut b = a.clone();
        let mut sa = OptimState::new(OptimConfig::default(), &a);
        let mut sb = sa.clone();
        for _ in 0..3 {
            sa.apply(&g, &mut a).unwrap();
            sb.apply(&g, &mut b).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn sgd_step() {
        let mut layers = layer(vec![1.0]);
        let cfg = OptimConfig {
            kind: OptimKind::Sgd,
            lr: 0.1,
            ..Default::default()
        };
        let mut state = OptimState::new(cfg, &layers);
        state
            .apply(
                &GradientSet {
                    layers: vec![vec![2.0]],
                },
                &mut layers,
            )
            .unwrap();
        assert!((layers[0].weights[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut layers = layer(vec![1.0, 2.0]);
        let mut state = OptimState::new(OptimConfig::default(), &layers);
        let err = state
            .apply(
                &GradientSet {
                    layers: vec![vec![0.0, f64::NAN]],
                },
                &mut layers,
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 0, .. }));
        assert_eq!(layers[0].weights, vec![1.0, 2.0]);
        assert_eq!(state.step, 0);
    }
}
