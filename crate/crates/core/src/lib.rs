//! Spiking neural network simulation and training with a backward pass that
//! propagates error through spike timing.
//!
//! The forward model is a discrete-time leaky integrate-and-fire network with
//! first-order synaptic currents ([`neuron`], [`layers`], [`network`]). Training
//! minimizes a squared distance between filtered output and target spike
//! trains ([`loss`]) using gradients computed in [`backprop`]. Independent
//! checks of those gradients live in [`oracle`].

// Negated float comparisons are used on purpose: they reject NaN together
// with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backprop;
pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod network;
pub mod neuron;
pub mod oracle;
pub mod signal;
pub mod train;

pub use backprop::{BackpropConfig, GradientSet, PhiTable};
pub use error::{Error, Result};
pub use layers::{Geometry, LayerKind, LayerParams};
pub use loss::{LossReport, TargetSpec};
pub use network::{backward_network, forward_network, init_weights, InitConfig, NetworkSpec};
pub use neuron::{NeuronConfig, NeuronTrace, SpikeRecord};
pub use signal::Signal;
