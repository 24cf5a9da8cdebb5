//! ISI-modulated spiking neural networks (IMSNNs).
//!
//! An IMSNN is a leaky integrate-and-fire network whose synaptic weights are
//! Gaussian functions of the presynaptic interspike interval, trained with an
//! explicit backpropagation-through-time rule that selectively suppresses
//! weight updates which would shorten postsynaptic interspike intervals. The
//! net effect is ordinary task accuracy at a fraction of the spike traffic.
//!
//! Crate layout:
//! - [`dynamics`]: scalar neuron/synapse update rules
//! - [`arch`] / [`bank`] / [`network`]: topology, parameters, forward pass
//! - [`encoding`]: pixel-to-spike-train conversion
//! - [`backprop`]: the reverse-time gradient engine and its suppression modes
//! - [`oracle`]: slow reference implementations used to validate the engine
//! - [`dataio`]: IDX dataset acquisition and caching
//! - [`training`]: loss, optimizer, train/eval loops, metrics

pub mod arch;
pub mod backprop;
pub mod bank;
pub mod dataio;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod network;
pub mod oracle;
pub mod training;

pub use arch::{parse_architecture, LayerSpec};
pub use backprop::{BackwardState, SuppressionMode};
pub use bank::{ConvBank, DenseBank, SynapseBank};
pub use dynamics::GaussianSynapse;
pub use encoding::{EncoderConfig, EncodingScheme, SpikeRaster};
pub use error::{Error, Result};
pub use network::{ForwardResult, InitConfig, LayerTrace, Network, Variant};
pub use training::{AdamConfig, EvalReport, MetricsRecord, TrainConfig};
