//! Value-range ANN-to-SNN conversion and spiking inference.
//!
//! The pipeline: a quantized ANN ([`annq`]) is converted into a
//! rate-coded SNN ([`convert`]) whose spike counts reproduce the ANN
//! activations exactly when simulated with the averaging IF model
//! ([`engine`]). Per-channel IF thresholds can be trained against that
//! reference ([`ctt`]) and small-window inputs expanded across quantization
//! levels ([`ice`]).

pub mod annq;
pub mod container;
pub mod convert;
pub mod ctt;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod ice;
pub mod network;
pub mod raster;
pub mod spike;
pub mod stats;
pub mod tensor;

pub use annq::{
    ann_forward, ann_trace, clamp, fold_batchnorm, quantize, BatchNormParams, VrConfig,
};
pub use convert::{convert_bias, convert_network, convert_weights, layer_threshold, step_constant};
pub use ctt::{ctt_loss, ctt_train, ctt_update, CttConfig, ThresholdMap};
pub use engine::{
    asg_layer, asg_network_forward, encode_input, if_layer_step, if_network_forward, NeuronState,
};
pub use error::{Error, Result};
pub use ice::{ice_expand, ice_then_encode, IceConfig};
pub use network::{Layer, Mode, NetworkSpec};
pub use spike::SpikeTrain;
pub use stats::{spike_report, SpikeReport, SpikeStats};
pub use tensor::{LayerGeometry, LayerKind, Tensor};
