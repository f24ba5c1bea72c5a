//! ANN to SNN parameter conversion under value-range encoding.
//!
//! A quantized activation `x = (|s| + T_min) / T_q` is carried by `|s|`
//! spikes in a window of `T = T_max - T_min` steps. Scaling weights by
//! `T / T_q`, folding the `T_min` offset of every input into the bias, and
//! firing at `theta = T / T_q` makes each converted layer emit exactly
//! `floor(T_q * z) - T_min` spikes (clamped to `[0, T]`) for ANN
//! pre-activation `z`.

use crate::annq::VrConfig;
use crate::error::{Error, Result};
use crate::network::{weight_row_sums, Layer, Mode, NetworkSpec};
use crate::tensor::Tensor;

/// `w_hat = (T / T_q) * w`.
pub fn convert_weights(w: &Tensor, cfg: &VrConfig) -> Tensor {
    let scale = cfg.theta();
    w.map(|v| scale * v).expect("scaled weights are finite")
}

/// `b_hat_c = b_c + (T_min / T_q) * sum(w feeding c)`, using the original
/// (unscaled) weights.
pub fn convert_bias(b: &[f64], w: &Tensor, cfg: &VrConfig) -> Result<Vec<f64>> {
    let rows = w.shape()[0];
    if rows != b.len() && rows != 1 {
        return Err(Error::shape("bias vs weight rows", rows, b.len()));
    }
    let offset = cfg.lower();
    Ok(b.iter()
        .zip(weight_row_sums(w, b.len()))
        .map(|(b, s)| b + offset * s)
        .collect())
}

/// Uniform spiking threshold `T / T_q`.
pub fn layer_threshold(cfg: &VrConfig) -> f64 {
    cfg.theta()
}

/// Per-step membrane constant `b_hat - T_min / T_q`: the bias enters once per
/// step together with the subtraction of the `T_min` offset.
pub fn step_constant(b_hat: &[f64], cfg: &VrConfig) -> Vec<f64> {
    let offset = cfg.lower();
    b_hat.iter().map(|b| b - offset).collect()
}

/// Converts a BN-folded ANN into its SNN twin with uniform thresholds.
pub fn convert_network(ann: &NetworkSpec) -> Result<NetworkSpec> {
    if ann.mode() != Mode::Ann {
        return Err(Error::Mode {
            expected: "ann",
            found: ann.mode().name(),
        });
    }
    let cfg = ann.cfg();
    let last = ann.layers().len() - 1;
    let theta = layer_threshold(&cfg);
    let mut layers = Vec::with_capacity(ann.layers().len());
    for (i, layer) in ann.layers().iter().enumerate() {
        if layer.bn.is_some() {
            return Err(Error::Unsupported(format!(
                "layer {i} carries unfolded batch norm"
            )));
        }
        // Zero padding in the spike domain stands for T_min/T_q, not 0.
        if layer.geometry.padding > 0 && cfg.t_min() > 0 {
            return Err(Error::Unsupported(format!(
                "layer {i}: zero padding cannot be represented exactly when T_min > 0"
            )));
        }
        let b_hat = convert_bias(&layer.bias, &layer.weights, &cfg)?;
        let mut converted = Layer::new(
            layer.geometry,
            convert_weights(&layer.weights, &cfg),
            b_hat.clone(),
        );
        converted.step_constant = Some(step_constant(&b_hat, &cfg));
        if i != last {
            converted.thresholds = Some(vec![theta; layer.out_channels()]);
        }
        layers.push(converted);
    }
    NetworkSpec::into_snn(layers, cfg)
}
