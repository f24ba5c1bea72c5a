//! Quantized-ANN reference path: clamp/quantize activations, batch-norm
//! folding and the layer-by-layer forward pass the spiking network must
//! reproduce.

use crate::error::{Error, Result};
use crate::network::{Mode, NetworkSpec};
use crate::tensor::Tensor;

/// Fixed batch-norm epsilon.
pub const BN_EPSILON: f64 = 1e-5;

/// Distance from an integer below which a scaled activation is treated as
/// that integer before flooring. Float round-off on exact grid points
/// (0.3 * 10 = 2.9999999999999996) otherwise drops a whole level.
pub const GRID_SNAP_TOL: f64 = 1e-9;

/// Floor with snapping to the nearest integer within [`GRID_SNAP_TOL`].
#[inline]
pub fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= GRID_SNAP_TOL {
        r
    } else {
        x.floor()
    }
}

/// The value-range quantization triple `(T_q, T_min, T_max)`.
///
/// Activations live on `{T_min/T_q, ..., T_max/T_q}`; the spike window is
/// `T = T_max - T_min` and the spiking threshold `T / T_q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VrConfig {
    t_q: u32,
    t_min: u32,
    t_max: u32,
}

impl VrConfig {
    pub fn new(t_q: u32, t_min: u32, t_max: u32) -> Result<Self> {
        if t_min >= t_max || t_max > t_q {
            return Err(Error::InvalidVrConfig { t_q, t_min, t_max });
        }
        Ok(Self { t_q, t_min, t_max })
    }

    pub fn t_q(&self) -> u32 {
        self.t_q
    }

    pub fn t_min(&self) -> u32 {
        self.t_min
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    /// Window size `T = T_max - T_min`.
    pub fn window(&self) -> usize {
        (self.t_max - self.t_min) as usize
    }

    /// Spiking threshold `T / T_q`.
    pub fn theta(&self) -> f64 {
        self.window() as f64 / self.t_q as f64
    }

    /// Lower clamp rail `T_min / T_q`.
    pub fn lower(&self) -> f64 {
        self.t_min as f64 / self.t_q as f64
    }

    /// Upper clamp rail `T_max / T_q`.
    pub fn upper(&self) -> f64 {
        self.t_max as f64 / self.t_q as f64
    }

    /// Grid value for integer level `level` (i.e. `level / T_q`).
    #[inline]
    pub fn grid_value(&self, level: u32) -> f64 {
        level as f64 / self.t_q as f64
    }

    /// Integer level of an on-grid value, if it lies within snap tolerance
    /// of a grid point between the rails.
    pub fn level_of(&self, value: f64) -> Option<u32> {
        let scaled = value * self.t_q as f64;
        let r = scaled.round();
        if (scaled - r).abs() > GRID_SNAP_TOL || r < self.t_min as f64 || r > self.t_max as f64 {
            return None;
        }
        Some(r as u32)
    }

    /// Decodes a window spike count to its activation, `(|s| + T_min) / T_q`.
    #[inline]
    pub fn decode(&self, count: u32) -> f64 {
        self.grid_value(count + self.t_min)
    }
}

/// Per-channel batch-norm statistics and affine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let bn = Self {
            gamma,
            beta,
            mean,
            var,
        };
        bn.validate()?;
        Ok(bn)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (name, v) in [
            ("beta", &self.beta),
            ("mean", &self.mean),
            ("var", &self.var),
        ] {
            if v.len() != c {
                return Err(Error::shape(
                    format!("batch-norm {name} length"),
                    c,
                    v.len(),
                ));
            }
        }
        if let Some(i) = self.var.iter().position(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "batch-norm variance {} at channel {i} is negative",
                self.var[i]
            )));
        }
        Ok(())
    }

    /// Per-channel multiplier `gamma / sqrt(var + eps)`.
    pub fn scale(&self) -> Vec<f64> {
        self.gamma
            .iter()
            .zip(&self.var)
            .map(|(g, v)| g / (v + BN_EPSILON).sqrt())
            .collect()
    }
}

/// Applies inference-mode batch norm channel-wise.
pub fn batchnorm_forward(x: &Tensor, bn: &BatchNormParams) -> Result<Tensor> {
    if bn.channels() != x.channels() {
        return Err(Error::shape(
            "batch-norm channels",
            x.channels(),
            bn.channels(),
        ));
    }
    bn.validate()?;
    let scale = bn.scale();
    let plane = x.height() * x.width();
    Tensor::from_fn(x.shape(), |i| {
        let c = (i / plane) % bn.channels();
        scale[c] * (x.data()[i] - bn.mean[c]) + bn.beta[c]
    })
}

/// Clamps every element into `[T_min/T_q, T_max/T_q]`.
pub fn clamp(x: &Tensor, cfg: &VrConfig) -> Tensor {
    let (lo, hi) = (cfg.lower(), cfg.upper());
    x.map(|v| v.clamp(lo, hi))
        .expect("clamped values are finite")
}

/// `floor(x * T_q) / T_q`, snapping near-integers first.
pub fn quantize(x: &Tensor, cfg: &VrConfig) -> Tensor {
    let tq = cfg.t_q() as f64;
    x.map(|v| snapped_floor(v * tq) / tq)
        .expect("quantized values are finite")
}

/// Merges batch norm into the preceding layer's weights and bias.
///
/// `W' = s * W` per output channel and `b' = s * (b - mu) + beta`, with
/// `s = gamma / sqrt(var + eps)`. The output channel is the leading weight
/// dimension.
pub fn fold_batchnorm(
    weights: &Tensor,
    bias: &[f64],
    bn: &BatchNormParams,
) -> Result<(Tensor, Vec<f64>)> {
    bn.validate()?;
    let out = weights.shape()[0];
    if bn.channels() != out {
        return Err(Error::shape(
            "batch-norm channels vs weight rows",
            out,
            bn.channels(),
        ));
    }
    if bias.len() != out {
        return Err(Error::shape("bias length", out, bias.len()));
    }
    let scale = bn.scale();
    let row = weights.sample_len();
    let w = Tensor::from_fn(weights.shape(), |i| scale[i / row] * weights.data()[i])?;
    let b = (0..out)
        .map(|c| scale[c] * (bias[c] - bn.mean[c]) + bn.beta[c])
        .collect();
    Ok((w, b))
}

/// Runs the quantized ANN and returns every layer's output: clamped and
/// quantized activations for hidden layers, raw logits for the last.
pub fn ann_trace(net: &NetworkSpec, input: &Tensor, cfg: &VrConfig) -> Result<Vec<Tensor>> {
    if net.mode() != Mode::Ann {
        return Err(Error::Mode {
            expected: "ann",
            found: net.mode().name(),
        });
    }
    let last = net
        .layers()
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Unsupported("network has no layers".into()))?;
    let mut outputs = Vec::with_capacity(net.layers().len());
    let mut x = input.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        if layer.bn.is_some() {
            return Err(Error::Unsupported(format!(
                "layer {i} still carries batch-norm parameters; fold them first"
            )));
        }
        let z = layer.linear(&x)?;
        x = if i == last {
            z
        } else {
            quantize(&clamp(&z, cfg), cfg)
        };
        outputs.push(x.clone());
    }
    Ok(outputs)
}

/// Quantized-ANN forward pass returning the classifier's raw logits.
pub fn ann_forward(net: &NetworkSpec, input: &Tensor, cfg: &VrConfig) -> Result<Tensor> {
    Ok(ann_trace(net, input, cfg)?
        .pop()
        .expect("trace has one entry per layer"))
}
