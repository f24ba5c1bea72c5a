//! Layered network description shared by the ANN and SNN paths.

use crate::annq::{fold_batchnorm, BatchNormParams, VrConfig};
use crate::error::{Error, Result};
use crate::tensor::{
    avgpool_forward, conv2d_forward, dense_forward, fmt_shape, LayerGeometry, LayerKind, Shape,
    Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Ann,
    Snn,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ann => "ann",
            Mode::Snn => "snn",
        }
    }
}

/// One linear layer plus the per-channel parameters the SNN needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub geometry: LayerGeometry,
    /// `(out, in, k, k)` for conv, `(out, in, 1, 1)` for dense, a `1x1x1x1`
    /// gain for average pooling.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    /// Raw batch-norm parameters, present until folded.
    pub bn: Option<BatchNormParams>,
    /// Per-output-channel firing thresholds (SNN mode, spiking layers).
    pub thresholds: Option<Vec<f64>>,
    /// Per-output-channel constant added to the membrane once per time step.
    pub step_constant: Option<Vec<f64>>,
}

impl Layer {
    pub fn new(geometry: LayerGeometry, weights: Tensor, bias: Vec<f64>) -> Self {
        Self {
            geometry,
            weights,
            bias,
            bn: None,
            thresholds: None,
            step_constant: None,
        }
    }

    /// Average pooling with unit gain and zero bias.
    pub fn avgpool(channels: usize, window: usize, stride: usize) -> Self {
        Self::new(
            LayerGeometry::avgpool(channels, window, stride),
            Tensor::filled([1, 1, 1, 1], 1.0),
            vec![0.0; channels],
        )
    }

    pub fn out_channels(&self) -> usize {
        self.geometry.out_channels
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        self.geometry.validate()?;
        let what = |s: &str| format!("layer {index} {s}");
        let expected = self.geometry.weight_shape();
        if self.weights.shape() != expected {
            return Err(Error::shape(
                what("weights"),
                fmt_shape(&expected),
                fmt_shape(&self.weights.shape()),
            ));
        }
        let out = self.out_channels();
        if self.bias.len() != out {
            return Err(Error::shape(what("bias"), out, self.bias.len()));
        }
        if let Some(bn) = &self.bn {
            if self.geometry.kind == LayerKind::AvgPool {
                return Err(Error::Unsupported(format!(
                    "layer {index}: batch norm after average pooling"
                )));
            }
            bn.validate()?;
            if bn.channels() != out {
                return Err(Error::shape(
                    what("batch-norm channels"),
                    out,
                    bn.channels(),
                ));
            }
        }
        if let Some(th) = &self.thresholds {
            if th.len() != out {
                return Err(Error::shape(what("thresholds"), out, th.len()));
            }
            if let Some(c) = th.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "layer {index} threshold {} at channel {c} must be positive",
                    th[c]
                )));
            }
        }
        if let Some(sc) = &self.step_constant {
            if sc.len() != out {
                return Err(Error::shape(what("step constants"), out, sc.len()));
            }
        }
        Ok(())
    }

    /// The layer's affine map (no activation).
    pub fn linear(&self, input: &Tensor) -> Result<Tensor> {
        self.linear_with(input, &self.weights, &self.bias)
    }

    /// The layer's affine map with substituted weights and per-channel bias.
    pub fn linear_with(&self, input: &Tensor, weights: &Tensor, bias: &[f64]) -> Result<Tensor> {
        apply_linear(&self.geometry, input, weights, bias)
    }

    /// Sum of the weights feeding each output channel.
    pub fn fan_in_weight_sums(&self) -> Vec<f64> {
        weight_row_sums(&self.weights, self.out_channels())
    }
}

/// Affine map of a layer geometry: convolution, dense product, or
/// `gain * avgpool(x) + bias` for pooling.
pub fn apply_linear(
    geometry: &LayerGeometry,
    input: &Tensor,
    weights: &Tensor,
    bias: &[f64],
) -> Result<Tensor> {
    match geometry.kind {
        LayerKind::Conv2d => conv2d_forward(input, weights, bias, geometry),
        LayerKind::Dense => {
            geometry.output_shape(input.shape())?;
            dense_forward(input, weights, bias)
        }
        LayerKind::AvgPool => {
            if input.channels() != geometry.in_channels {
                return Err(Error::shape(
                    "avgpool input channels",
                    geometry.in_channels,
                    input.channels(),
                ));
            }
            if bias.len() != input.channels() {
                return Err(Error::shape("avgpool bias", input.channels(), bias.len()));
            }
            let gain = weights.data()[0];
            let pooled = avgpool_forward(input, geometry.kernel, geometry.stride)?;
            let plane = pooled.height() * pooled.width();
            let c = pooled.channels();
            Tensor::from_fn(pooled.shape(), |i| {
                gain * pooled.data()[i] + bias[(i / plane) % c]
            })
        }
    }
}

/// Per-output-channel weight sums; a single-row tensor (pooling gain)
/// broadcasts to every channel.
pub(crate) fn weight_row_sums(weights: &Tensor, out_channels: usize) -> Vec<f64> {
    let rows = weights.shape()[0];
    let row = weights.sample_len();
    let sums: Vec<f64> = (0..rows)
        .map(|r| weights.data()[r * row..(r + 1) * row].iter().sum())
        .collect();
    if rows == 1 && out_channels > 1 {
        vec![sums[0]; out_channels]
    } else {
        sums
    }
}

/// Ordered layer list with its quantization config. The last layer is the
/// classifier: it never clamps (ANN) or fires (SNN).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<Layer>,
    cfg: VrConfig,
    mode: Mode,
}

impl NetworkSpec {
    pub fn new(layers: Vec<Layer>, cfg: VrConfig, mode: Mode) -> Result<Self> {
        let net = Self { layers, cfg, mode };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Unsupported("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            if self.mode == Mode::Snn {
                if layer.step_constant.is_none() {
                    return Err(Error::format(
                        "network",
                        format!("SNN layer {i} lacks step constants"),
                    ));
                }
                if i + 1 < self.layers.len() && layer.thresholds.is_none() {
                    return Err(Error::format(
                        "network",
                        format!("SNN spiking layer {i} lacks thresholds"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn cfg(&self) -> VrConfig {
        self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Indices of the spiking (non-classifier) layers.
    pub fn spiking_layers(&self) -> std::ops::Range<usize> {
        0..self.layers.len() - 1
    }

    /// Output shape of every layer for a given input shape.
    pub fn output_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut shape = input;
        self.layers
            .iter()
            .map(|l| {
                shape = l.geometry.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }

    /// Folds every layer's batch norm into its weights and bias.
    pub fn fold_batchnorm(&self) -> Result<Self> {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let Some(bn) = layer.bn.take() {
                let (w, b) = fold_batchnorm(&layer.weights, &layer.bias, &bn)?;
                layer.weights = w;
                layer.bias = b;
            }
        }
        Ok(out)
    }

    pub(crate) fn into_snn(layers: Vec<Layer>, cfg: VrConfig) -> Result<Self> {
        Self::new(layers, cfg, Mode::Snn)
    }
}
