//! Dense rank-4 tensors in row-major `(N, C, H, W)` layout and the linear
//! kernels shared by the quantized ANN and the spike engine.
//!
//! Every kernel accumulates in `f64` in a fixed order per output element, so
//! the parallel split over `(batch, out-channel)` planes never changes a bit
//! of the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor: batch, channels, height, width.
pub type Shape = [usize; 4];

pub(crate) fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

pub(crate) fn fmt_shape(shape: &Shape) -> String {
    format!("({}, {}, {}, {})", shape[0], shape[1], shape[2], shape[3])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a length mismatch or any non-finite value.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != numel(&shape) {
            return Err(Error::shape(
                "tensor data length",
                numel(&shape),
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite tensor element {} at index {i}",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            shape,
            data: vec![value; numel(&shape)],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let data = (0..numel(&shape)).map(&mut f).collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Number of elements in one batch sample (`C * H * W`).
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    /// Channel of a flat element index.
    #[inline]
    pub fn channel_of(&self, flat: usize) -> usize {
        (flat / (self.shape[2] * self.shape[3])) % self.shape[1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "elementwise operand",
                fmt_shape(&self.shape),
                fmt_shape(&other.shape),
            ));
        }
        Self::new(
            self.shape,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Same data viewed under a different shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if numel(&shape) != self.data.len() {
            return Err(Error::shape(
                "reshape element count",
                self.data.len(),
                numel(&shape),
            ));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Splits the batch dimension into single-sample tensors.
    pub fn split_batch(&self) -> Vec<Tensor> {
        let len = self.sample_len();
        (0..self.batch())
            .map(|n| Tensor {
                shape: [1, self.shape[1], self.shape[2], self.shape[3]],
                data: self.data[n * len..(n + 1) * len].to_vec(),
            })
            .collect()
    }

    /// Concatenates tensors along the batch dimension.
    pub fn concat_batch(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot concatenate zero tensors".into()))?;
        let mut shape = first.shape;
        shape[0] = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::shape(
                    "batch concatenation",
                    fmt_shape(&first.shape),
                    fmt_shape(&p.shape),
                ));
            }
            shape[0] += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }

    /// Concatenates tensors along the channel dimension.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot concatenate zero tensors".into()))?;
        let [n, _, h, w] = first.shape;
        for p in parts {
            if p.shape[0] != n || p.shape[2] != h || p.shape[3] != w {
                return Err(Error::shape(
                    "channel concatenation",
                    fmt_shape(&first.shape),
                    fmt_shape(&p.shape),
                ));
            }
        }
        let c_total: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut data = Vec::with_capacity(n * c_total * h * w);
        for b in 0..n {
            for p in parts {
                let len = p.sample_len();
                data.extend_from_slice(&p.data[b * len..(b + 1) * len]);
            }
        }
        Ok(Tensor {
            shape: [n, c_total, h, w],
            data,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv2d,
    Dense,
    AvgPool,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Dense => "dense",
            LayerKind::AvgPool => "avgpool",
        }
    }
}

/// Static shape description of one layer.
///
/// For `Dense`, `in_channels` is the flattened feature count and
/// kernel/stride are 1. For `AvgPool`, `kernel` is the pooling window and
/// the channel counts are equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerGeometry {
    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            kind: LayerKind::Conv2d,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_channels: in_features,
            out_channels: out_features,
            kernel: 1,
            stride: 1,
            padding: 0,
        }
    }

    pub fn avgpool(channels: usize, window: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::AvgPool,
            in_channels: channels,
            out_channels: channels,
            kernel: window,
            stride,
            padding: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel < 1 || self.stride < 1 {
            return Err(Error::InvalidParameter(format!(
                "{} geometry needs kernel >= 1 and stride >= 1 (kernel={}, stride={})",
                self.kind.name(),
                self.kernel,
                self.stride
            )));
        }
        if self.in_channels < 1 || self.out_channels < 1 {
            return Err(Error::InvalidParameter(format!(
                "{} geometry needs at least one input and output channel",
                self.kind.name()
            )));
        }
        match self.kind {
            LayerKind::Dense if self.kernel != 1 || self.stride != 1 || self.padding != 0 => {
                Err(Error::InvalidParameter(
                    "dense geometry must have kernel 1, stride 1, padding 0".into(),
                ))
            }
            LayerKind::AvgPool if self.in_channels != self.out_channels || self.padding != 0 => {
                Err(Error::InvalidParameter(
                    "avgpool geometry must preserve channels and use no padding".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Expected weight tensor shape for this geometry.
    ///
    /// Average pooling carries a single scalar gain, stored as a `1x1x1x1`
    /// tensor, so it scales like any other weight under conversion.
    pub fn weight_shape(&self) -> Shape {
        match self.kind {
            LayerKind::Conv2d => [
                self.out_channels,
                self.in_channels,
                self.kernel,
                self.kernel,
            ],
            LayerKind::Dense => [self.out_channels, self.in_channels, 1, 1],
            LayerKind::AvgPool => [1, 1, 1, 1],
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let [n, c, h, w] = input;
        match self.kind {
            LayerKind::Dense => {
                if c * h * w != self.in_channels {
                    return Err(Error::shape(
                        "dense input features",
                        self.in_channels,
                        c * h * w,
                    ));
                }
                Ok([n, self.out_channels, 1, 1])
            }
            LayerKind::Conv2d | LayerKind::AvgPool => {
                if c != self.in_channels {
                    return Err(Error::shape(
                        format!("{} input channels", self.kind.name()),
                        self.in_channels,
                        c,
                    ));
                }
                let out_h = sliding_extent("height", h, self.kernel, self.stride, self.padding)?;
                let out_w = sliding_extent("width", w, self.kernel, self.stride, self.padding)?;
                Ok([n, self.out_channels, out_h, out_w])
            }
        }
    }
}

fn sliding_extent(
    dim: &str,
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    let padded = extent + 2 * padding;
    if kernel > padded {
        return Err(Error::shape(
            format!("input {dim} (with padding {padding}) for window {kernel}"),
            format!(">= {kernel}"),
            padded,
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// 2-D convolution with zero padding.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f64],
    geometry: &LayerGeometry,
) -> Result<Tensor> {
    if geometry.kind != LayerKind::Conv2d {
        return Err(Error::InvalidParameter(format!(
            "conv2d_forward called with {} geometry",
            geometry.kind.name()
        )));
    }
    geometry.validate()?;
    let expected_w = geometry.weight_shape();
    if weights.shape() != expected_w {
        let dim = [
            "out_channels",
            "in_channels",
            "kernel height",
            "kernel width",
        ][(0..4)
            .find(|&i| weights.shape()[i] != expected_w[i])
            .unwrap_or(0)];
        return Err(Error::shape(
            format!("conv2d weights ({dim})"),
            fmt_shape(&expected_w),
            fmt_shape(&weights.shape()),
        ));
    }
    if bias.len() != geometry.out_channels {
        return Err(Error::shape(
            "conv2d bias length",
            geometry.out_channels,
            bias.len(),
        ));
    }
    let out_shape = geometry.output_shape(input.shape())?;
    let [_, c_in, h, w] = input.shape();
    let [_, c_out, out_h, out_w] = out_shape;
    let (k, stride, pad) = (geometry.kernel, geometry.stride, geometry.padding as isize);
    let plane = out_h * out_w;
    let x = input.data();
    let wt = weights.data();

    let mut out = vec![0.0; numel(&out_shape)];
    out.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let n = idx / c_out;
            let oc = idx % c_out;
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = 0.0;
                    for ic in 0..c_in {
                        let x_base = (n * c_in + ic) * h * w;
                        let w_base = (oc * c_in + ic) * k * k;
                        for kh in 0..k {
                            let ih = (oh * stride) as isize + kh as isize - pad;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            for kw in 0..k {
                                let iw = (ow * stride) as isize + kw as isize - pad;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                acc += wt[w_base + kh * k + kw]
                                    * x[x_base + ih as usize * w + iw as usize];
                            }
                        }
                    }
                    dst[oh * out_w + ow] = acc + bias[oc];
                }
            }
        });
    Tensor::new(out_shape, out)
}

/// Fully connected layer over the flattened `C*H*W` features of each sample.
/// Weights are `(out, in, 1, 1)`; the output is `(N, out, 1, 1)`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let out_features = weights.shape()[0];
    let in_features = weights.sample_len();
    if input.sample_len() != in_features {
        return Err(Error::shape(
            "dense input features (weight columns)",
            in_features,
            input.sample_len(),
        ));
    }
    if bias.len() != out_features {
        return Err(Error::shape("dense bias length", out_features, bias.len()));
    }
    let n = input.batch();
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; n * out_features];
    out.par_chunks_mut(out_features)
        .enumerate()
        .for_each(|(b, dst)| {
            let row_in = &x[b * in_features..(b + 1) * in_features];
            for (o, d) in dst.iter_mut().enumerate() {
                let row_w = &wt[o * in_features..(o + 1) * in_features];
                let acc: f64 = row_w.iter().zip(row_in).map(|(a, b)| a * b).sum();
                *d = acc + bias[o];
            }
        });
    Tensor::new([n, out_features, 1, 1], out)
}

/// Non-overlapping or strided mean pooling without padding.
pub fn avgpool_forward(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let geometry = LayerGeometry::avgpool(input.channels().max(1), window, stride);
    geometry.validate()?;
    if input.channels() == 0 {
        return Tensor::new(input.shape(), Vec::new());
    }
    let out_shape = geometry.output_shape(input.shape())?;
    let [_, _, h, w] = input.shape();
    let [_, _, out_h, out_w] = out_shape;
    let plane = out_h * out_w;
    let denom = (window * window) as f64;
    let x = input.data();
    let mut out = vec![0.0; numel(&out_shape)];
    out.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let base = idx * h * w;
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = 0.0;
                    for kh in 0..window {
                        for kw in 0..window {
                            acc += x[base + (oh * stride + kh) * w + ow * stride + kw];
                        }
                    }
                    dst[oh * out_w + ow] = acc / denom;
                }
            }
        });
    Tensor::new(out_shape, out)
}
