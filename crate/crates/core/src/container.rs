//! On-disk network and tensor containers.
//!
//! A container is a TOML manifest plus one blob of little-endian `f32`
//! values in row-major order. The manifest names the blob (relative to the
//! manifest's directory) and addresses every parameter by byte offset and
//! element count. Per-channel thresholds and step constants live in the
//! manifest as full-precision reals.
//!
//! Tensors are stored with `f64` precision in memory and rounded to `f32`
//! on write; a read/write cycle is therefore bit-exact on the blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annq::{BatchNormParams, VrConfig};
use crate::error::{Error, Result};
use crate::network::{Layer, Mode, NetworkSpec};
use crate::tensor::{LayerGeometry, LayerKind, Shape, Tensor};

pub const NETWORK_FORMAT: &str = "spikeforge-network";
pub const TENSOR_FORMAT: &str = "spikeforge-tensor";
pub const MANIFEST_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    /// Byte offset into the blob.
    pub offset: u64,
    /// Number of `f32` elements.
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfgEntry {
    pub t_q: u32,
    pub t_min: u32,
    pub t_max: u32,
    /// Informational; recomputed from the triple on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnEntry {
    pub gamma: BlobRef,
    pub beta: BlobRef,
    pub mean: BlobRef,
    pub var: BlobRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: BlobRef,
    pub bias: BlobRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<BnEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_constant: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub format: String,
    pub version: String,
    pub mode: String,
    pub blob: String,
    pub cfg: CfgEntry,
    pub layers: Vec<LayerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub format: String,
    pub version: String,
    pub shape: [usize; 4],
    pub blob: String,
    /// Optional CSV sidecar with one integer class label per sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
}

struct BlobWriter {
    bytes: Vec<u8>,
}

impl BlobWriter {
    fn push(&mut self, values: &[f64]) -> BlobRef {
        let offset = self.bytes.len() as u64;
        for &v in values {
            self.bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        BlobRef {
            offset,
            len: values.len() as u64,
        }
    }
}

fn read_blob(blob: &[u8], r: &BlobRef, what: &str) -> Result<Vec<f64>> {
    let bad = |reason: String| Error::format("network container", format!("{what}: {reason}"));
    if !r.offset.is_multiple_of(4) {
        return Err(bad(format!("offset {} is not 4-byte aligned", r.offset)));
    }
    let end = r
        .len
        .checked_mul(4)
        .and_then(|n| n.checked_add(r.offset))
        .ok_or_else(|| bad("offset overflow".into()))?;
    if end > blob.len() as u64 {
        return Err(bad(format!(
            "range {}..{end} outside blob of {} bytes",
            r.offset,
            blob.len()
        )));
    }
    let values: Vec<f64> = blob[r.offset as usize..end as usize]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok(values)
}

fn blob_path(manifest: &Path, blob: &str) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(blob)
}

fn default_blob_name(manifest: &Path) -> Result<String> {
    let stem = manifest
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::InvalidParameter(format!("bad manifest path {}", manifest.display()))
        })?;
    Ok(format!("{stem}.bin"))
}

/// Manifest and blob bytes for a network.
pub fn encode_network(net: &NetworkSpec, blob_name: &str) -> (NetworkManifest, Vec<u8>) {
    let mut blob = BlobWriter { bytes: Vec::new() };
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let g = l.geometry;
            LayerEntry {
                kind: g.kind,
                in_channels: g.in_channels,
                out_channels: g.out_channels,
                kernel: g.kernel,
                stride: g.stride,
                padding: g.padding,
                weights: blob.push(l.weights.data()),
                bias: blob.push(&l.bias),
                bn: l.bn.as_ref().map(|bn| BnEntry {
                    gamma: blob.push(&bn.gamma),
                    beta: blob.push(&bn.beta),
                    mean: blob.push(&bn.mean),
                    var: blob.push(&bn.var),
                }),
                thresholds: l.thresholds.clone(),
                step_constant: l.step_constant.clone(),
            }
        })
        .collect();
    let cfg = net.cfg();
    let manifest = NetworkManifest {
        format: NETWORK_FORMAT.into(),
        version: MANIFEST_VERSION.into(),
        mode: net.mode().name().into(),
        blob: blob_name.into(),
        cfg: CfgEntry {
            t_q: cfg.t_q(),
            t_min: cfg.t_min(),
            t_max: cfg.t_max(),
            theta: Some(cfg.theta()),
        },
        layers,
    };
    (manifest, blob.bytes)
}

/// Rebuilds a network from a parsed manifest and its blob.
pub fn decode_network(manifest: &NetworkManifest, blob: &[u8]) -> Result<NetworkSpec> {
    if manifest.format != NETWORK_FORMAT {
        return Err(Error::format(
            "network container",
            format!("unexpected format tag {:?}", manifest.format),
        ));
    }
    check_version(&manifest.version, "network container")?;
    let mode = match manifest.mode.as_str() {
        "ann" => Mode::Ann,
        "snn" => Mode::Snn,
        other => {
            return Err(Error::format(
                "network container",
                format!("unknown mode {other:?}"),
            ))
        }
    };
    let c = &manifest.cfg;
    let cfg = VrConfig::new(c.t_q, c.t_min, c.t_max)?;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, e) in manifest.layers.iter().enumerate() {
        let geometry = LayerGeometry {
            kind: e.kind,
            in_channels: e.in_channels,
            out_channels: e.out_channels,
            kernel: e.kernel,
            stride: e.stride,
            padding: e.padding,
        };
        geometry
            .validate()
            .map_err(|err| Error::format("network container", format!("layer {i}: {err}")))?;
        let shape: Shape = geometry.weight_shape();
        let weights = read_blob(blob, &e.weights, &format!("layer {i} weights"))?;
        if weights.len() != shape.iter().product::<usize>() {
            return Err(Error::format(
                "network container",
                format!(
                    "layer {i} weights hold {} values, geometry needs {}",
                    weights.len(),
                    shape.iter().product::<usize>()
                ),
            ));
        }
        let mut layer = Layer::new(
            geometry,
            Tensor::new(shape, weights)?,
            read_blob(blob, &e.bias, &format!("layer {i} bias"))?,
        );
        if let Some(bn) = &e.bn {
            let part = |r: &BlobRef, n: &str| read_blob(blob, r, &format!("layer {i} bn {n}"));
            layer.bn = Some(BatchNormParams::new(
                part(&bn.gamma, "gamma")?,
                part(&bn.beta, "beta")?,
                part(&bn.mean, "mean")?,
                part(&bn.var, "var")?,
            )?);
        }
        layer.thresholds = e.thresholds.clone();
        layer.step_constant = e.step_constant.clone();
        layers.push(layer);
    }
    NetworkSpec::new(layers, cfg, mode).map_err(|err| match err {
        Error::Io(_) | Error::Format { .. } => err,
        other => Error::format("network container", other.to_string()),
    })
}

fn check_version(version: &str, kind: &'static str) -> Result<()> {
    let major = version.split('.').next().unwrap_or("");
    if major != "1" {
        return Err(Error::format(
            kind,
            format!("unsupported version {version:?}"),
        ));
    }
    Ok(())
}

fn parse_manifest<T: for<'de> Deserialize<'de>>(path: &Path, kind: &'static str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::format(kind, e.to_string()))
}

fn render_manifest<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("manifest types serialize to TOML")
}

/// Writes `<stem>.toml`-style manifest at `path` and its `<stem>.bin` blob
/// next to it.
pub fn write_network(net: &NetworkSpec, path: &Path) -> Result<()> {
    let blob_name = default_blob_name(path)?;
    let (manifest, blob) = encode_network(net, &blob_name);
    fs::write(blob_path(path, &blob_name), blob)?;
    fs::write(path, render_manifest(&manifest))?;
    Ok(())
}

pub fn read_network(path: &Path) -> Result<NetworkSpec> {
    let manifest: NetworkManifest = parse_manifest(path, "network container")?;
    let blob = fs::read(blob_path(path, &manifest.blob))?;
    decode_network(&manifest, &blob)
}

pub fn read_network_manifest(path: &Path) -> Result<NetworkManifest> {
    parse_manifest(path, "network container")
}

/// Writes a tensor manifest and blob; `labels` adds a CSV sidecar.
pub fn write_tensor(tensor: &Tensor, path: &Path, labels: Option<&[usize]>) -> Result<()> {
    let blob_name = default_blob_name(path)?;
    let mut blob = BlobWriter { bytes: Vec::new() };
    blob.push(tensor.data());
    fs::write(blob_path(path, &blob_name), blob.bytes)?;
    let labels_name = match labels {
        Some(labels) => {
            let name = format!(
                "{}.labels.csv",
                path.file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("tensor")
            );
            let mut text = String::from("label\n");
            for l in labels {
                text.push_str(&format!("{l}\n"));
            }
            fs::write(blob_path(path, &name), text)?;
            Some(name)
        }
        None => None,
    };
    let manifest = TensorManifest {
        format: TENSOR_FORMAT.into(),
        version: MANIFEST_VERSION.into(),
        shape: tensor.shape(),
        blob: blob_name,
        labels: labels_name,
    };
    fs::write(path, render_manifest(&manifest))?;
    Ok(())
}

/// A tensor file: the data plus optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub tensor: Tensor,
    pub labels: Option<Vec<usize>>,
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    let manifest: TensorManifest = parse_manifest(path, "tensor file")?;
    if manifest.format != TENSOR_FORMAT {
        return Err(Error::format(
            "tensor file",
            format!("unexpected format tag {:?}", manifest.format),
        ));
    }
    check_version(&manifest.version, "tensor file")?;
    let blob = fs::read(blob_path(path, &manifest.blob))?;
    let len = manifest
        .shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format("tensor file", "shape overflows"))?;
    if blob.len() != len * 4 {
        return Err(Error::format(
            "tensor file",
            format!("blob has {} bytes, shape needs {}", blob.len(), len * 4),
        ));
    }
    let data = read_blob(
        &blob,
        &BlobRef {
            offset: 0,
            len: len as u64,
        },
        "tensor",
    )
    .map_err(|e| Error::format("tensor file", e.to_string()))?;
    let tensor = Tensor::new(manifest.shape, data)?;
    let labels = match &manifest.labels {
        Some(name) => Some(read_labels(&blob_path(path, name), tensor.batch())?),
        None => None,
    };
    Ok(TensorFile { tensor, labels })
}

fn read_labels(path: &Path, expected: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "label") {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        labels.push(field.parse::<usize>().map_err(|_| {
            Error::format(
                "label file",
                format!("line {}: {line:?} is not a class index", i + 1),
            )
        })?);
    }
    if labels.len() != expected {
        return Err(Error::format(
            "label file",
            format!("{} labels for {expected} samples", labels.len()),
        ));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net() -> NetworkSpec {
        let cfg = VrConfig::new(8, 0, 6).unwrap();
        let conv = LayerGeometry::conv2d(1, 2, 3, 1, 1);
        let mut l0 = Layer::new(
            conv,
            Tensor::from_fn(conv.weight_shape(), |i| i as f64 * 0.125 - 1.0).unwrap(),
            vec![0.5, -0.25],
        );
        l0.bn = Some(
            BatchNormParams::new(
                vec![1.5, 0.5],
                vec![0.0, 0.25],
                vec![0.125, -0.5],
                vec![1.0, 2.0],
            )
            .unwrap(),
        );
        let pool = Layer::avgpool(2, 2, 2);
        let head = Layer::new(
            LayerGeometry::dense(8, 3),
            Tensor::from_fn([3, 8, 1, 1], |i| (i % 5) as f64 * 0.5).unwrap(),
            vec![0.0, 1.0, -1.0],
        );
        NetworkSpec::new(vec![l0, pool, head], cfg, Mode::Ann).unwrap()
    }

    #[test]
    fn network_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.toml");
        let net = small_net();
        write_network(&net, &path).unwrap();
        let back = read_network(&path).unwrap();
        assert_eq!(back, net);
        let first = fs::read(dir.path().join("net.bin")).unwrap();
        write_network(&back, &path).unwrap();
        assert_eq!(fs::read(dir.path().join("net.bin")).unwrap(), first);
    }

    #[test]
    fn manifest_is_versioned_text() {
        let (manifest, blob) = encode_network(&small_net(), "x.bin");
        let text = render_manifest(&manifest);
        assert!(text.contains("version = \"1.0\""));
        assert!(text.contains("kind = \"avgpool\""));
        assert_eq!(blob.len() % 4, 0);
    }

    #[test]
    fn rejects_out_of_bounds_blob() {
        let (mut manifest, blob) = encode_network(&small_net(), "x.bin");
        manifest.layers[2].weights.offset = blob.len() as u64;
        assert!(matches!(
            decode_network(&manifest, &blob),
            Err(Error::Format { .. })
        ));
        let (mut manifest, blob) = encode_network(&small_net(), "x.bin");
        manifest.version = "2.0".into();
        assert!(decode_network(&manifest, &blob).is_err());
        let (mut manifest, blob) = encode_network(&small_net(), "x.bin");
        manifest.mode = "snn".into();
        assert!(matches!(
            decode_network(&manifest, &blob),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn tensor_round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.toml");
        let t = Tensor::from_fn([2, 1, 2, 2], |i| i as f64 / 8.0).unwrap();
        write_tensor(&t, &path, Some(&[3, 1])).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.tensor, t);
        assert_eq!(back.labels, Some(vec![3, 1]));
    }
}
