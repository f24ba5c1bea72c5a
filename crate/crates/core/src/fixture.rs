//! Deterministic small networks and on-grid inputs for tests and demos.
//!
//! Weights are uniform in `±0.5/sqrt(fan_in)` and biases sit inside the
//! clamp range, so hidden pre-activations exercise interior grid points
//! rather than just the rails.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annq::{BatchNormParams, VrConfig};
use crate::error::{Error, Result};
use crate::network::{Layer, Mode, NetworkSpec};
use crate::tensor::{LayerGeometry, Tensor};

/// Spatial extent of fixture inputs.
pub const INPUT_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// dense -> dense
    Dense,
    /// conv -> avgpool -> dense
    Conv,
    /// conv -> conv -> avgpool -> dense
    VggTiny,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Dense, Preset::Conv, Preset::VggTiny];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dense => "dense",
            Preset::Conv => "conv",
            Preset::VggTiny => "vgg-tiny",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture preset {s:?}")))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FixtureOptions {
    pub preset: Preset,
    pub in_channels: usize,
    pub classes: usize,
    /// Attach raw (unfolded) batch norm to every conv/dense hidden layer.
    pub with_bn: bool,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            preset: Preset::VggTiny,
            in_channels: 1,
            classes: 10,
            with_bn: false,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn random_layer(
    rng: &mut ChaCha8Rng,
    geometry: LayerGeometry,
    cfg: &VrConfig,
    hidden: bool,
    with_bn: bool,
) -> Layer {
    let shape = geometry.weight_shape();
    let fan_in = shape[1] * shape[2] * shape[3];
    let bound = 0.5 / (fan_in as f64).sqrt();
    let weights = Tensor::from_fn(shape, |_| uniform(rng, -bound, bound)).expect("finite");
    let (lo, hi) = (cfg.lower(), cfg.upper());
    let bias = (0..geometry.out_channels)
        .map(|_| {
            if hidden {
                uniform(rng, lo, 0.5 * (lo + hi))
            } else {
                uniform(rng, -0.1, 0.1)
            }
        })
        .collect();
    let mut layer = Layer::new(geometry, weights, bias);
    if hidden && with_bn {
        let c = geometry.out_channels;
        let mut v = |lo: f64, hi: f64| (0..c).map(|_| uniform(rng, lo, hi)).collect::<Vec<_>>();
        let gamma = v(0.7, 1.3);
        let beta = v(-0.05, 0.05);
        let mean = v(-0.05, 0.05);
        let var = v(0.6, 1.4);
        layer.bn = Some(BatchNormParams::new(gamma, beta, mean, var).expect("valid bn"));
    }
    layer
}

/// A seeded ANN-mode network for `cfg`. Convolutions use padding 1 when
/// `T_min = 0` and no padding otherwise.
pub fn make_network(seed: u64, cfg: VrConfig, opts: FixtureOptions) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = if cfg.t_min() == 0 { 1 } else { 0 };
    let c = opts.in_channels;
    let s = INPUT_SIZE;
    let mut geos: Vec<(LayerGeometry, bool)> = Vec::new();
    match opts.preset {
        Preset::Dense => {
            geos.push((LayerGeometry::dense(c * s * s, 16), false));
        }
        Preset::Conv => {
            geos.push((LayerGeometry::conv2d(c, 8, 3, 1, pad), false));
            geos.push((LayerGeometry::avgpool(8, 2, 2), true));
        }
        Preset::VggTiny => {
            geos.push((LayerGeometry::conv2d(c, 8, 3, 1, pad), false));
            geos.push((LayerGeometry::conv2d(8, 16, 3, 1, pad), false));
            geos.push((LayerGeometry::avgpool(16, 2, 2), true));
        }
    }
    let mut shape = [1, c, s, s];
    let mut layers = Vec::new();
    for (g, is_pool) in geos {
        shape = g
            .output_shape(shape)
            .expect("fixture geometry is consistent");
        layers.push(if is_pool {
            Layer::avgpool(g.in_channels, g.kernel, g.stride)
        } else {
            random_layer(&mut rng, g, &cfg, true, opts.with_bn)
        });
    }
    let features = shape[1] * shape[2] * shape[3];
    layers.push(random_layer(
        &mut rng,
        LayerGeometry::dense(features, opts.classes),
        &cfg,
        false,
        false,
    ));
    NetworkSpec::new(layers, cfg, Mode::Ann).expect("fixture network is valid")
}

/// `n` seeded inputs with every element on the VR grid.
pub fn make_inputs(seed: u64, n: usize, channels: usize, cfg: &VrConfig) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Tensor::from_fn([n, channels, INPUT_SIZE, INPUT_SIZE], |_| {
        cfg.grid_value(rng.gen_range(cfg.t_min()..=cfg.t_max()))
    })
    .expect("grid values are finite")
}

/// `n` seeded raw inputs uniform in `[0, 1]` (for input channel expansion).
pub fn make_raw_inputs(seed: u64, n: usize, channels: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    Tensor::from_fn([n, channels, INPUT_SIZE, INPUT_SIZE], |_| {
        rng.gen_range(0.0..=1.0)
    })
    .expect("finite")
}
