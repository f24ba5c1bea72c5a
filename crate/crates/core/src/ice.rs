//! Input channel expansion.
//!
//! The raw input in `[0, 1]` is quantized at `T`, `T + 1` and `T - 1`
//! levels; the two neighbouring quantizations are remapped so that level
//! `t` reads `t / T`, and the three results are concatenated along the
//! channel axis. This is repeated `phi` times.

use log::warn;

use crate::annq::{snapped_floor, VrConfig};
use crate::engine::encode_input;
use crate::error::{Error, Result};
use crate::spike::SpikeTrain;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IceConfig {
    pub phi: usize,
    pub window: usize,
    /// Quantize iteration `c` at `T + c` / `T - c` instead of `T + 1` /
    /// `T - 1` every time. Off by default.
    pub varied_levels: bool,
}

impl IceConfig {
    pub fn new(phi: usize, window: usize) -> Result<Self> {
        let cfg = Self {
            phi,
            window,
            varied_levels: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi < 1 {
            return Err(Error::InvalidParameter(
                "ICE expansion factor must be >= 1".into(),
            ));
        }
        if self.window < 1 {
            return Err(Error::InvalidParameter("ICE window must be >= 1".into()));
        }
        Ok(())
    }

    /// Output channel count for `channels` input channels.
    pub fn out_channels(&self, channels: usize) -> usize {
        3 * self.phi * channels
    }
}

/// Integer level `floor(x * levels)`, remapped onto the `T` grid and
/// capped at `T` (only `x = 1` at `T + 1` levels reaches `T + 1`).
fn remapped_level(x: f64, levels: usize, window: usize) -> usize {
    let t = snapped_floor(x * levels as f64) as usize;
    t.min(window)
}

fn branch(x: &Tensor, levels: usize, window: usize) -> Result<Tensor> {
    let t = window as f64;
    x.map(|v| remapped_level(v, levels, window) as f64 / t)
}

/// Expands `C` channels to `3 * phi * C` channels on the grid
/// `{0, 1/T, ..., 1}`.
pub fn ice_expand(x: &Tensor, cfg: &IceConfig) -> Result<Tensor> {
    cfg.validate()?;
    if let Some(i) = x.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::OutOfDomain {
            value: x.data()[i],
            index: i,
            domain: "[0, 1]",
        });
    }
    let window = cfg.window;
    let mut parts = Vec::with_capacity(3 * cfg.phi);
    for c in 1..=cfg.phi {
        let step = if cfg.varied_levels { c } else { 1 };
        parts.push(branch(x, window, window)?);
        parts.push(branch(x, window + step, window)?);
        if window > step {
            parts.push(branch(x, window - step, window)?);
        } else {
            warn!(
                "ICE branch at {} levels is undefined for T = {window}; emitting zeros",
                window as isize - step as isize
            );
            parts.push(Tensor::zeros(x.shape()));
        }
    }
    Tensor::concat_channels(&parts)
}

/// ICE followed by rate encoding of every expanded channel.
pub fn ice_then_encode(x: &Tensor, cfg: &IceConfig, vr: &VrConfig) -> Result<SpikeTrain> {
    encode_input(&ice_expand(x, cfg)?, vr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new([1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn worked_traces() {
        let cfg = IceConfig::new(1, 2).unwrap();
        assert_eq!(
            ice_expand(&scalar(0.5), &cfg).unwrap().data(),
            &[0.5, 0.5, 0.0]
        );
        assert_eq!(
            ice_expand(&scalar(0.4), &cfg).unwrap().data(),
            &[0.0, 0.5, 0.0]
        );
    }

    #[test]
    fn rails() {
        let cfg = IceConfig::new(2, 4).unwrap();
        let zero = ice_expand(&scalar(0.0), &cfg).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        // the T - 1 branch tops out at (T - 1) / T after remapping
        let one = ice_expand(&scalar(1.0), &cfg).unwrap();
        assert_eq!(one.data(), &[1.0, 1.0, 0.75, 1.0, 1.0, 0.75]);
    }

    #[test]
    fn encode_composition() {
        let cfg = IceConfig::new(1, 2).unwrap();
        let vr = VrConfig::new(2, 0, 2).unwrap();
        let train = ice_then_encode(&scalar(0.5), &cfg, &vr).unwrap();
        assert_eq!(train.counts(), vec![1, 1, 0]);
    }

    #[test]
    fn unit_window_zeroes_lower_branch() {
        let cfg = IceConfig::new(1, 1).unwrap();
        let y = ice_expand(&scalar(0.6), &cfg).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = IceConfig::new(1, 4).unwrap();
        assert!(ice_expand(&scalar(1.5), &cfg).is_err());
        assert!(ice_expand(&scalar(-0.1), &cfg).is_err());
        assert!(IceConfig::new(0, 4).is_err());
    }

    #[test]
    fn varied_levels_changes_later_blocks() {
        let mut cfg = IceConfig::new(2, 4).unwrap();
        cfg.varied_levels = true;
        let y = ice_expand(&scalar(0.45), &cfg).unwrap();
        // block 1: 4, 5, 3 levels; block 2: 4, 6, 2 levels
        assert_eq!(y.data(), &[0.25, 0.5, 0.25, 0.25, 0.5, 0.0]);
    }
}
