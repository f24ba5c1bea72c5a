//! Channel-wise threshold training.
//!
//! A causal IF network is trained in tandem with its ASG twin: for every
//! spiking layer, front to back, the per-channel IF thresholds are nudged by
//! `theta -= lr * L`, where `L` is the ASG spike total minus the IF spike
//! total on the same layer input. Layer inputs come from the IF forward pass
//! through the already-trained earlier layers.

use rayon::prelude::*;

use crate::annq::VrConfig;
use crate::engine::{
    argmax, asg_network_forward, average_potentials, encode_input, fire_constant, if_drive,
    if_layer, if_network_forward,
};
use crate::error::{Error, Result};
use crate::network::{Layer, Mode, NetworkSpec};
use crate::spike::SpikeTrain;
use crate::tensor::Tensor;

/// Lower rail for trained thresholds.
pub const MIN_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CttConfig {
    /// Step size per calibration site; the applied step is
    /// `lr / (calibration samples * output positions)`.
    pub lr: f64,
    pub epochs: usize,
    /// Starting threshold for every channel; `None` keeps the thresholds
    /// already in the network (`T / T_q` after conversion).
    pub init_theta: Option<f64>,
}

impl Default for CttConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 50,
            init_theta: None,
        }
    }
}

impl CttConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if let Some(t) = self.init_theta {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "initial threshold must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Trained per-layer, per-channel IF thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdMap {
    pub layers: Vec<Vec<f64>>,
}

/// What a training run did.
#[derive(Clone, Debug, PartialEq)]
pub struct CttOutcome {
    pub thresholds: ThresholdMap,
    /// Mean per-channel `|L|` over all spiking layers before training.
    pub initial_mean_abs_loss: f64,
    /// Same measure with the trained thresholds.
    pub final_mean_abs_loss: f64,
    /// Per layer: sum over channels of `|L|` before each update, plus the
    /// value after the last update.
    pub history: Vec<Vec<f64>>,
}

/// Per-channel spike totals summed over batch and spatial positions.
fn channel_totals(train: &SpikeTrain) -> Vec<f64> {
    let [_, c, h, w] = train.shape();
    let plane = h * w;
    let mut totals = vec![0.0; c];
    for (i, count) in train.counts().into_iter().enumerate() {
        totals[(i / plane) % c] += count as f64;
    }
    totals
}

fn layer_potentials(input: &SpikeTrain, layer: &Layer) -> Result<Vec<Tensor>> {
    let sc = layer
        .step_constant
        .as_deref()
        .ok_or_else(|| Error::format("network", "layer lacks step constants"))?;
    (0..input.window())
        .map(|t| layer.linear_with(&input.plane_tensor(t), &layer.weights, sc))
        .collect()
}

/// `L = sum(ASG spikes at T/T_q) - sum(IF spikes at theta_if)`, per channel.
pub fn ctt_loss(
    layer_input: &SpikeTrain,
    layer: &Layer,
    theta_if: &[f64],
    cfg: &VrConfig,
) -> Result<Vec<f64>> {
    if theta_if.len() != layer.out_channels() {
        return Err(Error::shape(
            "IF thresholds vs layer channels",
            layer.out_channels(),
            theta_if.len(),
        ));
    }
    let potentials = layer_potentials(layer_input, layer)?;
    let asg = asg_totals(&potentials, layer.out_channels(), cfg)?;
    let iff = channel_totals(&if_drive(&potentials, theta_if)?);
    Ok(asg.iter().zip(&iff).map(|(a, b)| a - b).collect())
}

fn asg_totals(potentials: &[Tensor], channels: usize, cfg: &VrConfig) -> Result<Vec<f64>> {
    let avg = average_potentials(potentials)?;
    let train = fire_constant(&avg, &vec![cfg.theta(); channels], potentials.len())?;
    Ok(channel_totals(&train))
}

/// `theta' = max(MIN_THRESHOLD, theta - lr * L)`.
pub fn ctt_update(theta: &[f64], loss: &[f64], lr: f64) -> Vec<f64> {
    theta
        .iter()
        .zip(loss)
        .map(|(t, l)| (t - lr * l).max(MIN_THRESHOLD))
        .collect()
}

fn encode_all(calib: &[Tensor], cfg: &VrConfig) -> Result<Vec<SpikeTrain>> {
    calib.par_iter().map(|x| encode_input(x, cfg)).collect()
}

fn require_snn(net: &NetworkSpec) -> Result<()> {
    if net.mode() != Mode::Snn {
        return Err(Error::Mode {
            expected: "snn",
            found: net.mode().name(),
        });
    }
    Ok(())
}

fn sum_vectors(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    parts.into_iter().fold(vec![0.0; len], |mut acc, v| {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        acc
    })
}

/// Per-layer, per-channel loss with the network's current thresholds,
/// feeding each layer the IF outputs of the layers before it.
pub fn ctt_evaluate(net: &NetworkSpec, calib: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    require_snn(net)?;
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let cfg = net.cfg();
    let mut trains = encode_all(calib, &cfg)?;
    let mut losses = Vec::new();
    for i in net.spiking_layers() {
        let layer = &net.layers()[i];
        let theta = layer.thresholds.clone().expect("validated SNN layer");
        let parts = trains
            .par_iter()
            .map(|x| ctt_loss(x, layer, &theta, &cfg))
            .collect::<Result<Vec<_>>>()?;
        losses.push(sum_vectors(parts, layer.out_channels()));
        trains = trains
            .par_iter()
            .map(|x| if_layer(x, layer, &theta))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(losses)
}

/// Mean of `|L|` over every channel of every layer.
pub fn mean_abs_loss(losses: &[Vec<f64>]) -> f64 {
    let (sum, n) = losses
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), l| (s + l.abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Trains IF thresholds layer by layer and writes them into `net`.
pub fn ctt_train(net: &mut NetworkSpec, calib: &[Tensor], cfg: &CttConfig) -> Result<CttOutcome> {
    require_snn(net)?;
    cfg.validate()?;
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if let Some(init) = cfg.init_theta {
        for i in net.spiking_layers() {
            let layer = &mut net.layers_mut()[i];
            layer.thresholds = Some(vec![init; layer.out_channels()]);
        }
    }
    let initial_mean_abs_loss = mean_abs_loss(&ctt_evaluate(net, calib)?);

    let vr = net.cfg();
    let mut trains = encode_all(calib, &vr)?;
    let mut history = Vec::new();
    for i in net.spiking_layers() {
        let layer = net.layers()[i].clone();
        let channels = layer.out_channels();
        // Potentials and the ASG reference do not depend on the IF
        // thresholds, so compute them once per layer.
        let potentials = trains
            .par_iter()
            .map(|x| layer_potentials(x, &layer))
            .collect::<Result<Vec<_>>>()?;
        let asg = sum_vectors(
            potentials
                .par_iter()
                .map(|p| asg_totals(p, channels, &vr))
                .collect::<Result<Vec<_>>>()?,
            channels,
        );
        let sites: usize = potentials
            .iter()
            .map(|p| {
                let [n, _, h, w] = p[0].shape();
                n * h * w
            })
            .sum();
        let lr = cfg.lr / sites as f64;

        let mut theta = layer.thresholds.clone().expect("validated SNN layer");
        let mut layer_history = Vec::with_capacity(cfg.epochs + 1);
        for epoch in 0..=cfg.epochs {
            let iff = sum_vectors(
                potentials
                    .par_iter()
                    .map(|p| if_drive(p, &theta).map(|t| channel_totals(&t)))
                    .collect::<Result<Vec<_>>>()?,
                channels,
            );
            let loss: Vec<f64> = asg.iter().zip(&iff).map(|(a, b)| a - b).collect();
            layer_history.push(loss.iter().map(|l| l.abs()).sum());
            if epoch == cfg.epochs || loss.iter().all(|&l| l == 0.0) {
                break;
            }
            theta = ctt_update(&theta, &loss, lr);
        }
        history.push(layer_history);

        net.layers_mut()[i].thresholds = Some(theta.clone());
        trains = trains
            .par_iter()
            .map(|x| if_layer(x, &net.layers()[i], &theta))
            .collect::<Result<Vec<_>>>()?;
    }

    let final_mean_abs_loss = mean_abs_loss(&ctt_evaluate(net, calib)?);
    Ok(CttOutcome {
        thresholds: ThresholdMap {
            layers: net
                .spiking_layers()
                .map(|i| net.layers()[i].thresholds.clone().expect("set above"))
                .collect(),
        },
        initial_mean_abs_loss,
        final_mean_abs_loss,
        history,
    })
}

/// Fraction of samples whose IF-network prediction matches the ASG one.
pub fn if_asg_agreement(net: &NetworkSpec, inputs: &[Tensor]) -> Result<f64> {
    require_snn(net)?;
    let cfg = net.cfg();
    let per_input = inputs
        .par_iter()
        .map(|x| {
            let train = encode_input(x, &cfg)?;
            let (if_logits, _) = if_network_forward(net, &train)?;
            let (asg_logits, _) = asg_network_forward(net, &train)?;
            let a = argmax(&if_logits);
            let b = argmax(&asg_logits);
            Ok((a.iter().zip(&b).filter(|(x, y)| x == y).count(), a.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hits, total) = per_input
        .into_iter()
        .fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}
