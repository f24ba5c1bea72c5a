//! Time-stepped SNN simulation under two neuron models.
//!
//! * IF: integrate the per-step potential, fire when the membrane reaches
//!   the threshold, reset by subtraction. Strictly causal.
//! * ASG (averaging IF spike generation): buffer all `T` per-step
//!   potentials, average them, then run IF on the constant average. The
//!   output spikes are evenly spread and their count depends only on the
//!   input spike counts. Not causal; it is the offline reference.
//!
//! Both models compare the membrane against `theta * (1 - GRID_SNAP_TOL)`
//! so that potentials which are mathematically on a threshold multiple
//! fire despite round-off, matching the snapping in the quantized ANN.

use crate::annq::{VrConfig, GRID_SNAP_TOL};
use crate::error::{Error, Result};
use crate::network::{apply_linear, Layer, Mode, NetworkSpec};
use crate::spike::SpikeTrain;
use crate::stats::SpikeStats;
use crate::tensor::{LayerGeometry, Shape, Tensor};

#[inline]
fn reaches(membrane: f64, theta: f64) -> bool {
    membrane >= theta * (1.0 - GRID_SNAP_TOL)
}

/// Membrane potentials of one layer, zero-initialized.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronState {
    shape: Shape,
    membrane: Vec<f64>,
}

impl NeuronState {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            membrane: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn membrane(&self) -> &[f64] {
        &self.membrane
    }
}

/// Buffered per-step potentials and their time average for an ASG layer.
#[derive(Clone, Debug)]
pub struct AsgBuffer {
    pub potentials: Vec<Tensor>,
    pub average: Tensor,
}

/// Options for the ASG simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AsgOptions {
    /// Fold the `1/T` of the averaging step into the weights and step
    /// constant instead of dividing the summed potential.
    pub merged_division: bool,
}

/// Rate-encodes an on-grid input: a constant `x - T_min/T_q` drives an IF
/// neuron with threshold `T/T_q` for `T` steps, giving `T_q*x - T_min`
/// evenly spaced spikes.
pub fn encode_input(x: &Tensor, cfg: &VrConfig) -> Result<SpikeTrain> {
    let counts = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            cfg.level_of(v)
                .map(|level| level - cfg.t_min())
                .ok_or(Error::OffGrid {
                    value: v,
                    index: i,
                    lo: cfg.t_min(),
                    hi: cfg.t_max(),
                    t_q: cfg.t_q(),
                })
        })
        .collect::<Result<Vec<u32>>>()?;
    // The drive per step is count/T of a threshold, so the IF dynamics are
    // exact in integer units of theta/T.
    SpikeTrain::from_counts_even(cfg.window(), x.shape(), &counts)
}

fn check_thresholds(theta: &[f64], channels: usize) -> Result<()> {
    if theta.len() != channels {
        return Err(Error::shape(
            "per-channel thresholds",
            channels,
            theta.len(),
        ));
    }
    if let Some(c) = theta.iter().position(|&t| t.is_nan() || t <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {} at channel {c} must be positive",
            theta[c]
        )));
    }
    Ok(())
}

/// One IF step: integrate, fire at `U >= theta`, subtract `theta` on fire.
pub fn if_layer_step(state: &mut NeuronState, input: &Tensor, theta: &[f64]) -> Result<Vec<bool>> {
    if input.shape() != state.shape {
        return Err(Error::shape(
            "IF input potential",
            format!("{:?}", state.shape),
            format!("{:?}", input.shape()),
        ));
    }
    check_thresholds(theta, input.channels())?;
    let plane = input.height() * input.width();
    let channels = input.channels();
    let spikes = state
        .membrane
        .iter_mut()
        .zip(input.data())
        .enumerate()
        .map(|(i, (u, &v))| {
            let th = theta[(i / plane) % channels];
            *u += v;
            let fire = reaches(*u, th);
            if fire {
                *u -= th;
            }
            fire
        })
        .collect();
    Ok(spikes)
}

/// Runs IF on a sequence of per-step potential tensors.
pub fn if_drive(potentials: &[Tensor], theta: &[f64]) -> Result<SpikeTrain> {
    let first = potentials
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty potential sequence".into()))?;
    let mut state = NeuronState::new(first.shape());
    let mut train = SpikeTrain::zeros(potentials.len(), first.shape());
    for (t, v) in potentials.iter().enumerate() {
        let plane = if_layer_step(&mut state, v, theta)?;
        train.plane_mut(t).copy_from_slice(&plane);
    }
    Ok(train)
}

/// IF on a scalar per-step potential sequence, for traces and tests.
pub fn if_sequence(potentials: &[f64], theta: f64) -> Result<Vec<u8>> {
    let v: Vec<Tensor> = potentials
        .iter()
        .map(|&p| Tensor::new([1, 1, 1, 1], vec![p]))
        .collect::<Result<_>>()?;
    Ok(if_drive(&v, &[theta])?.sequence(0))
}

/// ASG on a scalar per-step potential sequence, for traces and tests.
pub fn asg_sequence(potentials: &[f64], theta: f64) -> Result<Vec<u8>> {
    let v: Vec<Tensor> = potentials
        .iter()
        .map(|&p| Tensor::new([1, 1, 1, 1], vec![p]))
        .collect::<Result<_>>()?;
    let avg = average_potentials(&v)?;
    Ok(fire_constant(&avg, &[theta], v.len())?.sequence(0))
}

/// Time average of buffered per-step potentials, summed in step order.
pub fn average_potentials(potentials: &[Tensor]) -> Result<Tensor> {
    let first = potentials
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty potential sequence".into()))?;
    let mut sum = vec![0.0; first.len()];
    for v in potentials {
        if v.shape() != first.shape() {
            return Err(Error::shape(
                "buffered potential",
                format!("{:?}", first.shape()),
                format!("{:?}", v.shape()),
            ));
        }
        for (s, x) in sum.iter_mut().zip(v.data()) {
            *s += x;
        }
    }
    let t = potentials.len() as f64;
    Tensor::new(first.shape(), sum.into_iter().map(|s| s / t).collect())
}

/// IF driven by the same potential at every one of `window` steps.
pub fn fire_constant(average: &Tensor, theta: &[f64], window: usize) -> Result<SpikeTrain> {
    check_thresholds(theta, average.channels())?;
    let mut state = NeuronState::new(average.shape());
    let mut train = SpikeTrain::zeros(window, average.shape());
    for t in 0..window {
        let plane = if_layer_step(&mut state, average, theta)?;
        train.plane_mut(t).copy_from_slice(&plane);
    }
    Ok(train)
}

/// Step 1 of ASG: per-step potentials `V(t) = W s(t) + c` and their mean.
pub fn asg_buffer(
    inputs: &SpikeTrain,
    weights: &Tensor,
    step_const: &[f64],
    geometry: &LayerGeometry,
    opts: AsgOptions,
) -> Result<AsgBuffer> {
    let window = inputs.window();
    if opts.merged_division {
        let t = window as f64;
        let w = weights.map(|v| v / t)?;
        let c: Vec<f64> = step_const.iter().map(|v| v / t).collect();
        let potentials = (0..window)
            .map(|s| apply_linear(geometry, &inputs.plane_tensor(s), &w, &c))
            .collect::<Result<Vec<_>>>()?;
        let mut sum = vec![0.0; potentials[0].len()];
        for v in &potentials {
            for (s, x) in sum.iter_mut().zip(v.data()) {
                *s += x;
            }
        }
        let average = Tensor::new(potentials[0].shape(), sum)?;
        Ok(AsgBuffer {
            potentials,
            average,
        })
    } else {
        let potentials = (0..window)
            .map(|s| apply_linear(geometry, &inputs.plane_tensor(s), weights, step_const))
            .collect::<Result<Vec<_>>>()?;
        let average = average_potentials(&potentials)?;
        Ok(AsgBuffer {
            potentials,
            average,
        })
    }
}

/// One ASG layer: average the buffered potentials, then fire on the average
/// with threshold `theta` for the same window.
pub fn asg_layer(
    inputs: &SpikeTrain,
    weights: &Tensor,
    step_const: &[f64],
    theta: f64,
    geometry: &LayerGeometry,
) -> Result<SpikeTrain> {
    asg_layer_with(
        inputs,
        weights,
        step_const,
        theta,
        geometry,
        AsgOptions::default(),
    )
}

pub fn asg_layer_with(
    inputs: &SpikeTrain,
    weights: &Tensor,
    step_const: &[f64],
    theta: f64,
    geometry: &LayerGeometry,
    opts: AsgOptions,
) -> Result<SpikeTrain> {
    let buf = asg_buffer(inputs, weights, step_const, geometry, opts)?;
    let theta = vec![theta; buf.average.channels()];
    fire_constant(&buf.average, &theta, inputs.window())
}

/// IF layer over a whole input train with per-channel thresholds.
pub fn if_layer(inputs: &SpikeTrain, layer: &Layer, theta: &[f64]) -> Result<SpikeTrain> {
    let sc = step_constant_of(layer)?;
    let potentials = (0..inputs.window())
        .map(|t| layer.linear_with(&inputs.plane_tensor(t), &layer.weights, sc))
        .collect::<Result<Vec<_>>>()?;
    if_drive(&potentials, theta)
}

fn step_constant_of(layer: &Layer) -> Result<&[f64]> {
    layer
        .step_constant
        .as_deref()
        .ok_or_else(|| Error::format("network", "layer lacks step constants"))
}

fn thresholds_of(layer: &Layer, index: usize) -> Result<&[f64]> {
    layer
        .thresholds
        .as_deref()
        .ok_or_else(|| Error::format("network", format!("spiking layer {index} lacks thresholds")))
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

/// Every spike train produced by a network run.
#[derive(Clone, Debug)]
pub struct NetworkTrace {
    /// Encoded input followed by each spiking layer's output.
    pub trains: Vec<SpikeTrain>,
    /// Decoded classifier output, comparable to the ANN's raw logits.
    pub logits: Tensor,
    pub stats: SpikeStats,
}

impl NetworkTrace {
    /// Decoded activations of spiking layer `i` (`(|s| + T_min) / T_q`).
    pub fn decoded(&self, i: usize, cfg: &VrConfig) -> Tensor {
        let train = &self.trains[i + 1];
        Tensor::new(
            train.shape(),
            train.counts().into_iter().map(|c| cfg.decode(c)).collect(),
        )
        .expect("decoded values are finite")
    }
}

fn layer_names(net: &NetworkSpec) -> Vec<String> {
    std::iter::once("input".to_string())
        .chain(net.spiking_layers().map(|i| format!("layer{i}")))
        .collect()
}

fn stats_of(net: &NetworkSpec, trains: &[SpikeTrain]) -> SpikeStats {
    let mut stats = SpikeStats::default();
    for (name, train) in layer_names(net).into_iter().zip(trains) {
        stats.push(name, train);
    }
    stats
}

/// Classifier readout: accumulated potential over the window, decoded to
/// the ANN logit scale as `P / T + T_min / T_q`.
fn decode_logits(accumulated: Vec<f64>, shape: Shape, cfg: &VrConfig) -> Result<Tensor> {
    let t = cfg.window() as f64;
    let offset = cfg.lower();
    Tensor::new(
        shape,
        accumulated.into_iter().map(|p| p / t + offset).collect(),
    )
}

fn check_input(net: &NetworkSpec, input: &SpikeTrain) -> Result<()> {
    let cfg = net.cfg();
    if input.window() != cfg.window() {
        return Err(Error::shape(
            "input spike window",
            cfg.window(),
            input.window(),
        ));
    }
    Ok(())
}

/// Causal IF network: at each step every layer consumes the previous
/// layer's spikes from that same step.
pub fn if_network_trace(net: &NetworkSpec, input: &SpikeTrain) -> Result<NetworkTrace> {
    require_snn(net)?;
    check_input(net, input)?;
    let cfg = net.cfg();
    let window = cfg.window();
    let shapes = net.output_shapes(input.shape())?;
    let spiking = net.spiking_layers();
    let mut states: Vec<NeuronState> = spiking
        .clone()
        .map(|i| NeuronState::new(shapes[i]))
        .collect();
    let mut trains: Vec<SpikeTrain> = spiking
        .clone()
        .map(|i| SpikeTrain::zeros(window, shapes[i]))
        .collect();
    let head_index = net.layers().len() - 1;
    let head = &net.layers()[head_index];
    let head_shape = shapes[head_index];
    let mut accumulated = vec![0.0; head_shape.iter().product()];

    for t in 0..window {
        let mut plane = input.plane_tensor(t);
        for i in spiking.clone() {
            let layer = &net.layers()[i];
            let v = layer.linear_with(&plane, &layer.weights, step_constant_of(layer)?)?;
            let fired = if_layer_step(&mut states[i], &v, thresholds_of(layer, i)?)?;
            trains[i].plane_mut(t).copy_from_slice(&fired);
            plane = trains[i].plane_tensor(t);
        }
        let v = head.linear_with(&plane, &head.weights, step_constant_of(head)?)?;
        for (a, x) in accumulated.iter_mut().zip(v.data()) {
            *a += x;
        }
    }

    let mut all = Vec::with_capacity(trains.len() + 1);
    all.push(input.clone());
    all.extend(trains);
    let stats = stats_of(net, &all);
    Ok(NetworkTrace {
        logits: decode_logits(accumulated, head_shape, &cfg)?,
        trains: all,
        stats,
    })
}

pub fn if_network_forward(net: &NetworkSpec, input: &SpikeTrain) -> Result<(Tensor, SpikeStats)> {
    let trace = if_network_trace(net, input)?;
    Ok((trace.logits, trace.stats))
}

/// Layer-wise ASG network with the uniform threshold `T / T_q`.
pub fn asg_network_trace_with(
    net: &NetworkSpec,
    input: &SpikeTrain,
    opts: AsgOptions,
) -> Result<NetworkTrace> {
    require_snn(net)?;
    check_input(net, input)?;
    let cfg = net.cfg();
    let theta = cfg.theta();
    let mut all = vec![input.clone()];
    for i in net.spiking_layers() {
        let layer = &net.layers()[i];
        let out = asg_layer_with(
            all.last().expect("input present"),
            &layer.weights,
            step_constant_of(layer)?,
            theta,
            &layer.geometry,
            opts,
        )?;
        all.push(out);
    }
    let head = net.layers().last().expect("non-empty network");
    let prev = all.last().expect("input present");
    let mut accumulated = Vec::new();
    let mut shape = [0; 4];
    for t in 0..prev.window() {
        let v = head.linear_with(
            &prev.plane_tensor(t),
            &head.weights,
            step_constant_of(head)?,
        )?;
        if t == 0 {
            shape = v.shape();
            accumulated = vec![0.0; v.len()];
        }
        for (a, x) in accumulated.iter_mut().zip(v.data()) {
            *a += x;
        }
    }
    let stats = stats_of(net, &all);
    Ok(NetworkTrace {
        logits: decode_logits(accumulated, shape, &cfg)?,
        trains: all,
        stats,
    })
}

pub fn asg_network_trace(net: &NetworkSpec, input: &SpikeTrain) -> Result<NetworkTrace> {
    asg_network_trace_with(net, input, AsgOptions::default())
}

pub fn asg_network_forward(net: &NetworkSpec, input: &SpikeTrain) -> Result<(Tensor, SpikeStats)> {
    let trace = asg_network_trace(net, input)?;
    Ok((trace.logits, trace.stats))
}

/// Index of the largest logit per batch sample (first one on ties).
pub fn argmax(logits: &Tensor) -> Vec<usize> {
    let len = logits.sample_len();
    logits
        .data()
        .chunks(len.max(1))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}
