use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use spikeforge::container::{read_network, read_tensor, write_network, write_tensor};
use spikeforge::ctt::ctt_train;
use spikeforge::engine::{argmax, asg_network_trace, if_network_trace, NetworkTrace};
use spikeforge::raster::{count_raster, write_raster};
use spikeforge::stats::{spike_report, LayerStats};
use spikeforge::{
    ann_forward, convert_network, encode_input, ice_expand, layer_threshold, CttConfig, Error,
    IceConfig, Mode, NetworkSpec, SpikeStats, SpikeTrain, Tensor, VrConfig,
};

use crate::Engine;

/// Grid values read back from 32-bit storage are within this many levels
/// of the exact grid point.
const F32_GRID_TOL: f64 = 1e-5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidVrConfig { .. } | Error::InvalidParameter(_) | Error::Unsupported(_) => 3,
            Error::Mode { .. } => 4,
            Error::EmptyCalibration => 5,
            Error::Shape { .. }
            | Error::OffGrid { .. }
            | Error::OutOfDomain { .. }
            | Error::Format { .. }
            | Error::Io(_) => 2,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn io_context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn load_network(path: &Path) -> Result<NetworkSpec, Failure> {
    read_network(path).map_err(io_context(path))
}

fn load_tensor(path: &Path) -> Result<(Tensor, Option<Vec<usize>>), Failure> {
    let file = read_tensor(path).map_err(io_context(path))?;
    Ok((file.tensor, file.labels))
}

/// Replaces values within 32-bit rounding of a grid point by that point.
fn snap_to_grid(x: &Tensor, cfg: &VrConfig) -> Result<Tensor, Error> {
    let tq = cfg.t_q() as f64;
    x.map(|v| {
        let scaled = v * tq;
        let r = scaled.round();
        if (scaled - r).abs() <= F32_GRID_TOL && r >= 0.0 {
            cfg.grid_value(r as u32)
        } else {
            v
        }
    })
}

fn require_mode(net: &NetworkSpec, mode: Mode) -> Result<(), Failure> {
    if net.mode() != mode {
        return Err(Error::Mode {
            expected: mode.name(),
            found: net.mode().name(),
        }
        .into());
    }
    Ok(())
}

pub fn convert(input: &Path, output: &Path, tq: u32, tmin: u32, tmax: u32) -> Outcome {
    let cfg = VrConfig::new(tq, tmin, tmax)?;
    let ann = load_network(input)?;
    require_mode(&ann, Mode::Ann)?;
    let ann = NetworkSpec::new(ann.layers().to_vec(), cfg, Mode::Ann)?.fold_batchnorm()?;
    let snn = convert_network(&ann)?;
    write_network(&snn, output).map_err(io_context(output))?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "t_q={tq} t_min={tmin} t_max={tmax} window={}",
        cfg.window()
    );
    let _ = writeln!(out, "theta={}", layer_threshold(&cfg));
    let _ = writeln!(out, "weight_scale={}", cfg.theta());
    let _ = writeln!(out, "bias_offset={}", cfg.lower());
    let _ = writeln!(
        out,
        "layers={} output={}",
        snn.layers().len(),
        output.display()
    );
    Ok(out)
}

pub struct RunArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub engine: Engine,
    pub ice_phi: Option<usize>,
    pub ice_varied_levels: bool,
    pub dump_spikes: Option<PathBuf>,
    pub unit_cost: f64,
}

fn engine_name(engine: Engine) -> &'static str {
    match engine {
        Engine::Ann => "ann",
        Engine::SnnIf => "snn-if",
        Engine::SnnAsg => "snn-asg",
    }
}

/// Runs each sample on its own and stacks the per-layer trains.
fn simulate(
    net: &NetworkSpec,
    samples: &[Tensor],
    engine: Engine,
) -> Result<(Tensor, SpikeStats, Vec<SpikeTrain>), Error> {
    let cfg = net.cfg();
    let traces = samples
        .par_iter()
        .map(|x| {
            let train = encode_input(x, &cfg)?;
            match engine {
                Engine::SnnIf => if_network_trace(net, &train),
                _ => asg_network_trace(net, &train),
            }
        })
        .collect::<Result<Vec<NetworkTrace>, Error>>()?;
    let mut stats = SpikeStats::default();
    for t in &traces {
        stats.merge(&t.stats);
    }
    let logits =
        Tensor::concat_batch(&traces.iter().map(|t| t.logits.clone()).collect::<Vec<_>>())?;
    let layers = traces[0].trains.len();
    let trains = (0..layers)
        .map(|i| {
            SpikeTrain::concat_batch(
                &traces
                    .iter()
                    .map(|t| t.trains[i].clone())
                    .collect::<Vec<_>>(),
            )
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((logits, stats, trains))
}

pub fn run(args: &RunArgs) -> Outcome {
    let start = Instant::now();
    if !(args.unit_cost >= 0.0 && args.unit_cost.is_finite()) {
        return Err(Failure::new(
            3,
            format!("unit cost must be >= 0, got {}", args.unit_cost),
        ));
    }
    let net = load_network(&args.model)?;
    let expected = if args.engine == Engine::Ann {
        Mode::Ann
    } else {
        Mode::Snn
    };
    require_mode(&net, expected)?;
    if args.engine == Engine::Ann && args.dump_spikes.is_some() {
        return Err(Failure::new(4, "--dump-spikes needs a spiking engine"));
    }
    let cfg = net.cfg();
    let (mut x, labels) = load_tensor(&args.input)?;
    if x.batch() == 0 {
        return Err(Failure::new(
            2,
            format!("{}: no samples", args.input.display()),
        ));
    }
    if let Some(phi) = args.ice_phi {
        let mut ice = IceConfig::new(phi, cfg.window())?;
        ice.varied_levels = args.ice_varied_levels;
        x = ice_expand(&x, &ice)?;
    }
    let x = snap_to_grid(&x, &cfg)?;

    let (logits, stats, trains) = match args.engine {
        Engine::Ann => {
            let net = net.fold_batchnorm()?;
            (
                ann_forward(&net, &x, &cfg)?,
                SpikeStats::default(),
                Vec::new(),
            )
        }
        engine => simulate(&net, &x.split_batch(), engine)?,
    };
    if let Some(path) = &args.dump_spikes {
        let mut buf = Vec::new();
        for t in &trains {
            write_raster(&mut buf, t)?;
        }
        fs::write(path, buf).map_err(|e| io_context(path)(e.into()))?;
    }

    let predictions = argmax(&logits);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "engine={} samples={} t_q={} t_min={} t_max={}",
        engine_name(args.engine),
        predictions.len(),
        cfg.t_q(),
        cfg.t_min(),
        cfg.t_max()
    );
    for (i, p) in predictions.iter().enumerate() {
        match &labels {
            Some(l) => {
                let _ = writeln!(out, "sample index={i} prediction={p} label={}", l[i]);
            }
            None => {
                let _ = writeln!(out, "sample index={i} prediction={p}");
            }
        }
    }
    if let Some(l) = &labels {
        let hits = predictions.iter().zip(l).filter(|(a, b)| a == b).count();
        let _ = writeln!(out, "accuracy={:.6}", hits as f64 / l.len() as f64);
    }
    out.push_str(&spike_report(&stats, args.unit_cost).render());
    let _ = writeln!(out, "wall_ms={:.3}", start.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}

pub fn train_thresholds(
    model: &Path,
    calib: &Path,
    lr: Option<f64>,
    epochs: Option<usize>,
    init_theta: Option<f64>,
    out_path: &Path,
) -> Outcome {
    let defaults = CttConfig::default();
    let cfg = CttConfig {
        lr: lr.unwrap_or(defaults.lr),
        epochs: epochs.unwrap_or(defaults.epochs),
        init_theta,
    };
    cfg.validate()?;
    let mut net = load_network(model)?;
    require_mode(&net, Mode::Snn)?;
    let (x, _) = load_tensor(calib)?;
    let x = snap_to_grid(&x, &net.cfg())?;
    let samples = x.split_batch();
    let outcome = ctt_train(&mut net, &samples, &cfg)?;
    write_network(&net, out_path).map_err(io_context(out_path))?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "lr={} epochs={} calibration_samples={}",
        cfg.lr,
        cfg.epochs,
        samples.len()
    );
    let _ = writeln!(
        out,
        "initial_mean_abs_loss={:.6}",
        outcome.initial_mean_abs_loss
    );
    let _ = writeln!(
        out,
        "final_mean_abs_loss={:.6}",
        outcome.final_mean_abs_loss
    );
    for (i, theta) in outcome.thresholds.layers.iter().enumerate() {
        let (lo, hi) = theta
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
                (a.min(t), b.max(t))
            });
        let _ = writeln!(
            out,
            "layer index={i} channels={} theta_min={lo:.6} theta_max={hi:.6}",
            theta.len()
        );
    }
    let _ = writeln!(out, "output={}", out_path.display());
    Ok(out)
}

pub fn ice(input: &Path, output: &Path, phi: usize, window: usize, varied: bool) -> Outcome {
    let mut cfg = IceConfig::new(phi, window)?;
    cfg.varied_levels = varied;
    let (x, labels) = load_tensor(input)?;
    let y = ice_expand(&x, &cfg)?;
    write_tensor(&y, output, labels.as_deref()).map_err(io_context(output))?;
    let [n, c, h, w] = y.shape();
    Ok(format!(
        "phi={phi} window={window} varied_levels={varied} in_channels={} out_channels={c}\nshape={n}x{c}x{h}x{w} output={}\n",
        x.channels(),
        output.display()
    ))
}

pub fn report(raster: &Path, unit_cost: f64) -> Outcome {
    if !(unit_cost >= 0.0 && unit_cost.is_finite()) {
        return Err(Failure::new(
            3,
            format!("unit cost must be >= 0, got {unit_cost}"),
        ));
    }
    let bytes = fs::read(raster).map_err(|e| io_context(raster)(e.into()))?;
    let counts = count_raster(&bytes).map_err(io_context(raster))?;
    let stats = SpikeStats {
        layers: counts
            .into_iter()
            .enumerate()
            .map(|(i, (fired, slots))| LayerStats {
                name: format!("record{i}"),
                fired,
                slots,
            })
            .collect(),
    };
    Ok(spike_report(&stats, unit_cost).render())
}
