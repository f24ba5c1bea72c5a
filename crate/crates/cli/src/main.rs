use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Value-range ANN-to-SNN conversion, spiking inference and threshold
/// training.
#[derive(Parser, Debug)]
#[command(name = "spikeforge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Quantized ANN.
    Ann,
    /// Causal IF spiking network.
    SnnIf,
    /// Averaging IF spiking network (exact reference).
    SnnAsg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fold batch norm and convert an ANN container into an SNN container.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        tq: u32,
        #[arg(long)]
        tmin: u32,
        #[arg(long)]
        tmax: u32,
    },
    /// Run a network on a tensor file and print predictions and spike stats.
    Run {
        model: PathBuf,
        input: PathBuf,
        #[arg(long, value_enum, default_value = "snn-asg")]
        engine: Engine,
        /// Expand raw [0, 1] inputs into 3 * N * C channels first.
        #[arg(long)]
        ice_phi: Option<usize>,
        #[arg(long)]
        ice_varied_levels: bool,
        /// Write every layer's spike raster to this file.
        #[arg(long)]
        dump_spikes: Option<PathBuf>,
        /// Energy per fired spike in the report.
        #[arg(long, default_value_t = 1.0)]
        unit_cost: f64,
    },
    /// Train per-channel IF thresholds against the ASG reference.
    TrainThresholds {
        model: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Reset every threshold to this value before training.
        #[arg(long)]
        init_theta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand a raw [0, 1] tensor file across quantization levels.
    Ice {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        phi: usize,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        varied_levels: bool,
    },
    /// Summarize a spike raster dump.
    Report {
        raster: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        unit_cost: f64,
    },
}

fn configure_threads() -> Result<(), commands::Failure> {
    let Ok(value) = std::env::var("SPIKEFORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            commands::Failure::new(
                3,
                format!("SPIKEFORGE_THREADS must be a positive integer, got {value:?}"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::Failure::new(3, format!("cannot size thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<String, commands::Failure> {
    configure_threads()?;
    match cli.command {
        Command::Convert {
            input,
            output,
            tq,
            tmin,
            tmax,
        } => commands::convert(&input, &output, tq, tmin, tmax),
        Command::Run {
            model,
            input,
            engine,
            ice_phi,
            ice_varied_levels,
            dump_spikes,
            unit_cost,
        } => commands::run(&commands::RunArgs {
            model,
            input,
            engine,
            ice_phi,
            ice_varied_levels,
            dump_spikes,
            unit_cost,
        }),
        Command::TrainThresholds {
            model,
            calib,
            lr,
            epochs,
            init_theta,
            out,
        } => commands::train_thresholds(&model, &calib, lr, epochs, init_theta, &out),
        Command::Ice {
            input,
            output,
            phi,
            window,
            varied_levels,
        } => commands::ice(&input, &output, phi, window, varied_levels),
        Command::Report { raster, unit_cost } => commands::report(&raster, unit_cost),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
