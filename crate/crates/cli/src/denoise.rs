//! `grapple denoise`: grid-MRF image denoising via residual BP, with
//! optional simultaneous smoothing-parameter learning.

use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use grapple::algorithms::denoise::{
    self, expectation_pixels, infer, learn_lambda, make_engine, mean_abs_error, LearnMode,
    LearnOptions,
};
use grapple::io::{read_pgm, write_pgm, PgmImage};
use grapple::{ConsistencyModel, SchedulerKind};

use crate::common::{parse_dims, parse_pair, CliError, CliResult, Globals};

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Generate a synthetic HxW grid from a known smoothness prior.
    #[arg(long, visible_alias = "synthetic", value_name = "HxW")]
    grid: Option<String>,
    /// Denoise a plain (P2) PGM image instead of synthetic data.
    #[arg(long, conflicts_with = "grid")]
    input: Option<PathBuf>,
    /// Number of gray labels.
    #[arg(long, default_value_t = 5)]
    labels: usize,
    /// Observation noise in label units (synthetic generator and the
    /// likelihood width).
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Per-axis smoothing used by the synthetic generator.
    #[arg(long, default_value = "1.0,2.0", value_name = "L0,L1")]
    true_lambda: String,
    /// Initial per-axis smoothing parameters for inference.
    #[arg(long, default_value = "1.0,1.0", value_name = "L0,L1")]
    lambda: String,
    /// Learn the smoothing parameters concurrently with inference.
    #[arg(long)]
    learn_params: bool,
    /// Background gradient-step period when learning, in milliseconds.
    #[arg(long, default_value_t = 3)]
    sync_period_ms: u64,
    /// BP residual bound: messages moving less stop rescheduling.
    #[arg(long, default_value_t = 1e-4)]
    bound: f64,
    /// Sweep count for the generated schedulers (round-robin, sync, set).
    #[arg(long, default_value_t = 30)]
    sweeps: usize,
    /// Denoised output image.
    #[arg(long, default_value = "denoised.pgm")]
    output: PathBuf,
    /// Also write the noisy input (synthetic runs).
    #[arg(long)]
    noisy_out: Option<PathBuf>,
    /// Also write the clean ground truth (synthetic runs).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

fn to_pgm(pixels: &[f64], width: usize, height: usize, labels: usize, maxval: u16) -> PgmImage {
    let scale = f64::from(maxval) / (labels as f64 - 1.0);
    PgmImage {
        width,
        height,
        maxval,
        pixels: pixels
            .iter()
            .map(|&p| (p * scale).round().clamp(0.0, f64::from(maxval)) as u16)
            .collect(),
    }
}

pub fn run(globals: &Globals, args: &DenoiseArgs) -> CliResult<()> {
    if args.labels < 2 {
        return Err(CliError::config("need at least two labels (K >= 2)"));
    }
    let workers = globals.workers_or(Globals::default_workers().min(8));
    let scheduler = globals.scheduler_or(SchedulerKind::Priority)?;
    let model = globals.model_or(ConsistencyModel::Edge)?;
    let lambda0 = parse_pair(&args.lambda)?;

    // Observations in label units, plus ground truth when synthetic.
    let (obs, width, height, truth, maxval): (Vec<f64>, usize, usize, Option<Vec<f64>>, u16) =
        match (&args.grid, &args.input) {
            (Some(spec), None) => {
                let (h, w) = parse_dims(spec)?;
                let tl = parse_pair(&args.true_lambda)?;
                let data = denoise::synthetic_grid::<f64>(
                    w,
                    h,
                    args.labels,
                    [tl[0], tl[1]],
                    args.noise,
                    globals.seed,
                );
                let truth: Vec<f64> = data.truth.iter().map(|&t| t as f64).collect();
                if let Some(path) = &args.noisy_out {
                    write_pgm(path, &to_pgm(&data.noisy, w, h, args.labels, 255))?;
                }
                if let Some(path) = &args.truth_out {
                    write_pgm(path, &to_pgm(&truth, w, h, args.labels, 255))?;
                }
                (data.noisy, w, h, Some(truth), 255)
            }
            (None, Some(path)) => {
                let image = read_pgm(path)?;
                let obs = image.to_label_units(args.labels);
                (obs, image.width, image.height, None, image.maxval)
            }
            _ => {
                return Err(CliError::config(
                    "provide exactly one of --grid/--synthetic or --input",
                ))
            }
        };

    let engine;
    if args.learn_params {
        let mut opts = LearnOptions::<f64>::concurrent(workers);
        opts.mode = LearnMode::Concurrent {
            sync_period: Duration::from_millis(args.sync_period_ms.max(1)),
        };
        opts.lambda0 = lambda0.to_vec();
        opts.residual_bound = args.bound;
        let outcome = learn_lambda(&obs, width, height, args.labels, args.noise, opts)?;
        println!(
            "learned lambda: {:.4},{:.4} in {} rounds ({} updates)",
            outcome.lambda[0], outcome.lambda[1], outcome.rounds, outcome.total_updates
        );
        engine = outcome.engine;
    } else {
        engine = make_engine(
            &obs,
            width,
            height,
            args.labels,
            args.noise,
            lambda0.to_vec(),
            workers,
            model,
            args.bound,
        );
    }

    let stats = infer(&engine, scheduler, args.sweeps, width)?;
    globals.write_stats(&stats)?;
    println!(
        "denoise: {} updates on {} workers in {:.3}s ({})",
        stats.updates_applied,
        stats.workers,
        stats.wall_time.as_secs_f64(),
        stats.termination_reason.label()
    );

    let denoised = expectation_pixels(&engine);
    write_pgm(
        &args.output,
        &to_pgm(&denoised, width, height, args.labels, maxval),
    )?;
    println!("wrote {}", args.output.display());

    if let Some(truth) = truth {
        let mae_noisy = mean_abs_error(&obs, &truth);
        let mae_denoised = mean_abs_error(&denoised, &truth);
        println!("mae noisy->truth:    {mae_noisy:.4} (label units)");
        println!("mae denoised->truth: {mae_denoised:.4} (label units)");
    }
    Ok(())
}
