//! `grapple bench`: cartesian sweep over workers, schedulers, and models,
//! appending one record per run. Records are kept, not judged; wall-clock
//! scaling is hardware-dependent.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use grapple::algorithms::{coem, denoise, gabp, lasso};
use grapple::engine::{Engine, EngineConfig, RunStats};
use grapple::io::append_csv_row;
use grapple::{ConsistencyModel, FunctionId, SchedulerKind, SchedulerSpec, Task};

use crate::common::{parse_dims, CliError, CliResult, Globals};

/// Benchmark record schema, version 1.
pub const BENCH_CSV_HEADER_V1: &str =
    "algorithm,dataset,workers,scheduler,model,updates,wall_time_s,objective_or_residual,seed";

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Algorithm to sweep: denoise, coem, lasso, or gabp.
    #[arg(long, default_value = "denoise")]
    algo: String,
    /// Worker counts to sweep.
    #[arg(long, default_value = "1,2,4")]
    workers_list: String,
    /// Scheduler kinds to sweep.
    #[arg(long, default_value = "priority")]
    schedulers: String,
    /// Consistency models to sweep.
    #[arg(long)]
    models: Option<String>,
    /// Instance size, algorithm-specific (`HxW`, `NPxCT`, `DxN`, or `N`).
    #[arg(long)]
    size: Option<String>,
    /// Output CSV, appended to.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

struct Record {
    algorithm: String,
    dataset: String,
    stats: RunStats,
    metric: f64,
    seed: u64,
}

impl Record {
    fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.8},{}",
            self.algorithm,
            self.dataset,
            self.stats.workers,
            self.stats.scheduler,
            self.stats.model.label(),
            self.stats.updates_applied,
            self.stats.wall_time.as_secs_f64(),
            self.metric,
            self.seed
        )
    }
}

pub fn run(globals: &Globals, args: &BenchArgs) -> CliResult<()> {
    let workers: Vec<usize> = crate::common::parse_list(&args.workers_list, "worker count")?;
    let schedulers: Vec<SchedulerKind> = args
        .schedulers
        .split(',')
        .map(|s| s.trim().parse().map_err(CliError::Config))
        .collect::<CliResult<_>>()?;
    let default_model = match args.algo.as_str() {
        "lasso" => ConsistencyModel::Full,
        _ => ConsistencyModel::Edge,
    };
    let models: Vec<ConsistencyModel> = match &args.models {
        None => vec![default_model],
        Some(spec) => spec
            .split(',')
            .map(|s| s.trim().parse().map_err(CliError::Config))
            .collect::<CliResult<_>>()?,
    };

    let mut rows = 0;
    for &w in &workers {
        for &s in &schedulers {
            for &m in &models {
                let record = run_one(globals, args, w, s, m)?;
                append_csv_row(&args.out, BENCH_CSV_HEADER_V1, &record.row())?;
                println!("{}", record.row());
                rows += 1;
            }
        }
    }
    println!("appended {rows} records to {}", args.out.display());
    Ok(())
}

fn run_one(
    globals: &Globals,
    args: &BenchArgs,
    workers: usize,
    scheduler: SchedulerKind,
    model: ConsistencyModel,
) -> CliResult<Record> {
    let seed = globals.seed;
    match args.algo.as_str() {
        "denoise" => {
            let (h, w) = match &args.size {
                Some(s) => parse_dims(s)?,
                None => (64, 64),
            };
            let labels = 5;
            let data = denoise::synthetic_grid::<f64>(w, h, labels, [1.0, 2.0], 0.5, seed);
            let engine = denoise::make_engine(
                &data.noisy,
                w,
                h,
                labels,
                0.5,
                vec![1.0, 2.0],
                workers,
                model,
                1e-4,
            );
            let stats = denoise::infer(&engine, scheduler, 30, w)?;
            let truth: Vec<f64> = data.truth.iter().map(|&t| t as f64).collect();
            let metric = denoise::mean_abs_error(&denoise::expectation_pixels(&engine), &truth);
            Ok(Record {
                algorithm: "denoise".into(),
                dataset: format!("synthetic-{h}x{w}"),
                stats,
                metric,
                seed,
            })
        }
        "coem" => {
            let (n_np, n_ct) = match &args.size {
                Some(s) => parse_dims(s)?,
                None => (150, 100),
            };
            let graph = coem::random_bipartite::<f64>(n_np, n_ct, 2, 0.1, 0.15, seed);
            let mut engine = Engine::new(
                Arc::new(graph),
                Arc::new(grapple::SharedDataTable::new()),
                EngineConfig::new(workers, model),
            );
            let f = FunctionId(0);
            engine.register_update(
                f,
                Arc::new(coem::CoemUpdate {
                    function: f,
                    threshold: 1e-5,
                }),
            );
            let tasks: Vec<Task> = engine.graph().vertex_ids().map(|v| Task::new(v, f)).collect();
            let stats = engine.run(&fed_spec(scheduler)?, &tasks)?;
            // How far labels propagated: mean L1 distance from uniform.
            let g = engine.graph();
            let metric = g
                .vertex_ids()
                .map(|v| {
                    let b = &g.vertex_data(v).belief;
                    let u = 1.0 / b.len() as f64;
                    b.iter().map(|&p| (p - u).abs()).sum::<f64>()
                })
                .sum::<f64>()
                / g.vertex_count() as f64;
            Ok(Record {
                algorithm: "coem".into(),
                dataset: format!("synthetic-{n_np}x{n_ct}"),
                stats,
                metric,
                seed,
            })
        }
        "lasso" => {
            let (features, observations) = match &args.size {
                Some(s) => parse_dims(s)?,
                None => (200, 500),
            };
            let (x, y) = lasso::synthetic_instance::<f64>(features, observations, 0.05, seed);
            let lambda = 1.0;
            let mut engine = Engine::new(
                Arc::new(lasso::build_graph(&x, &y)),
                Arc::new(grapple::SharedDataTable::new()),
                EngineConfig::new(workers, model),
            );
            let f = FunctionId(0);
            engine.register_update(
                f,
                Arc::new(lasso::ShootingUpdate {
                    function: f,
                    lambda,
                    epsilon: 1e-9,
                }),
            );
            let stats = engine.run(&fed_spec(scheduler)?, &lasso::seed_tasks(engine.graph(), f))?;
            let metric = lasso::objective(engine.graph(), lambda);
            Ok(Record {
                algorithm: "lasso".into(),
                dataset: format!("synthetic-{features}x{observations}"),
                stats,
                metric,
                seed,
            })
        }
        "gabp" => {
            let n = match &args.size {
                Some(s) => s
                    .parse()
                    .map_err(|_| CliError::config("gabp --size takes a single integer"))?,
                None => 200,
            };
            let (a, b) = gabp::random_dominant_system::<f64>(n, 0.05, seed);
            let mut engine = Engine::new(
                Arc::new(gabp::build_graph(&a, &b)),
                Arc::new(grapple::SharedDataTable::new()),
                EngineConfig::new(workers, model),
            );
            let f = FunctionId(0);
            engine.register_update(
                f,
                Arc::new(gabp::GabpUpdate {
                    function: f,
                    residual_bound: 1e-9,
                }),
            );
            let stats = engine.run(&fed_spec(scheduler)?, &gabp::seed_tasks(engine.graph(), f))?;
            let x = gabp::solution(engine.graph());
            let mut ax = vec![0.0f64; b.len()];
            for &(r, c, v) in &a.entries {
                ax[r] += v * x[c];
            }
            let metric = ax
                .iter()
                .zip(&b)
                .map(|(est, t)| (est - t).abs())
                .fold(0.0f64, f64::max);
            Ok(Record {
                algorithm: "gabp".into(),
                dataset: format!("synthetic-{n}"),
                stats,
                metric,
                seed,
            })
        }
        other => Err(CliError::config(format!("unknown bench algorithm `{other}`"))),
    }
}

fn fed_spec(kind: SchedulerKind) -> CliResult<SchedulerSpec> {
    Ok(match kind {
        SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
        SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
        SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
        SchedulerKind::Priority => SchedulerSpec::Priority,
        SchedulerKind::ApproxPriority => SchedulerSpec::ApproxPriority,
        other => {
            return Err(CliError::config(format!(
                "bench needs a fed scheduler for this algorithm, not `{}`",
                other.label()
            )))
        }
    })
}
