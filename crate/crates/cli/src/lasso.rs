//! `grapple lasso`: the shooting algorithm under full or vertex
//! consistency.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use grapple::algorithms::lasso::{
    build_graph, kkt_residual, objective, seed_tasks, synthetic_instance, weights, ShootingUpdate,
};
use grapple::engine::{Engine, EngineConfig};
use grapple::io::{read_matrix_market, read_vector, CooMatrix};
use grapple::{ConsistencyModel, FunctionId, SchedulerKind, SchedulerSpec};

use crate::common::{parse_dims, CliError, CliResult, Globals};

const SHOOT: FunctionId = FunctionId(0);

#[derive(Debug, Args)]
pub struct LassoArgs {
    /// Design matrix X in MatrixMarket coordinate form, observations by
    /// features.
    #[arg(long, requires = "targets")]
    matrix: Option<PathBuf>,
    /// Targets y, one value per line.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Synthetic instance `FEATURESxOBSERVATIONS`, e.g. `200x500`.
    #[arg(long, conflicts_with = "matrix")]
    synthetic: Option<String>,
    /// Nonzero density of the synthetic design matrix.
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    /// L1 penalty weight.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Smallest coordinate move that still propagates.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Sweeps when a generated scheduler is selected.
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    /// Final weights, TSV `feature<TAB>value`.
    #[arg(long, default_value = "weights.tsv")]
    weights_out: PathBuf,
}

pub fn run(globals: &Globals, args: &LassoArgs) -> CliResult<()> {
    let workers = globals.workers_or(Globals::default_workers().min(8));
    let scheduler = globals.scheduler_or(SchedulerKind::Priority)?;
    let model = globals.model_or(ConsistencyModel::Full)?;
    if args.lambda < 0.0 {
        return Err(CliError::config("lambda must be non-negative"));
    }

    let (x, y): (CooMatrix<f64>, Vec<f64>) = match (&args.matrix, &args.targets, &args.synthetic) {
        (Some(mtx), Some(tgt), None) => {
            let x = read_matrix_market(mtx)?;
            let y = read_vector(tgt)?;
            if x.rows != y.len() {
                return Err(CliError::config(format!(
                    "matrix has {} rows but {} targets given",
                    x.rows,
                    y.len()
                )));
            }
            (x, y)
        }
        (None, None, Some(spec)) => {
            let (features, observations) = parse_dims(spec)?;
            synthetic_instance(features, observations, args.density, globals.seed)
        }
        _ => {
            return Err(CliError::config(
                "provide either --matrix with --targets, or --synthetic",
            ))
        }
    };

    let mut engine = Engine::new(
        Arc::new(build_graph(&x, &y)),
        Arc::new(grapple::SharedDataTable::new()),
        EngineConfig::new(workers, model),
    );
    engine.register_update(
        SHOOT,
        Arc::new(ShootingUpdate {
            function: SHOOT,
            lambda: args.lambda,
            epsilon: args.epsilon,
        }),
    );

    let stats = match scheduler {
        SchedulerKind::RoundRobin | SchedulerKind::Synchronous => engine.run(
            &SchedulerSpec::RoundRobin {
                function: SHOOT,
                sweeps: args.sweeps,
            },
            &[],
        )?,
        SchedulerKind::Set => {
            return Err(CliError::config("lasso does not take a set schedule"))
        }
        kind => {
            let spec = match kind {
                SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
                SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
                SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
                SchedulerKind::ApproxPriority => SchedulerSpec::ApproxPriority,
                _ => SchedulerSpec::Priority,
            };
            engine.run(&spec, &seed_tasks(engine.graph(), SHOOT))?
        }
    };
    globals.write_stats(&stats)?;

    let graph = engine.graph();
    let obj = objective(graph, args.lambda);
    let kkt = kkt_residual(graph, args.lambda);
    println!(
        "lasso: {} updates on {} workers in {:.3}s ({})",
        stats.updates_applied,
        stats.workers,
        stats.wall_time.as_secs_f64(),
        stats.termination_reason.label()
    );
    println!("objective:    {obj:.8}");
    println!("kkt residual: {kkt:.3e}");

    let w = weights(graph);
    let nonzero = w.iter().filter(|&&x| x != 0.0).count();
    println!("nonzeros:     {nonzero}/{}", w.len());
    crate::common::write_tsv_file(
        &args.weights_out,
        w.iter()
            .enumerate()
            .map(|(i, v)| format!("{i}\t{v:.10}"))
            .collect(),
    )?;
    println!("wrote {}", args.weights_out.display());
    Ok(())
}
