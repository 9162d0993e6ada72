//! `grapple gabp`: Gaussian BP as a solver for sparse symmetric systems.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use grapple::algorithms::gabp::{
    build_graph, random_dominant_system, seed_tasks, solution, GabpUpdate,
};
use grapple::engine::{Engine, EngineConfig};
use grapple::io::{read_matrix_market, read_vector, CooMatrix};
use grapple::{ConsistencyModel, FunctionId, SchedulerKind, SchedulerSpec};

use crate::common::{CliError, CliResult, Globals};

const GABP: FunctionId = FunctionId(0);

#[derive(Debug, Args)]
pub struct GabpArgs {
    /// Symmetric system matrix in MatrixMarket coordinate form.
    #[arg(long, requires = "rhs")]
    matrix: Option<PathBuf>,
    /// Right-hand side b, one value per line.
    #[arg(long)]
    rhs: Option<PathBuf>,
    /// Synthetic diagonally dominant system of this size.
    #[arg(long, conflicts_with = "matrix")]
    synthetic: Option<usize>,
    /// Off-diagonal density of the synthetic system.
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Message residual below which no rescheduling happens.
    #[arg(long, default_value_t = 1e-9)]
    bound: f64,
    /// Solution vector, TSV `index<TAB>value`.
    #[arg(long, default_value = "solution.tsv")]
    solution_out: PathBuf,
    /// Compare against a dense direct solve (n <= 500) and report the
    /// sup-norm error.
    #[arg(long)]
    check: bool,
}

pub fn run(globals: &Globals, args: &GabpArgs) -> CliResult<()> {
    let workers = globals.workers_or(Globals::default_workers().min(8));
    let scheduler = globals.scheduler_or(SchedulerKind::Priority)?;
    let model = globals.model_or(ConsistencyModel::Edge)?;

    let (a, b): (CooMatrix<f64>, Vec<f64>) = match (&args.matrix, &args.rhs, args.synthetic) {
        (Some(mtx), Some(rhs), None) => {
            let a = read_matrix_market(mtx)?;
            if a.rows != a.cols {
                return Err(CliError::config("system matrix must be square"));
            }
            let b = read_vector(rhs)?;
            if b.len() != a.rows {
                return Err(CliError::config(format!(
                    "matrix is {}x{} but rhs has {} entries",
                    a.rows,
                    a.cols,
                    b.len()
                )));
            }
            (a, b)
        }
        (None, None, Some(n)) => random_dominant_system(n, args.density, globals.seed),
        _ => {
            return Err(CliError::config(
                "provide either --matrix with --rhs, or --synthetic N",
            ))
        }
    };

    let mut engine = Engine::new(
        Arc::new(build_graph(&a, &b)),
        Arc::new(grapple::SharedDataTable::new()),
        EngineConfig::new(workers, model),
    );
    engine.register_update(
        GABP,
        Arc::new(GabpUpdate {
            function: GABP,
            residual_bound: args.bound,
        }),
    );
    let spec = match scheduler {
        SchedulerKind::Priority => SchedulerSpec::Priority,
        SchedulerKind::ApproxPriority => SchedulerSpec::ApproxPriority,
        SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
        SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
        SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
        SchedulerKind::RoundRobin => SchedulerSpec::RoundRobin {
            function: GABP,
            sweeps: 200,
        },
        other => {
            return Err(CliError::config(format!(
                "gabp does not support the `{}` scheduler",
                other.label()
            )))
        }
    };
    let stats = match &spec {
        SchedulerSpec::RoundRobin { .. } => engine.run(&spec, &[])?,
        _ => engine.run(&spec, &seed_tasks(engine.graph(), GABP))?,
    };
    globals.write_stats(&stats)?;

    let x = solution(engine.graph());
    println!(
        "gabp: {} updates on {} workers in {:.3}s ({})",
        stats.updates_applied,
        stats.workers,
        stats.wall_time.as_secs_f64(),
        stats.termination_reason.label()
    );

    // Residual against the input system.
    let mut ax = vec![0.0f64; b.len()];
    for &(r, c, v) in &a.entries {
        ax[r] += v * x[c];
    }
    let residual = ax
        .iter()
        .zip(&b)
        .map(|(est, target)| (est - target).abs())
        .fold(0.0f64, f64::max);
    println!("residual |Ax-b|_inf: {residual:.3e}");

    if args.check {
        if a.rows > 500 {
            return Err(CliError::config("--check supports systems up to n = 500"));
        }
        use nalgebra::{DMatrix, DVector};
        let mut dense = DMatrix::<f64>::zeros(a.rows, a.cols);
        for &(r, c, v) in &a.entries {
            dense[(r, c)] += v;
        }
        let direct = dense
            .lu()
            .solve(&DVector::from_vec(b.clone()))
            .ok_or_else(|| CliError::config("system is singular"))?;
        let err = x
            .iter()
            .zip(direct.iter())
            .map(|(xi, di)| (xi - di).abs())
            .fold(0.0f64, f64::max);
        println!("direct-solve sup error: {err:.3e}");
    }

    crate::common::write_tsv_file(
        &args.solution_out,
        x.iter()
            .enumerate()
            .map(|(i, v)| format!("{i}\t{v:.12}"))
            .collect(),
    )?;
    println!("wrote {}", args.solution_out.display());
    Ok(())
}
