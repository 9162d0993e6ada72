//! `grapple gibbs`: greedy coloring followed by chromatic Gibbs sampling.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use grapple::algorithms::coloring::{build_color_schedule, color_histogram, GreedyColorUpdate};
use grapple::algorithms::gibbs::{
    build_mrf, grid_edges, laplace_coupling, random_potentials, GibbsEdgeData, GibbsUpdate,
    GibbsVertexData,
};
use grapple::engine::{Engine, EngineConfig, RunStats, TerminationReason};
use grapple::{ConsistencyModel, FunctionId, GibbsGraph, SchedulerKind, SchedulerSpec};

use crate::common::{parse_dims, CliError, CliResult, Globals};
use crate::mrf::read_mrf;

const SAMPLE: FunctionId = FunctionId(0);
const COLOR: FunctionId = FunctionId(1);

type GibbsEngine = Engine<GibbsVertexData<f64>, GibbsEdgeData<f64>>;

#[derive(Debug, Args)]
pub struct GibbsArgs {
    /// MRF description file (see README for the format).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Synthetic instance: `grid:WxH`, `chain:N`, or `complete:N`.
    #[arg(long, conflicts_with = "graph")]
    synthetic: Option<String>,
    /// Labels per variable (synthetic instances).
    #[arg(long, default_value_t = 3)]
    labels: usize,
    /// Laplace coupling strength (synthetic instances).
    #[arg(long, default_value_t = 1.0)]
    coupling: f64,
    /// Number of full sweeps to sample.
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    /// Sweeps discarded before tallying.
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    /// Per-vertex empirical marginals, TSV.
    #[arg(long, default_value = "marginals.tsv")]
    marginals_out: PathBuf,
    /// Color histogram, TSV (also printed).
    #[arg(long)]
    colors_out: Option<PathBuf>,
}

fn build_graph(globals: &Globals, args: &GibbsArgs) -> CliResult<GibbsGraph> {
    match (&args.graph, &args.synthetic) {
        (Some(path), None) => read_mrf(path, globals.seed),
        (None, Some(spec)) => {
            let (kind, rest) = spec
                .split_once(':')
                .ok_or_else(|| CliError::config("synthetic spec looks like `grid:8x8`"))?;
            let edges = match kind {
                "grid" => {
                    let (w, h) = parse_dims(rest)?;
                    grid_edges(w, h)
                }
                "chain" => {
                    let n: u32 = rest
                        .parse()
                        .map_err(|_| CliError::config("bad chain length"))?;
                    (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect()
                }
                "complete" => {
                    let n: u32 = rest
                        .parse()
                        .map_err(|_| CliError::config("bad clique size"))?;
                    (0..n)
                        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
                        .collect()
                }
                other => {
                    return Err(CliError::config(format!(
                        "unknown synthetic kind `{other}`"
                    )))
                }
            };
            let n = edges
                .iter()
                .flat_map(|&(u, v)| [u, v])
                .max()
                .map(|m| m as usize + 1)
                .unwrap_or(1);
            Ok(build_mrf(
                random_potentials(n, args.labels, 0.8, globals.seed),
                &edges,
                &laplace_coupling(args.labels, args.coupling),
                globals.seed,
            ))
        }
        _ => Err(CliError::config(
            "provide exactly one of --graph or --synthetic",
        )),
    }
}

fn sampling_engine(graph: &Arc<GibbsGraph>, workers: usize) -> GibbsEngine {
    let mut engine = Engine::new(
        Arc::clone(graph),
        Arc::new(grapple::SharedDataTable::new()),
        EngineConfig::new(workers, ConsistencyModel::Vertex),
    );
    engine.register_update(SAMPLE, Arc::new(GibbsUpdate));
    engine
}

/// Runs `count` full sweeps, batching so each compiled plan stays modest.
/// Returns (updates, wall time).
fn run_sweeps(
    engine: &GibbsEngine,
    graph: &GibbsGraph,
    scheduler: SchedulerKind,
    count: usize,
) -> CliResult<(u64, Duration)> {
    let n = graph.vertex_count().max(1);
    let batch = (200_000 / n).clamp(1, 10_000);
    let mut updates = 0u64;
    let mut wall = Duration::ZERO;
    let mut left = count;
    while left > 0 {
        let now = batch.min(left);
        let stats = match scheduler {
            SchedulerKind::Set => {
                let schedule = build_color_schedule(graph, SAMPLE, now)
                    .map_err(|e| CliError::config(e.to_string()))?;
                engine.run(
                    &SchedulerSpec::Set {
                        sequence: schedule,
                        compile_model: ConsistencyModel::Edge,
                    },
                    &[],
                )?
            }
            _ => engine.run(
                &SchedulerSpec::RoundRobin {
                    function: SAMPLE,
                    sweeps: now,
                },
                &[],
            )?,
        };
        updates += stats.updates_applied;
        wall += stats.wall_time;
        left -= now;
    }
    Ok((updates, wall))
}

pub fn run(globals: &Globals, args: &GibbsArgs) -> CliResult<()> {
    let scheduler = globals.scheduler_or(SchedulerKind::Set)?;
    if !matches!(scheduler, SchedulerKind::Set | SchedulerKind::RoundRobin) {
        return Err(CliError::config(
            "gibbs supports --scheduler set (chromatic) or round-robin (edge-locked)",
        ));
    }
    // Round-robin sampling needs edge locks for correctness; the chromatic
    // plan needs only vertex locks.
    let lock_model = match scheduler {
        SchedulerKind::Set => ConsistencyModel::Vertex,
        _ => ConsistencyModel::Edge,
    };
    let workers = globals.workers_or(Globals::default_workers().min(8));
    let mut graph = Arc::new(build_graph(globals, args)?);

    // Phase one: greedy coloring under the edge consistency model.
    let mut color_engine = Engine::new(
        Arc::clone(&graph),
        Arc::new(grapple::SharedDataTable::new()),
        EngineConfig::new(workers, ConsistencyModel::Edge),
    );
    color_engine.register_update(COLOR, Arc::new(GreedyColorUpdate));
    color_engine.run(
        &SchedulerSpec::RoundRobin {
            function: COLOR,
            sweeps: 1,
        },
        &[],
    )?;
    drop(color_engine);

    let histogram = color_histogram(&graph);
    println!("colors: {}", histogram.len());
    for &(c, n) in &histogram {
        println!("color {c}: {n} vertices");
    }
    if let Some(path) = &args.colors_out {
        crate::common::write_tsv_file(
            path,
            histogram.iter().map(|(c, n)| format!("{c}\t{n}")).collect(),
        )?;
    }

    let mut total_updates = 0u64;
    let mut wall = Duration::ZERO;
    if args.burnin > 0 {
        let mut engine = sampling_engine(&graph, workers);
        engine.set_model(lock_model);
        let (u, w) = run_sweeps(&engine, &graph, scheduler, args.burnin)?;
        total_updates += u;
        wall += w;
        drop(engine);
        // Reset tallies so marginals reflect post-burn-in samples only.
        let g = Arc::get_mut(&mut graph).expect("no engine holds the graph");
        for v in g.vertex_ids().collect::<Vec<_>>() {
            for c in g.vertex_data_mut(v).sample_counts.iter_mut() {
                *c = 0;
            }
        }
    }
    let mut engine = sampling_engine(&graph, workers);
    engine.set_model(lock_model);
    let (u, w) = run_sweeps(&engine, &graph, scheduler, args.sweeps)?;
    total_updates += u;
    wall += w;
    drop(engine);

    let mut lines = Vec::with_capacity(graph.vertex_count());
    for v in graph.vertex_ids() {
        let marginal = graph.vertex_data(v).empirical_marginal();
        let cols: Vec<String> = marginal.iter().map(|p| format!("{p:.6}")).collect();
        lines.push(format!("{}\t{}", v.0, cols.join("\t")));
    }
    crate::common::write_tsv_file(&args.marginals_out, lines)?;
    println!("wrote {}", args.marginals_out.display());

    let stats = RunStats {
        workers,
        scheduler: scheduler.label(),
        model: lock_model,
        updates_applied: total_updates,
        wall_time: wall,
        per_worker_updates: Vec::new(),
        termination_reason: TerminationReason::SweepLimit,
    };
    globals.write_stats(&stats)?;
    println!(
        "gibbs: {} draws over {} sweeps in {:.3}s",
        total_updates,
        args.sweeps,
        wall.as_secs_f64()
    );
    Ok(())
}
