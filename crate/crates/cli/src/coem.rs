//! `grapple coem`: label propagation over a bipartite noun-phrase/context
//! graph, run to quiescence.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use grapple::algorithms::coem::{
    random_bipartite, CoemEdgeData, CoemKind, CoemUpdate, CoemVertexData,
};
use grapple::engine::{Engine, EngineConfig};
use grapple::io::read_tsv_edges;
use grapple::{CoemGraph, ConsistencyModel, FunctionId, SchedulerKind, SchedulerSpec, Task, VertexId};

use crate::common::{parse_dims, CliError, CliResult, Globals};

const COEM: FunctionId = FunctionId(0);

#[derive(Debug, Args)]
pub struct CoemArgs {
    /// Bipartite edge list TSV `np<TAB>ct<TAB>count`; sources are noun
    /// phrases, targets are contexts.
    #[arg(long, requires = "seeds")]
    graph: Option<PathBuf>,
    /// Seed labels TSV `vertex<TAB>class`.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Synthetic instance `NPxCT`, e.g. `60x40`.
    #[arg(long, conflicts_with = "graph")]
    synthetic: Option<String>,
    /// Number of classes.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Edge density of the synthetic instance.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Fraction of the context side seeded in synthetic instances.
    #[arg(long, default_value_t = 0.15)]
    seed_fraction: f64,
    /// Rescheduling threshold on the L1 belief change.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// Per-vertex beliefs, TSV.
    #[arg(long, default_value = "beliefs.tsv")]
    beliefs_out: PathBuf,
}

fn graph_from_files(
    edges_path: &PathBuf,
    seeds_path: &PathBuf,
    classes: usize,
) -> CliResult<CoemGraph> {
    let edges = read_tsv_edges(edges_path)?;
    let seeds = read_tsv_edges(seeds_path)?; // vertex<TAB>class rows parse the same way
    let n = edges
        .iter()
        .flat_map(|&(u, v, _)| [u, v])
        .chain(seeds.iter().map(|&(v, _, _)| v))
        .max()
        .map(|m| m as usize + 1)
        .unwrap_or(0);
    if n == 0 {
        return Err(CliError::config("empty graph"));
    }
    // Sources are noun phrases, targets contexts; a vertex on both sides is
    // a format error.
    let mut kind: Vec<Option<CoemKind>> = vec![None; n];
    for &(u, v, _) in &edges {
        for (vertex, k) in [(u, CoemKind::NounPhrase), (v, CoemKind::Context)] {
            match kind[vertex as usize] {
                None => kind[vertex as usize] = Some(k),
                Some(existing) if existing == k => {}
                Some(_) => {
                    return Err(CliError::config(format!(
                        "vertex {vertex} appears as both noun phrase and context"
                    )))
                }
            }
        }
    }
    let mut g = CoemGraph::new();
    for k in &kind {
        g.add_vertex(CoemVertexData::uniform(
            classes,
            k.unwrap_or(CoemKind::NounPhrase),
        ))
        .unwrap();
    }
    for &(u, v, w) in &edges {
        if w < 0.0 {
            return Err(CliError::config("co-occurrence counts must be non-negative"));
        }
        g.add_edge(VertexId(u), VertexId(v), CoemEdgeData { weight: w })
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    for &(v, class, _) in &seeds {
        let class = class as usize;
        if class >= classes {
            return Err(CliError::config(format!(
                "seed class {class} out of range (classes = {classes})"
            )));
        }
        let k = g.vertex_data(VertexId(v)).kind;
        *g.vertex_data_mut(VertexId(v)) = {
            let mut data = CoemVertexData::seed(class, classes, k);
            data.kind = k;
            data
        };
    }
    g.freeze();
    Ok(g)
}

pub fn run(globals: &Globals, args: &CoemArgs) -> CliResult<()> {
    if args.classes < 2 {
        return Err(CliError::config("need at least two classes"));
    }
    let workers = globals.workers_or(Globals::default_workers().min(8));
    let scheduler = globals.scheduler_or(SchedulerKind::FifoMultiQueue)?;
    let model = globals.model_or(ConsistencyModel::Edge)?;

    let graph = match (&args.graph, &args.seeds, &args.synthetic) {
        (Some(edges), Some(seeds), None) => graph_from_files(edges, seeds, args.classes)?,
        (None, None, Some(spec)) => {
            let (n_np, n_ct) = parse_dims(spec)?;
            random_bipartite::<f64>(
                n_np,
                n_ct,
                args.classes,
                args.density,
                args.seed_fraction,
                globals.seed,
            )
        }
        _ => {
            return Err(CliError::config(
                "provide either --graph with --seeds, or --synthetic",
            ))
        }
    };

    let mut engine = Engine::new(
        Arc::new(graph),
        Arc::new(grapple::SharedDataTable::new()),
        EngineConfig::new(workers, model),
    );
    engine.register_update(
        COEM,
        Arc::new(CoemUpdate {
            function: COEM,
            threshold: args.threshold,
        }),
    );

    let tasks: Vec<Task> = engine
        .graph()
        .vertex_ids()
        .map(|v| Task::new(v, COEM))
        .collect();
    let spec = match scheduler {
        SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
        SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
        SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
        SchedulerKind::Priority => SchedulerSpec::Priority,
        SchedulerKind::ApproxPriority => SchedulerSpec::ApproxPriority,
        other => {
            return Err(CliError::config(format!(
                "coem needs a fed scheduler, not `{}`",
                other.label()
            )))
        }
    };
    let stats = engine.run(&spec, &tasks)?;
    globals.write_stats(&stats)?;
    println!(
        "coem: {} updates on {} workers in {:.3}s ({})",
        stats.updates_applied,
        stats.workers,
        stats.wall_time.as_secs_f64(),
        stats.termination_reason.label()
    );

    let g = engine.graph();
    let mut lines = Vec::with_capacity(g.vertex_count());
    for v in g.vertex_ids() {
        let data = g.vertex_data(v);
        let cols: Vec<String> = data.belief.iter().map(|p| format!("{p:.6}")).collect();
        let kind = match data.kind {
            CoemKind::NounPhrase => "np",
            CoemKind::Context => "ct",
        };
        lines.push(format!("{}\t{}\t{}", v.0, kind, cols.join("\t")));
    }
    crate::common::write_tsv_file(&args.beliefs_out, lines)?;
    println!("wrote {}", args.beliefs_out.display());
    Ok(())
}
