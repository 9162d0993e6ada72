use super::*;
use crate::graph::SyncRegistration;
use crate::scheduling::SchedulerKind;
use std::sync::Arc;

type G = DataGraph<u64, u64>;
type Table = SharedDataTable<u64, u64>;

const COUNT: FunctionId = FunctionId(0);

/// Ring of `n` vertices with edges v -> v+1 (mod n), all data zeroed.
fn ring(n: u32) -> G {
    let mut g = G::new();
    for _ in 0..n {
        g.add_vertex(0).unwrap();
    }
    for v in 0..n {
        g.add_edge(VertexId(v), VertexId((v + 1) % n), 0).unwrap();
    }
    g.freeze();
    g
}

fn engine(graph: G, workers: usize, model: ConsistencyModel) -> Engine<u64, u64> {
    Engine::new(
        Arc::new(graph),
        Arc::new(Table::new()),
        EngineConfig::new(workers, model),
    )
}

/// Bumps the center counter and every adjacent edge counter by one.
fn register_count(engine: &mut Engine<u64, u64>) {
    engine.register_update(
        COUNT,
        Arc::new(
            |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, _: &mut TaskSink| {
                *view.center_data_mut() += 1;
                let edges: Vec<_> = view
                    .in_edges()
                    .iter()
                    .chain(view.out_edges().iter())
                    .copied()
                    .collect();
                for e in edges {
                    *view.edge_data_mut(e) += 1;
                }
                Ok(())
            },
        ),
    );
}

#[test]
fn empty_run_returns_immediately() {
    let mut eng = engine(ring(3), 2, ConsistencyModel::Edge);
    register_count(&mut eng);
    let stats = eng.run(&SchedulerSpec::FifoSingle, &[]).unwrap();
    assert_eq!(stats.updates_applied, 0);
    assert_eq!(
        stats.termination_reason,
        TerminationReason::SchedulerExhausted
    );
}

#[test]
fn round_robin_counts_every_vertex_per_sweep() {
    let mut eng = engine(ring(3), 2, ConsistencyModel::Edge);
    register_count(&mut eng);
    let stats = eng
        .run(
            &SchedulerSpec::RoundRobin {
                function: COUNT,
                sweeps: 2,
            },
            &[],
        )
        .unwrap();
    assert_eq!(stats.updates_applied, 6);
    assert_eq!(stats.termination_reason, TerminationReason::SweepLimit);
    assert_eq!(
        stats.updates_applied,
        stats.per_worker_updates.iter().sum::<u64>()
    );
    let graph = eng.graph();
    for v in graph.vertex_ids() {
        assert_eq!(*graph.vertex_data(v), 2);
    }
    for e in graph.edge_ids() {
        assert_eq!(*graph.edge_data(e), 4, "two updates per endpoint");
    }
}

#[test]
fn update_error_aborts_with_offender() {
    let mut eng = engine(ring(4), 2, ConsistencyModel::Edge);
    eng.register_update(
        COUNT,
        Arc::new(
            |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, _: &mut TaskSink| {
                if view.center() == VertexId(2) {
                    return Err(UpdateError::Other("boom".into()));
                }
                Ok(())
            },
        ),
    );
    let tasks: Vec<Task> = (0..4).map(|v| Task::new(VertexId(v), COUNT)).collect();
    let err = eng.run(&SchedulerSpec::FifoSingle, &tasks).unwrap_err();
    match err {
        RunError::UpdateFailed {
            vertex, function, ..
        } => {
            assert_eq!(vertex, VertexId(2));
            assert_eq!(function, COUNT);
        }
        other => panic!("unexpected error {other:?}"),
    }
    // Locks were released on abort: a fresh run works.
    let stats = eng.run(&SchedulerSpec::FifoSingle, &[]).unwrap();
    assert_eq!(stats.updates_applied, 0);
}

#[test]
fn emitted_tasks_chain() {
    const HOP: FunctionId = FunctionId(1);
    let mut eng = engine(ring(5), 2, ConsistencyModel::Edge);
    eng.register_update(
        HOP,
        Arc::new(
            |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, sink: &mut TaskSink| {
                *view.center_data_mut() += 1;
                let next = VertexId((view.center().0 + 1) % 5);
                if next != VertexId(0) {
                    sink.add_task(Task::new(next, HOP));
                }
                Ok(())
            },
        ),
    );
    let stats = eng
        .run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), HOP)])
        .unwrap();
    assert_eq!(stats.updates_applied, 5);
    for v in eng.graph().vertex_ids() {
        assert_eq!(*eng.graph().vertex_data(v), 1);
    }
}

/// A drained scheduler must not stop the run while an in-flight update can
/// still emit tasks.
#[test]
fn in_flight_emission_prevents_premature_stop() {
    const SLOW: FunctionId = FunctionId(1);
    let mut eng = engine(ring(4), 2, ConsistencyModel::Vertex);
    eng.register_update(
        SLOW,
        Arc::new(
            |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, sink: &mut TaskSink| {
                *view.center_data_mut() += 1;
                std::thread::sleep(Duration::from_millis(60));
                let v = view.center().0;
                if v < 2 {
                    sink.add_task(Task::new(VertexId(v + 1), SLOW));
                }
                Ok(())
            },
        ),
    );
    let stats = eng
        .run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), SLOW)])
        .unwrap();
    assert_eq!(stats.updates_applied, 3, "emitted tasks must all run");
}

#[test]
fn no_lost_updates_under_contention() {
    for workers in [2usize, 4, 8, 16] {
        for model in [ConsistencyModel::Edge, ConsistencyModel::Full] {
            let n = 24u32;
            let mut eng = engine(ring(n), workers, model);
            register_count(&mut eng);
            let reps = 40u64;
            let tasks: Vec<Task> = (0..n)
                .flat_map(|v| std::iter::repeat(Task::new(VertexId(v), COUNT)).take(reps as usize))
                .collect();
            let stats = eng.run(&SchedulerSpec::FifoMultiQueue, &tasks).unwrap();
            assert_eq!(stats.updates_applied, u64::from(n) * reps);
            let graph = eng.graph();
            for v in graph.vertex_ids() {
                assert_eq!(*graph.vertex_data(v), reps, "lost vertex update at {v}");
            }
            for e in graph.edge_ids() {
                assert_eq!(*graph.edge_data(e), 2 * reps, "lost edge update at {e}");
            }
        }
    }
}

#[test]
fn single_worker_runs_are_bit_identical() {
    const MIX: FunctionId = FunctionId(1);
    let run_once = || {
        let mut eng = engine(ring(16), 1, ConsistencyModel::Edge);
        eng.register_update(
            MIX,
            Arc::new(
                |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, _: &mut TaskSink| {
                    let mut acc = view
                        .center_data()
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    for &u in view.neighbors() {
                        acc = acc.wrapping_add(view.neighbor_data(u).rotate_left(17));
                    }
                    *view.center_data_mut() = acc;
                    Ok(())
                },
            ),
        );
        let tasks: Vec<Task> = (0..16)
            .cycle()
            .take(64)
            .map(|v| Task::new(VertexId(v), MIX))
            .collect();
        eng.run(&SchedulerSpec::FifoSingle, &tasks).unwrap();
        let g = eng.graph();
        g.vertex_ids().map(|v| *g.vertex_data(v)).collect::<Vec<_>>()
    };
    assert_eq!(run_once(), run_once());
}

#[test]
fn initial_tasks_rejected_for_generated_schedules() {
    let mut eng = engine(ring(3), 1, ConsistencyModel::Edge);
    register_count(&mut eng);
    let err = eng
        .run(
            &SchedulerSpec::RoundRobin {
                function: COUNT,
                sweeps: 1,
            },
            &[Task::new(VertexId(0), COUNT)],
        )
        .unwrap_err();
    assert!(matches!(err, RunError::InitialTasksUnsupported { .. }));
}

#[test]
fn unknown_function_rejected() {
    let eng = engine(ring(3), 1, ConsistencyModel::Edge);
    let err = eng
        .run(
            &SchedulerSpec::FifoSingle,
            &[Task::new(VertexId(0), FunctionId(9))],
        )
        .unwrap_err();
    assert!(matches!(err, RunError::UnknownFunction(FunctionId(9))));
}

#[test]
fn unfrozen_graph_rejected() {
    let mut g = G::new();
    g.add_vertex(0).unwrap();
    let eng = Engine::new(
        Arc::new(g),
        Arc::new(Table::new()),
        EngineConfig::new(1, ConsistencyModel::Edge),
    );
    assert!(matches!(
        eng.run(&SchedulerSpec::FifoSingle, &[]),
        Err(RunError::NotFrozen)
    ));
}

#[test]
fn sync_sequential_fold_sums_vertices() {
    let mut g = G::new();
    for x in [1u64, 2, 3] {
        g.add_vertex(x).unwrap();
    }
    g.freeze();
    let eng = engine_with_graph(g, 1);
    eng.table()
        .register_sync(SyncRegistration::new(
            "sum",
            0u64,
            |view: &mut ScopeView<'_, u64, u64>, acc: u64| acc + *view.center_data(),
            |_prev: Option<&u64>, acc| acc,
        ))
        .unwrap();
    assert_eq!(eng.table().get_as::<u64>("sum").unwrap(), 0); // apply(initial)
    eng.sync_now("sum").unwrap();
    assert_eq!(eng.table().get_as::<u64>("sum").unwrap(), 6);
}

fn engine_with_graph(g: G, workers: usize) -> Engine<u64, u64> {
    Engine::new(
        Arc::new(g),
        Arc::new(Table::new()),
        EngineConfig::new(workers, ConsistencyModel::Edge),
    )
}

#[test]
fn sync_over_empty_graph_applies_initial() {
    let mut g = G::new();
    g.freeze();
    let eng = engine_with_graph(g, 2);
    eng.table()
        .register_sync(SyncRegistration::new(
            "sum",
            41u64,
            |_view: &mut ScopeView<'_, u64, u64>, acc: u64| acc + 1,
            |_prev: Option<&u64>, acc| acc + 1,
        ))
        .unwrap();
    eng.sync_now("sum").unwrap();
    assert_eq!(eng.table().get_as::<u64>("sum").unwrap(), 42);
}

#[test]
fn parallel_merge_matches_sequential_fold() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut g = G::new();
    let values: Vec<u64> = (0..1000).map(|_| rng.random_range(0..1_000_000)).collect();
    for &x in &values {
        g.add_vertex(x).unwrap();
    }
    g.freeze();
    let expected: u64 = values.iter().sum();

    for workers in [1usize, 2, 4, 7] {
        let eng = engine_with_graph(ring_copy(&values), workers);
        eng.table()
            .register_sync(SyncRegistration::with_merge(
                "sum",
                0u64,
                |view: &mut ScopeView<'_, u64, u64>, acc: u64| acc + *view.center_data(),
                |a: u64, b: u64| a + b,
                |_prev: Option<&u64>, acc| acc,
            ))
            .unwrap();
        eng.sync_now("sum").unwrap();
        assert_eq!(eng.table().get_as::<u64>("sum").unwrap(), expected);
    }
}

fn ring_copy(values: &[u64]) -> G {
    let mut g = G::new();
    for &x in values {
        g.add_vertex(x).unwrap();
    }
    g.freeze();
    g
}

#[test]
fn sync_fold_may_modify_vertex_data() {
    let mut g = G::new();
    for _ in 0..5 {
        g.add_vertex(0).unwrap();
    }
    g.freeze();
    let eng = engine_with_graph(g, 1);
    eng.table()
        .register_sync(SyncRegistration::new(
            "visited",
            0u64,
            |view: &mut ScopeView<'_, u64, u64>, acc: u64| {
                *view.center_data_mut() = 7;
                acc + 1
            },
            |_prev: Option<&u64>, acc| acc,
        ))
        .unwrap();
    eng.sync_now("visited").unwrap();
    assert_eq!(eng.table().get_as::<u64>("visited").unwrap(), 5);
    for v in eng.graph().vertex_ids() {
        assert_eq!(*eng.graph().vertex_data(v), 7);
    }
}

#[test]
fn on_demand_sync_request_runs_after_task() {
    const ASK: FunctionId = FunctionId(1);
    let mut g = G::new();
    for x in [5u64, 6, 7] {
        g.add_vertex(x).unwrap();
    }
    g.freeze();
    let mut eng = engine_with_graph(g, 2);
    eng.table()
        .register_sync(SyncRegistration::new(
            "sum",
            0u64,
            |view: &mut ScopeView<'_, u64, u64>, acc: u64| acc + *view.center_data(),
            |_prev: Option<&u64>, acc| acc,
        ))
        .unwrap();
    eng.register_update(
        ASK,
        Arc::new(
            |_view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, sink: &mut TaskSink| {
                sink.request_sync("sum");
                Ok(())
            },
        ),
    );
    eng.run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), ASK)])
        .unwrap();
    assert_eq!(eng.table().get_as::<u64>("sum").unwrap(), 18);
}

#[test]
fn unregistered_sync_request_fails_run() {
    const ASK: FunctionId = FunctionId(1);
    let mut eng = engine(ring(2), 1, ConsistencyModel::Edge);
    eng.register_update(
        ASK,
        Arc::new(
            |_view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, sink: &mut TaskSink| {
                sink.request_sync("nothing");
                Ok(())
            },
        ),
    );
    let err = eng
        .run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), ASK)])
        .unwrap_err();
    assert!(matches!(err, RunError::UnregisteredSync(k) if k == "nothing"));
}

/// A periodically synced statistic drives a termination function while a
/// self-rescheduling task keeps the run alive.
#[test]
fn background_sync_drives_termination() {
    const SPIN: FunctionId = FunctionId(1);
    let mut eng = engine(ring(4), 2, ConsistencyModel::Vertex);
    eng.table()
        .register_sync(
            SyncRegistration::new(
                "ticks",
                (),
                |_view: &mut ScopeView<'_, u64, u64>, acc: ()| acc,
                |prev: Option<&u64>, _acc: ()| prev.copied().unwrap_or(0) + 1,
            )
            .periodic(Duration::from_millis(10)),
        )
        .unwrap();
    eng.register_update(
        SPIN,
        Arc::new(
            |view: &mut ScopeView<'_, u64, u64>, _: &SdtReader, sink: &mut TaskSink| {
                *view.center_data_mut() += 1;
                std::thread::sleep(Duration::from_millis(1));
                let center = view.center();
                sink.add_task(Task::new(center, SPIN));
                Ok(())
            },
        ),
    );
    eng.add_termination(|sdt: &SdtReader| sdt.get_as::<u64>("ticks").map(|t| t >= 8).unwrap_or(false));
    let stats = eng
        .run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), SPIN)])
        .unwrap();
    assert_eq!(
        stats.termination_reason,
        TerminationReason::TerminationFunction
    );
    assert!(stats.updates_applied > 0);
    let ticks = eng.table().get_as::<u64>("ticks").unwrap();
    assert!(ticks >= 8, "background sync fired only {ticks} times");
}

#[test]
fn quiescent_engine_reruns_cleanly() {
    let mut eng = engine(ring(6), 4, ConsistencyModel::Full);
    register_count(&mut eng);
    let tasks: Vec<Task> = (0..6).map(|v| Task::new(VertexId(v), COUNT)).collect();
    let first = eng.run(&SchedulerSpec::FifoMultiQueue, &tasks).unwrap();
    assert_eq!(first.updates_applied, 6);
    // Scheduler state is per run; a fresh empty run exits immediately and
    // no scope is left held (acquiring every scope succeeds instantly).
    let second = eng.run(&SchedulerSpec::FifoMultiQueue, &[]).unwrap();
    assert_eq!(second.updates_applied, 0);
    for v in eng.graph().vertex_ids() {
        let scope = eng.graph().scope_of(v).unwrap();
        drop(eng_locks_probe(&eng, &scope));
    }
}

fn eng_locks_probe<'a>(
    eng: &'a Engine<u64, u64>,
    scope: &crate::graph::ScopeDescriptor,
) -> impl Drop + 'a {
    eng.locks.acquire(scope, ConsistencyModel::Full)
}

#[test]
fn csv_row_shape() {
    let stats = RunStats {
        workers: 4,
        scheduler: SchedulerKind::Priority.label(),
        model: ConsistencyModel::Edge,
        updates_applied: 10,
        wall_time: Duration::from_millis(1500),
        per_worker_updates: vec![3, 3, 2, 2],
        termination_reason: TerminationReason::SchedulerExhausted,
    };
    assert_eq!(RunStats::CSV_HEADER.split(',').count(), 6);
    let row = stats.csv_row();
    assert!(row.starts_with("4,priority,edge,10,1.5"));
    assert!(row.ends_with("scheduler-exhausted"));
}
