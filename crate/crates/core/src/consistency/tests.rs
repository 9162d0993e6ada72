use super::*;
use crate::graph::{DataGraph, ScopeView};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

type Plain = DataGraph<(), ()>;

fn path_avb() -> Plain {
    // a -> v -> b, ids 0,1,2
    let mut g = Plain::new();
    let a = g.add_vertex(()).unwrap();
    let v = g.add_vertex(()).unwrap();
    let b = g.add_vertex(()).unwrap();
    g.add_edge(a, v, ()).unwrap();
    g.add_edge(v, b, ()).unwrap();
    g.freeze();
    g
}

#[test]
fn exclusion_set_isolated_vertex() {
    let mut g = Plain::new();
    let v = g.add_vertex(()).unwrap();
    for model in [
        ConsistencyModel::Vertex,
        ConsistencyModel::Edge,
        ConsistencyModel::Full,
    ] {
        let s = exclusion_set(&g, v, model).unwrap();
        assert_eq!(s.entities(), &[Entity::Vertex(v)]);
    }
}

#[test]
fn exclusion_set_path_edge_model() {
    let g = path_avb();
    let s = exclusion_set(&g, VertexId(1), ConsistencyModel::Edge).unwrap();
    assert_eq!(
        s.entities(),
        &[
            Entity::Vertex(VertexId(1)),
            Entity::Edge(EdgeId(0)),
            Entity::Edge(EdgeId(1)),
        ]
    );
}

#[test]
fn exclusion_set_path_full_model() {
    let g = path_avb();
    let s = exclusion_set(&g, VertexId(1), ConsistencyModel::Full).unwrap();
    assert_eq!(
        s.entities(),
        &[
            Entity::Vertex(VertexId(0)),
            Entity::Vertex(VertexId(1)),
            Entity::Vertex(VertexId(2)),
            Entity::Edge(EdgeId(0)),
            Entity::Edge(EdgeId(1)),
        ]
    );
}

#[test]
fn exclusion_set_unknown_vertex() {
    let g = Plain::new();
    assert!(exclusion_set(&g, VertexId(3), ConsistencyModel::Edge).is_err());
}

fn random_graph(n: u32, density: f64, seed: u64) -> Plain {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut g = Plain::new();
    for _ in 0..n {
        g.add_vertex(()).unwrap();
    }
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random::<f64>() < density {
                g.add_edge(VertexId(u), VertexId(v), ()).unwrap();
            }
        }
    }
    g.freeze();
    g
}

proptest! {
    /// vertex ⊆ edge ⊆ full for every vertex.
    #[test]
    fn model_strength_ordering(n in 1u32..40, density in 0.0f64..0.3, seed in 0u64..200) {
        let g = random_graph(n, density, seed);
        for v in g.vertex_ids() {
            let vx = exclusion_set(&g, v, ConsistencyModel::Vertex).unwrap();
            let ed = exclusion_set(&g, v, ConsistencyModel::Edge).unwrap();
            let fu = exclusion_set(&g, v, ConsistencyModel::Full).unwrap();
            prop_assert!(vx.is_subset_of(&ed));
            prop_assert!(ed.is_subset_of(&fu));
        }
    }
}

/// Runs `f` on a fresh thread and panics if it does not finish in time.
fn with_deadline<F: FnOnce() + Send + 'static>(timeout: Duration, f: F) {
    let done = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&done);
    std::thread::spawn(move || {
        f();
        flag.store(true, Ordering::SeqCst);
    });
    let start = Instant::now();
    while !done.load(Ordering::SeqCst) {
        assert!(start.elapsed() < timeout, "deadline exceeded (possible deadlock)");
        std::thread::sleep(Duration::from_millis(1));
    }
}

#[test]
fn non_adjacent_edge_scopes_grant_concurrently() {
    // 0 -> 1, vertex 2 isolated; scopes of 0 and 2 are disjoint.
    let mut g = Plain::new();
    for _ in 0..3 {
        g.add_vertex(()).unwrap();
    }
    g.add_edge(VertexId(0), VertexId(1), ()).unwrap();
    g.freeze();
    let g = Arc::new(g);
    let locks = Arc::new(LockTable::new(3));

    with_deadline(Duration::from_secs(10), move || {
        let holding = Arc::new(Barrier::new(2));
        std::thread::scope(|s| {
            let t1 = {
                let (g, locks, holding) = (Arc::clone(&g), Arc::clone(&locks), Arc::clone(&holding));
                s.spawn(move || {
                    let scope = g.scope_of(VertexId(0)).unwrap();
                    let _guard = locks.acquire(&scope, ConsistencyModel::Edge);
                    holding.wait(); // both scopes held at this point
                })
            };
            let (g, locks) = (Arc::clone(&g), Arc::clone(&locks));
            s.spawn(move || {
                let scope = g.scope_of(VertexId(2)).unwrap();
                let _guard = locks.acquire(&scope, ConsistencyModel::Edge);
                holding.wait();
            });
            t1.join().unwrap();
        });
    });
}

#[test]
fn adjacent_vertex_scopes_grant_concurrently() {
    let mut g = Plain::new();
    g.add_vertex(()).unwrap();
    g.add_vertex(()).unwrap();
    g.add_edge(VertexId(0), VertexId(1), ()).unwrap();
    g.freeze();
    let g = Arc::new(g);
    let locks = Arc::new(LockTable::new(2));

    with_deadline(Duration::from_secs(10), move || {
        let holding = Arc::new(Barrier::new(2));
        std::thread::scope(|s| {
            for v in 0..2u32 {
                let (g, locks, holding) = (Arc::clone(&g), Arc::clone(&locks), Arc::clone(&holding));
                s.spawn(move || {
                    let scope = g.scope_of(VertexId(v)).unwrap();
                    let _guard = locks.acquire(&scope, ConsistencyModel::Vertex);
                    holding.wait();
                });
            }
        });
    });
}

#[test]
fn adjacent_full_scopes_serialize_and_release_unblocks() {
    let mut g = Plain::new();
    g.add_vertex(()).unwrap();
    g.add_vertex(()).unwrap();
    g.add_edge(VertexId(0), VertexId(1), ()).unwrap();
    g.freeze();
    let g = Arc::new(g);
    let locks = Arc::new(LockTable::new(2));

    let first_held = Arc::new(Barrier::new(2));
    let second_granted = Arc::new(AtomicBool::new(false));

    let waiter = {
        let (g, locks) = (Arc::clone(&g), Arc::clone(&locks));
        let (first_held, second_granted) = (Arc::clone(&first_held), Arc::clone(&second_granted));
        std::thread::spawn(move || {
            first_held.wait();
            let scope = g.scope_of(VertexId(1)).unwrap();
            let _guard = locks.acquire(&scope, ConsistencyModel::Full);
            second_granted.store(true, Ordering::SeqCst);
        })
    };

    {
        let scope = g.scope_of(VertexId(0)).unwrap();
        let _guard = locks.acquire(&scope, ConsistencyModel::Full);
        first_held.wait();
        std::thread::sleep(Duration::from_millis(100));
        assert!(
            !second_granted.load(Ordering::SeqCst),
            "overlapping full scopes granted concurrently"
        );
    } // release

    waiter.join().unwrap();
    assert!(second_granted.load(Ordering::SeqCst));
}

#[test]
fn reacquire_after_release() {
    let mut g = Plain::new();
    g.add_vertex(()).unwrap();
    g.freeze();
    let locks = LockTable::new(1);
    let scope = g.scope_of(VertexId(0)).unwrap();
    drop(locks.acquire(&scope, ConsistencyModel::Full));
    drop(locks.acquire(&scope, ConsistencyModel::Full));
}

#[test]
#[should_panic(expected = "contract violation")]
fn reentrant_acquisition_panics() {
    let mut g = Plain::new();
    g.add_vertex(()).unwrap();
    g.add_vertex(()).unwrap();
    g.freeze();
    let locks = LockTable::new(2);
    let s0 = g.scope_of(VertexId(0)).unwrap();
    let s1 = g.scope_of(VertexId(1)).unwrap();
    let _outer = locks.acquire(&s0, ConsistencyModel::Vertex);
    let _inner = locks.acquire(&s1, ConsistencyModel::Vertex);
}

#[test]
fn audit_counts_overlap() {
    let audit = Audit::new(2, 1);
    let set = ExclusionSet {
        entities: vec![Entity::Vertex(VertexId(0)), Entity::Edge(EdgeId(0))],
    };
    audit.on_grant(&set, &[]);
    audit.on_grant(&set, &[]); // deliberately overlapping
    assert!(audit.violations.load(Ordering::SeqCst) > 0);
    audit.on_release(&set, &[]);
    audit.on_release(&set, &[]);
}

fn stress_workers(
    graph: Arc<Plain>,
    locks: Arc<LockTable>,
    model: ConsistencyModel,
    workers: usize,
    tasks_per_worker: usize,
) {
    std::thread::scope(|s| {
        for w in 0..workers {
            let graph = Arc::clone(&graph);
            let locks = Arc::clone(&locks);
            s.spawn(move || {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(w as u64);
                let n = graph.vertex_count() as u32;
                for _ in 0..tasks_per_worker {
                    let v = VertexId(rng.random_range(0..n));
                    let scope = graph.scope_of(v).unwrap();
                    let _guard = locks.acquire(&scope, model);
                    std::hint::black_box(&scope);
                }
            });
        }
    });
}

#[test]
fn instrumented_stress_no_violations() {
    for (workers, model) in [
        (2, ConsistencyModel::Edge),
        (8, ConsistencyModel::Edge),
        (4, ConsistencyModel::Full),
        (16, ConsistencyModel::Full),
    ] {
        let graph = Arc::new(random_graph(100, 0.05, 7));
        let locks = Arc::new(LockTable::with_audit(
            graph.vertex_count(),
            graph.edge_count(),
        ));
        stress_workers(Arc::clone(&graph), Arc::clone(&locks), model, workers, 2_000);
        assert_eq!(locks.audit_violations(), Some(0), "model {model:?}");
    }
}

/// Adversarial adjacent-vertex streams; a million acquisitions must finish
/// well within the timeout if the ordered protocol is deadlock-free.
#[test]
fn deadlock_freedom_stress() {
    // Dense ring of 16 vertices so neighboring scopes collide constantly.
    let mut g = Plain::new();
    let n = 16u32;
    for _ in 0..n {
        g.add_vertex(()).unwrap();
    }
    for v in 0..n {
        g.add_edge(VertexId(v), VertexId((v + 1) % n), ()).unwrap();
        g.add_edge(VertexId(v), VertexId((v + 2) % n), ()).unwrap();
    }
    g.freeze();
    let graph = Arc::new(g);
    let locks = Arc::new(LockTable::new(n as usize));

    with_deadline(Duration::from_secs(30), move || {
        stress_workers(graph, locks, ConsistencyModel::Full, 8, 125_000);
    });
}

// --- Constructive sequential-consistency check -------------------------

/// Vertex record for the linearizability probe: a counter plus the log of
/// neighborhood-counter sums observed at each update.
#[derive(Clone, Default, PartialEq, Debug)]
struct Rec {
    counter: u64,
    log: Vec<u64>,
}

type RecGraph = DataGraph<Rec, ()>;

/// The probe update: read counters across the scope, append the sum, bump
/// the local counter. Writes touch only the center vertex.
fn probe_update(view: &mut ScopeView<'_, Rec, ()>, read_neighbors: bool) {
    let mut sum = view.center_data().counter;
    if read_neighbors {
        for &u in view.neighbors() {
            sum += view.neighbor_data(u).counter;
        }
    }
    let rec = view.center_data_mut();
    rec.log.push(sum);
    rec.counter += 1;
}

fn sequential_replay(graph_edges: &[(u32, u32)], n: u32, order: &[u32], read_neighbors: bool) -> Vec<Rec> {
    let mut g = RecGraph::new();
    for _ in 0..n {
        g.add_vertex(Rec::default()).unwrap();
    }
    for &(u, v) in graph_edges {
        g.add_edge(VertexId(u), VertexId(v), ()).unwrap();
    }
    g.freeze();
    for &v in order {
        let scope = g.scope_of(VertexId(v)).unwrap();
        let mut view = ScopeView::new(&g, &scope, ConsistencyModel::Edge.access());
        probe_update(&mut view, read_neighbors);
    }
    g.vertex_ids().map(|v| g.vertex_data(v).clone()).collect()
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn run_parallel_probe(
    graph_edges: &[(u32, u32)],
    n: u32,
    tasks: &[u32],
    model: ConsistencyModel,
    read_neighbors: bool,
) -> Vec<Rec> {
    let mut g = RecGraph::new();
    for _ in 0..n {
        g.add_vertex(Rec::default()).unwrap();
    }
    for &(u, v) in graph_edges {
        g.add_edge(VertexId(u), VertexId(v), ()).unwrap();
    }
    g.freeze();
    let g = Arc::new(g);
    let locks = Arc::new(LockTable::new(n as usize));
    let queue = Arc::new(Mutex::new(tasks.to_vec()));

    std::thread::scope(|s| {
        for _ in 0..4 {
            let g = Arc::clone(&g);
            let locks = Arc::clone(&locks);
            let queue = Arc::clone(&queue);
            s.spawn(move || loop {
                let next = queue.lock().unwrap().pop();
                let Some(v) = next else { break };
                let scope = g.scope_of(VertexId(v)).unwrap();
                let _guard = locks.acquire(&scope, model);
                let mut view = ScopeView::new(&g, &scope, model.access());
                probe_update(&mut view, read_neighbors);
            });
        }
    });

    let g = Arc::try_unwrap(g).ok().expect("all workers joined");
    g.vertex_ids().map(|v| g.vertex_data(v).clone()).collect()
}

/// Edge model + updates that write only their own vertex: every parallel
/// trace must be reproducible by some sequential order of the same tasks.
#[test]
fn sequential_consistency_edge_model() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for trial in 0..20 {
        let n = rng.random_range(3..=8u32);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((u, v));
                }
            }
        }
        let tasks: Vec<u32> = (0..6).map(|_| rng.random_range(0..n)).collect();
        let parallel = run_parallel_probe(&edges, n, &tasks, ConsistencyModel::Edge, true);
        let found = permutations(&tasks)
            .into_iter()
            .any(|order| sequential_replay(&edges, n, &order, true) == parallel);
        assert!(found, "trial {trial}: no sequential order reproduces the parallel result");
    }
}

/// Vertex model + purely local updates: same check.
#[test]
fn sequential_consistency_vertex_model() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
    for trial in 0..20 {
        let n = rng.random_range(3..=8u32);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((u, v));
                }
            }
        }
        let tasks: Vec<u32> = (0..6).map(|_| rng.random_range(0..n)).collect();
        let parallel = run_parallel_probe(&edges, n, &tasks, ConsistencyModel::Vertex, false);
        let found = permutations(&tasks)
            .into_iter()
            .any(|order| sequential_replay(&edges, n, &order, false) == parallel);
        assert!(found, "trial {trial}: no sequential order reproduces the parallel result");
    }
}
