//! CoEM: semi-supervised belief propagation over a bipartite
//! noun-phrase/context graph with co-occurrence weights. Non-seed beliefs
//! are weighted averages of neighbor beliefs; a vertex whose belief moved
//! past the threshold reschedules its neighbors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bp::l1_distance;
use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, ScopeView, SdtReader, VertexId};
use crate::scalar::{real, Real};
use crate::scheduling::FunctionId;

/// Rescheduling threshold on the L1 belief change.
pub const DEFAULT_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoemKind {
    NounPhrase,
    Context,
}

#[derive(Debug, Clone)]
pub struct CoemVertexData<F> {
    pub belief: Vec<F>,
    pub is_seed: bool,
    pub kind: CoemKind,
}

#[derive(Debug, Clone)]
pub struct CoemEdgeData<F> {
    /// Co-occurrence count (non-negative).
    pub weight: F,
}

impl<F: Real> CoemVertexData<F> {
    pub fn uniform(classes: usize, kind: CoemKind) -> Self {
        CoemVertexData {
            belief: vec![F::one() / real::<F>(classes as f64); classes],
            is_seed: false,
            kind,
        }
    }

    pub fn seed(class: usize, classes: usize, kind: CoemKind) -> Self {
        let mut belief = vec![F::zero(); classes];
        belief[class] = F::one();
        CoemVertexData {
            belief,
            is_seed: true,
            kind,
        }
    }
}

pub struct CoemUpdate<F> {
    pub function: FunctionId,
    pub threshold: F,
}

impl<F: Real> UpdateFn<CoemVertexData<F>, CoemEdgeData<F>> for CoemUpdate<F> {
    fn apply(
        &self,
        view: &mut ScopeView<'_, CoemVertexData<F>, CoemEdgeData<F>>,
        _sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        if view.center_data().is_seed {
            return Ok(());
        }
        let classes = view.center_data().belief.len();
        let mut acc = vec![F::zero(); classes];
        let mut total_weight = F::zero();
        let edges: Vec<_> = view
            .in_edges()
            .iter()
            .chain(view.out_edges().iter())
            .copied()
            .collect();
        for e in edges {
            let (s, t) = view.edge_endpoints(e);
            let neighbor = if s == view.center() { t } else { s };
            let w = view.edge_data(e).weight;
            total_weight = total_weight + w;
            let nb = &view.neighbor_data(neighbor).belief;
            for (a, &b) in acc.iter_mut().zip(nb) {
                *a = *a + w * b;
            }
        }
        if !(total_weight > F::zero()) {
            // Isolated non-seed vertex: leave the uniform belief in place.
            log::warn!(
                "coem: vertex {} has no weighted neighbors; belief left uniform",
                view.center()
            );
            return Ok(());
        }
        for a in acc.iter_mut() {
            *a = *a / total_weight;
        }
        let delta = l1_distance(&acc, &view.center_data().belief);
        view.center_data_mut().belief = acc;
        if delta > self.threshold && sink.supports_dynamic_tasks() {
            let neighbors: Vec<VertexId> = view.neighbors().to_vec();
            for u in neighbors {
                sink.add_task(crate::scheduling::Task::new(u, self.function));
            }
        }
        Ok(())
    }
}

/// Random bipartite instance: NP vertices 0..n_np, CT vertices
/// n_np..n_np+n_ct, edges NP -> CT with positive weights. At least one
/// context per class is seeded; `seed_fraction` of the context side is
/// seeded in total (classes assigned round-robin), which keeps the
/// averaging iteration well anchored.
pub fn random_bipartite<F: Real>(
    n_np: usize,
    n_ct: usize,
    classes: usize,
    density: f64,
    seed_fraction: f64,
    seed: u64,
) -> DataGraph<CoemVertexData<F>, CoemEdgeData<F>> {
    assert!(n_ct >= classes, "need at least one context per class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DataGraph::new();
    for _ in 0..n_np {
        g.add_vertex(CoemVertexData::uniform(classes, CoemKind::NounPhrase))
            .unwrap();
    }
    let seeded = ((n_ct as f64 * seed_fraction).ceil() as usize).clamp(classes, n_ct);
    for j in 0..n_ct {
        let data = if j < seeded {
            CoemVertexData::seed(j % classes, classes, CoemKind::Context)
        } else {
            CoemVertexData::uniform(classes, CoemKind::Context)
        };
        g.add_vertex(data).unwrap();
    }
    for i in 0..n_np {
        let mut connected = false;
        for j in 0..n_ct {
            if rng.random::<f64>() < density {
                g.add_edge(
                    VertexId(i as u32),
                    VertexId((n_np + j) as u32),
                    CoemEdgeData {
                        weight: real::<F>(rng.random_range(1..20) as f64),
                    },
                )
                .unwrap();
                connected = true;
            }
        }
        if !connected {
            // Keep every noun phrase attached so the fixed point is fully
            // determined by the seeds.
            let j = rng.random_range(0..n_ct);
            g.add_edge(
                VertexId(i as u32),
                VertexId((n_np + j) as u32),
                CoemEdgeData {
                    weight: real::<F>(1.0),
                },
            )
            .unwrap();
        }
    }
    g.freeze();
    g
}

pub fn beliefs<F: Real>(
    graph: &DataGraph<CoemVertexData<F>, CoemEdgeData<F>>,
) -> Vec<Vec<F>> {
    graph
        .vertex_ids()
        .map(|v| graph.vertex_data(v).belief.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::ConsistencyModel;
    use crate::engine::{Engine, EngineConfig};
    use crate::graph::SharedDataTable;
    use crate::scheduling::{SchedulerSpec, Task};
    use std::sync::Arc;

    const COEM: FunctionId = FunctionId(0);

    fn engine(
        graph: DataGraph<CoemVertexData<f64>, CoemEdgeData<f64>>,
        workers: usize,
    ) -> Engine<CoemVertexData<f64>, CoemEdgeData<f64>> {
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(workers, ConsistencyModel::Edge),
        );
        eng.register_update(
            COEM,
            Arc::new(CoemUpdate {
                function: COEM,
                threshold: DEFAULT_THRESHOLD,
            }),
        );
        eng
    }

    #[test]
    fn np_adopts_single_seed_belief() {
        let mut g = DataGraph::new();
        g.add_vertex(CoemVertexData::uniform(2, CoemKind::NounPhrase))
            .unwrap();
        g.add_vertex(CoemVertexData::seed(0, 2, CoemKind::Context))
            .unwrap();
        g.add_edge(VertexId(0), VertexId(1), CoemEdgeData { weight: 3.0 })
            .unwrap();
        g.freeze();
        let eng = engine(g, 1);
        eng.run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), COEM)])
            .unwrap();
        assert_eq!(eng.graph().vertex_data(VertexId(0)).belief, vec![1.0, 0.0]);
    }

    #[test]
    fn seeds_never_change() {
        let mut g = DataGraph::new();
        g.add_vertex(CoemVertexData::seed(1, 2, CoemKind::NounPhrase))
            .unwrap();
        g.add_vertex(CoemVertexData::seed(0, 2, CoemKind::Context))
            .unwrap();
        g.add_edge(VertexId(0), VertexId(1), CoemEdgeData { weight: 1.0 })
            .unwrap();
        g.freeze();
        let eng = engine(g, 1);
        eng.run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), COEM)])
            .unwrap();
        assert_eq!(eng.graph().vertex_data(VertexId(0)).belief, vec![0.0, 1.0]);
    }

    #[test]
    fn symmetric_instance_has_symmetric_fixed_point() {
        // Hand-built symmetric 2-NP / 2-CT square with equal weights and
        // complementary seeds: the NP beliefs mirror each other.
        let mut g = DataGraph::new();
        g.add_vertex(CoemVertexData::uniform(2, CoemKind::NounPhrase))
            .unwrap();
        g.add_vertex(CoemVertexData::uniform(2, CoemKind::NounPhrase))
            .unwrap();
        g.add_vertex(CoemVertexData::seed(0, 2, CoemKind::Context))
            .unwrap();
        g.add_vertex(CoemVertexData::seed(1, 2, CoemKind::Context))
            .unwrap();
        for np in 0..2u32 {
            for ct in 2..4u32 {
                g.add_edge(VertexId(np), VertexId(ct), CoemEdgeData { weight: 2.0 })
                    .unwrap();
            }
        }
        g.freeze();
        let eng = engine(g, 2);
        let tasks: Vec<Task> = (0..2).map(|v| Task::new(VertexId(v), COEM)).collect();
        eng.run(&SchedulerSpec::FifoSingle, &tasks).unwrap();
        let b0 = eng.graph().vertex_data(VertexId(0)).belief.clone();
        let b1 = eng.graph().vertex_data(VertexId(1)).belief.clone();
        assert_eq!(b0, vec![0.5, 0.5]);
        assert_eq!(b0, b1);
    }

    #[test]
    fn isolated_non_seed_stays_uniform() {
        let mut g = DataGraph::new();
        g.add_vertex(CoemVertexData::uniform(3, CoemKind::NounPhrase))
            .unwrap();
        g.freeze();
        let eng = engine(g, 1);
        eng.run(&SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), COEM)])
            .unwrap();
        let b = &eng.graph().vertex_data(VertexId(0)).belief;
        assert!(b.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn quiescent_beliefs_are_a_fixed_point() {
        let g = random_bipartite::<f64>(8, 6, 2, 0.4, 0.34, 11);
        let eng = engine(g, 4);
        let n = eng.graph().vertex_count() as u32;
        let tasks: Vec<Task> = (0..n).map(|v| Task::new(VertexId(v), COEM)).collect();
        eng.run(&SchedulerSpec::FifoMultiQueue, &tasks).unwrap();
        // Sub-threshold drifts can cascade, so quiescence bounds further
        // movement only up to the contraction-amplified threshold.
        let before = beliefs(eng.graph());
        eng.run(&SchedulerSpec::FifoMultiQueue, &tasks).unwrap();
        let after = beliefs(eng.graph());
        for (b, a) in before.iter().zip(&after) {
            assert!(l1_distance(b, a) <= 1e-3);
        }
    }
}
