//! The shooting algorithm: coordinate-descent Lasso over a bipartite
//! weight/observation graph. Each update is the exact minimizer of the
//! objective in one coordinate, using residuals cached on the observation
//! vertices.
//!
//! Residuals are word-sized atomics, so the relaxed variant (vertex
//! consistency, no neighbor locks) reads and revises them without torn
//! values; under full consistency the scope locks already serialize every
//! access and the updates are sequentially consistent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, ScopeView, SdtReader, VertexId};
use crate::io::CooMatrix;
use crate::scalar::{real, AtomicReal, Real};
use crate::scheduling::{FunctionId, Task};

#[derive(Debug)]
pub enum LassoVertex<F: Real> {
    Weight {
        value: F,
        /// Cached curvature a_i = 2 sum_j X_ij^2.
        norm: F,
    },
    Observation {
        target: F,
        /// Cached residual r_j = y_j - w^T x_j.
        residual: F::Atomic,
    },
}

#[derive(Debug, Clone)]
pub struct LassoEdge<F> {
    /// Design-matrix entry X_ij joining weight i and observation j.
    pub coeff: F,
}

#[inline]
pub fn soft_threshold<F: Real>(c: F, lambda: F) -> F {
    let mag = c.abs() - lambda;
    if mag > F::zero() {
        c.signum() * mag
    } else {
        F::zero()
    }
}

pub struct ShootingUpdate<F> {
    pub function: FunctionId,
    pub lambda: F,
    /// Minimum coordinate move that triggers residual revision and
    /// rescheduling.
    pub epsilon: F,
}

impl<F: Real> UpdateFn<LassoVertex<F>, LassoEdge<F>> for ShootingUpdate<F> {
    fn apply(
        &self,
        view: &mut ScopeView<'_, LassoVertex<F>, LassoEdge<F>>,
        _sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        let (w_old, a) = match view.center_data() {
            LassoVertex::Weight { value, norm } => (*value, *norm),
            // Sweep schedules visit observation vertices too; they carry no
            // update of their own.
            LassoVertex::Observation { .. } => return Ok(()),
        };
        if a <= F::zero() {
            if let LassoVertex::Weight { value, .. } = view.center_data_mut() {
                *value = F::zero();
            }
            return Ok(());
        }

        let edges: Vec<_> = view
            .in_edges()
            .iter()
            .chain(view.out_edges().iter())
            .copied()
            .collect();
        let two = real::<F>(2.0);
        let mut c = F::zero();
        for &e in &edges {
            let x = view.edge_data(e).coeff;
            let (s, t) = view.edge_endpoints(e);
            let obs = if s == view.center() { t } else { s };
            let r = match view.neighbor_data(obs) {
                LassoVertex::Observation { residual, .. } => residual.load(),
                LassoVertex::Weight { .. } => {
                    return Err(UpdateError::Other(format!(
                        "weight vertex {obs} adjacent to a weight vertex"
                    )))
                }
            };
            c = c + two * x * (r + w_old * x);
        }

        let w_new = soft_threshold(c, self.lambda) / a;
        let delta = w_new - w_old;
        if delta.abs() <= self.epsilon {
            return Ok(());
        }

        if let LassoVertex::Weight { value, .. } = view.center_data_mut() {
            *value = w_new;
        }
        for &e in &edges {
            let x = view.edge_data(e).coeff;
            let (s, t) = view.edge_endpoints(e);
            let obs = if s == view.center() { t } else { s };
            if let LassoVertex::Observation { residual, .. } = view.neighbor_data(obs) {
                residual.fetch_add(-x * delta);
            }
        }
        if sink.supports_dynamic_tasks() {
            let structure = view.structure();
            let mut targets: Vec<VertexId> = Vec::new();
            for &e in &edges {
                let (s, t) = view.edge_endpoints(e);
                let obs = if s == view.center() { t } else { s };
                for &(w, _) in structure.in_edges(obs).iter().chain(structure.out_edges(obs)) {
                    targets.push(w);
                }
            }
            targets.sort_unstable();
            targets.dedup();
            let priority = delta.abs().to_f64().unwrap_or(f64::MAX);
            for w in targets {
                sink.add_task(Task::with_priority(w, self.function, priority));
            }
        }
        Ok(())
    }
}

/// Builds the bipartite graph: weight vertices `0..d`, observation
/// vertices `d..d+n`, one edge per non-zero X_ij.
pub fn build_graph<F: Real>(
    x: &CooMatrix<F>,
    y: &[F],
) -> DataGraph<LassoVertex<F>, LassoEdge<F>> {
    assert_eq!(x.rows, y.len(), "one target per observation row");
    let d = x.cols;
    let mut norms = vec![F::zero(); d];
    for &(_, i, v) in &x.entries {
        norms[i] = norms[i] + real::<F>(2.0) * v * v;
    }
    let mut g = DataGraph::new();
    for &norm in &norms {
        g.add_vertex(LassoVertex::Weight {
            value: F::zero(),
            norm,
        })
        .unwrap();
    }
    for &target in y {
        g.add_vertex(LassoVertex::Observation {
            target,
            residual: F::Atomic::new(target), // w = 0 initially
        })
        .unwrap();
    }
    for &(j, i, v) in &x.entries {
        if v != F::zero() {
            g.add_edge(
                VertexId(i as u32),
                VertexId((d + j) as u32),
                LassoEdge { coeff: v },
            )
            .unwrap();
        }
    }
    g.freeze();
    g
}

pub fn weights<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>) -> Vec<F> {
    graph
        .vertex_ids()
        .filter_map(|v| match graph.vertex_data(v) {
            LassoVertex::Weight { value, .. } => Some(*value),
            LassoVertex::Observation { .. } => None,
        })
        .collect()
}

/// Residuals recomputed from scratch, independent of the cached values.
fn fresh_residuals<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>) -> Vec<(VertexId, F)> {
    let mut fitted: Vec<(VertexId, F)> = graph
        .vertex_ids()
        .filter_map(|v| match graph.vertex_data(v) {
            LassoVertex::Observation { target, .. } => Some((v, *target)),
            LassoVertex::Weight { .. } => None,
        })
        .collect();
    let index: std::collections::HashMap<VertexId, usize> = fitted
        .iter()
        .enumerate()
        .map(|(idx, &(v, _))| (v, idx))
        .collect();
    for e in graph.edge_ids() {
        let (u, v) = graph.endpoints(e);
        let (w_vertex, obs_vertex) = match graph.vertex_data(u) {
            LassoVertex::Weight { .. } => (u, v),
            LassoVertex::Observation { .. } => (v, u),
        };
        if let (LassoVertex::Weight { value, .. }, Some(&idx)) =
            (graph.vertex_data(w_vertex), index.get(&obs_vertex))
        {
            fitted[idx].1 = fitted[idx].1 - *value * graph.edge_data(e).coeff;
        }
    }
    fitted
}

/// L(w) = sum_j r_j^2 + lambda |w|_1, recomputed from scratch.
pub fn objective<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>, lambda: F) -> F {
    let rss: F = fresh_residuals(graph).iter().map(|&(_, r)| r * r).sum();
    let l1: F = weights(graph).iter().map(|w| w.abs()).sum();
    rss + lambda * l1
}

/// Worst KKT violation across coordinates, with residuals recomputed from
/// scratch: |grad_i + lambda sign(w_i)| when w_i != 0, otherwise
/// max(0, |grad_i| - lambda).
pub fn kkt_residual<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>, lambda: F) -> F {
    let fresh: std::collections::HashMap<VertexId, F> =
        fresh_residuals(graph).into_iter().collect();
    let mut grad: std::collections::HashMap<VertexId, F> = std::collections::HashMap::new();
    for e in graph.edge_ids() {
        let (u, v) = graph.endpoints(e);
        let (w_vertex, obs_vertex) = match graph.vertex_data(u) {
            LassoVertex::Weight { .. } => (u, v),
            LassoVertex::Observation { .. } => (v, u),
        };
        let x = graph.edge_data(e).coeff;
        let r = fresh[&obs_vertex];
        let slot = grad.entry(w_vertex).or_insert_with(F::zero);
        *slot = *slot - real::<F>(2.0) * x * r;
    }
    let mut worst = F::zero();
    for v in graph.vertex_ids() {
        if let LassoVertex::Weight { value, .. } = graph.vertex_data(v) {
            let g = grad.get(&v).copied().unwrap_or_else(F::zero);
            let kappa = if *value != F::zero() {
                (g + lambda * value.signum()).abs()
            } else {
                (g.abs() - lambda).max(F::zero())
            };
            worst = worst.max(kappa);
        }
    }
    worst
}

/// Largest cached-vs-recomputed residual discrepancy.
pub fn residual_staleness<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>) -> F {
    fresh_residuals(graph)
        .into_iter()
        .map(|(v, fresh)| match graph.vertex_data(v) {
            LassoVertex::Observation { residual, .. } => (residual.load() - fresh).abs(),
            LassoVertex::Weight { .. } => F::zero(),
        })
        .fold(F::zero(), F::max)
}

/// Synchronizes every cached residual with the recomputed value.
pub fn refresh_residuals<F: Real>(graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>) {
    for (v, fresh) in fresh_residuals(graph) {
        if let LassoVertex::Observation { residual, .. } = graph.vertex_data(v) {
            residual.store(fresh);
        }
    }
}

/// Sparse synthetic regression instance: X is `observations x features`
/// with the given nonzero density, a sparse true weight vector, and
/// Gaussian observation noise.
pub fn synthetic_instance<F: Real>(
    features: usize,
    observations: usize,
    density: f64,
    seed: u64,
) -> (CooMatrix<F>, Vec<F>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| {
        // Box-Muller, deterministic per stream.
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut entries = Vec::new();
    for j in 0..observations {
        for i in 0..features {
            if rng.random::<f64>() < density {
                entries.push((j, i, real::<F>(gauss(&mut rng))));
            }
        }
    }
    let true_w: Vec<f64> = (0..features)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                gauss(&mut rng) * 2.0
            } else {
                0.0
            }
        })
        .collect();
    let mut y = vec![0.0f64; observations];
    for &(j, i, v) in &entries {
        y[j] += v.to_f64().unwrap() * true_w[i];
    }
    for t in y.iter_mut() {
        *t += 0.1 * gauss(&mut rng);
    }
    (
        CooMatrix {
            rows: observations,
            cols: features,
            entries,
        },
        y.into_iter().map(real::<F>).collect(),
    )
}

/// Every weight vertex as an initial task, highest priority first id.
pub fn seed_tasks<F: Real>(
    graph: &DataGraph<LassoVertex<F>, LassoEdge<F>>,
    function: FunctionId,
) -> Vec<Task> {
    graph
        .vertex_ids()
        .filter(|&v| matches!(graph.vertex_data(v), LassoVertex::Weight { .. }))
        .map(|v| Task::with_priority(v, function, f64::INFINITY))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::ConsistencyModel;
    use crate::engine::{Engine, EngineConfig};
    use crate::graph::SharedDataTable;
    use crate::scheduling::SchedulerSpec;
    use std::sync::Arc;

    const SHOOT: FunctionId = FunctionId(0);

    fn single_feature(lambda: f64) -> f64 {
        let x = CooMatrix {
            rows: 1,
            cols: 1,
            entries: vec![(0usize, 0usize, 1.0f64)],
        };
        let graph = build_graph(&x, &[1.0]);
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(1, ConsistencyModel::Full),
        );
        eng.register_update(
            SHOOT,
            Arc::new(ShootingUpdate {
                function: SHOOT,
                lambda,
                epsilon: 1e-12,
            }),
        );
        let tasks = seed_tasks(eng.graph(), SHOOT);
        eng.run(&SchedulerSpec::FifoSingle, &tasks).unwrap();
        weights(eng.graph())[0]
    }

    /// min (w-1)^2 + |w| has the closed form soft(2,1)/2 = 0.5.
    #[test]
    fn scalar_instance_halves() {
        assert!((single_feature(1.0) - 0.5).abs() < 1e-12);
    }

    /// lambda at or beyond |c| = 2 zeroes the coordinate.
    #[test]
    fn scalar_instance_zeroes_at_large_lambda() {
        assert_eq!(single_feature(2.0), 0.0);
        assert_eq!(single_feature(5.0), 0.0);
    }

    #[test]
    fn zero_column_forced_to_zero() {
        let x = CooMatrix {
            rows: 1,
            cols: 2,
            entries: vec![(0usize, 0usize, 1.0f64)], // column 1 is empty
        };
        let graph = build_graph(&x, &[1.0]);
        assert!(matches!(
            graph.vertex_data(VertexId(1)),
            LassoVertex::Weight { norm, .. } if *norm == 0.0
        ));
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(1, ConsistencyModel::Full),
        );
        eng.register_update(
            SHOOT,
            Arc::new(ShootingUpdate {
                function: SHOOT,
                lambda: 0.1,
                epsilon: 1e-12,
            }),
        );
        let stats = eng
            .run(
                &SchedulerSpec::FifoSingle,
                &[Task::new(VertexId(1), SHOOT)],
            )
            .unwrap();
        assert_eq!(stats.updates_applied, 1, "no reschedule from a dead column");
        assert_eq!(weights(eng.graph())[1], 0.0);
    }

    /// With lambda = 0 on a well-conditioned square system, shooting
    /// converges to the least-squares solution (normal-equations oracle).
    #[test]
    fn unregularized_matches_least_squares() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v: f64 = rng.random::<f64>() * 0.4;
                let v = if i == j { v + 2.0 } else { v };
                dense[(j, i)] = v;
                entries.push((j, i, v));
            }
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = CooMatrix {
            rows: n,
            cols: n,
            entries,
        };
        let graph = build_graph(&x, &y);
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(2, ConsistencyModel::Full),
        );
        eng.register_update(
            SHOOT,
            Arc::new(ShootingUpdate {
                function: SHOOT,
                lambda: 0.0,
                epsilon: 1e-10,
            }),
        );
        let tasks = seed_tasks(eng.graph(), SHOOT);
        eng.run(&SchedulerSpec::Priority, &tasks).unwrap();

        let oracle = (dense.transpose() * &dense)
            .lu()
            .solve(&(dense.transpose() * DVector::from_vec(y.clone())))
            .unwrap();
        for (w, o) in weights(eng.graph()).iter().zip(oracle.iter()) {
            assert!((w - o).abs() < 1e-6, "{w} vs {o}");
        }
        assert!(kkt_residual(eng.graph(), 0.0) < 1e-6);
    }

    /// Full consistency keeps cached residuals exactly in step with the
    /// weights, and the objective never increases across sweeps.
    #[test]
    fn full_consistency_monotone_objective() {
        let (x, y) = synthetic_instance::<f64>(20, 40, 0.3, 7);
        let lambda = 0.5;
        let graph = build_graph(&x, &y);
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(4, ConsistencyModel::Full),
        );
        eng.register_update(
            SHOOT,
            Arc::new(ShootingUpdate {
                function: SHOOT,
                lambda,
                epsilon: 1e-9,
            }),
        );
        let mut last = objective(eng.graph(), lambda);
        for _ in 0..12 {
            eng.run(
                &SchedulerSpec::RoundRobin {
                    function: SHOOT,
                    sweeps: 1,
                },
                &[],
            )
            .unwrap();
            let now = objective(eng.graph(), lambda);
            assert!(
                now <= last + 1e-9,
                "objective rose from {last} to {now} under full consistency"
            );
            assert!(residual_staleness(eng.graph()) < 1e-8);
            last = now;
        }
    }
}
