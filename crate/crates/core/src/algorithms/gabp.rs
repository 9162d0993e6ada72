//! Gaussian belief propagation as an iterative solver for sparse symmetric
//! systems Ax = b. Potentials and messages are Gaussians carried
//! analytically as (precision, mean) pairs; convergence is guaranteed for
//! walk-summable (in particular diagonally dominant) systems.

use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, ScopeView, SdtReader, VertexId};
use crate::io::CooMatrix;
use crate::scalar::Real;
use crate::scheduling::{FunctionId, Task};

#[derive(Debug, Clone)]
pub struct GabpVertexData<F> {
    /// Diagonal entry A_ii.
    pub prior_precision: F,
    /// Right-hand side b_i.
    pub prior_mean_field: F,
    /// Posterior mean estimate (the solution component).
    pub mean: F,
    /// Posterior precision estimate.
    pub precision: F,
    /// Scratch slot for outer loops that pair per-variable state with the
    /// solver (e.g. the current interior-point iterate). Not read by the
    /// solver itself.
    pub aux: F,
}

#[derive(Debug, Clone)]
pub struct GabpEdgeData<F> {
    /// Off-diagonal entry A_ij for the directed edge i -> j.
    pub coeff: F,
    /// Message precision P_{i->j}.
    pub precision: F,
    /// Message mean mu_{i->j}.
    pub mean: F,
}

impl<F: Real> GabpVertexData<F> {
    pub fn new(a_ii: F, b_i: F) -> Self {
        GabpVertexData {
            prior_precision: a_ii,
            prior_mean_field: b_i,
            mean: F::zero(),
            precision: F::zero(),
            aux: F::zero(),
        }
    }
}

pub struct GabpUpdate<F> {
    pub function: FunctionId,
    pub residual_bound: F,
}

impl<F: Real> UpdateFn<GabpVertexData<F>, GabpEdgeData<F>> for GabpUpdate<F> {
    fn apply(
        &self,
        view: &mut ScopeView<'_, GabpVertexData<F>, GabpEdgeData<F>>,
        _sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        let in_edges: Vec<_> = view.in_edges().to_vec();
        let out_edges: Vec<_> = view.out_edges().to_vec();

        // Aggregate the prior with every inbound message.
        let (a_ii, b_i) = {
            let d = view.center_data();
            (d.prior_precision, d.prior_mean_field)
        };
        let mut precision = a_ii;
        let mut mean_field = b_i;
        // Remember each source's contribution for cavity subtraction.
        let mut inbound: Vec<(VertexId, F, F)> = Vec::with_capacity(in_edges.len());
        for &e in &in_edges {
            let (source, _) = view.edge_endpoints(e);
            let msg = view.edge_data(e);
            precision = precision + msg.precision;
            mean_field = mean_field + msg.precision * msg.mean;
            inbound.push((source, msg.precision, msg.precision * msg.mean));
        }
        if !(precision > F::zero()) || !precision.is_finite() {
            return Err(UpdateError::NumericalDivergence(format!(
                "non-positive posterior precision {precision} at {} (system likely not walk-summable)",
                view.center()
            )));
        }
        {
            let d = view.center_data_mut();
            d.precision = precision;
            d.mean = mean_field / precision;
        }

        for &out in &out_edges {
            let (_, target) = view.edge_endpoints(out);
            let (rev_precision, rev_mean_field) = inbound
                .iter()
                .find(|&&(s, _, _)| s == target)
                .map(|&(_, p, pm)| (p, pm))
                .unwrap_or((F::zero(), F::zero()));
            let cavity_precision = precision - rev_precision;
            let cavity_mean_field = mean_field - rev_mean_field;
            if !(cavity_precision > F::zero()) || !cavity_precision.is_finite() {
                return Err(UpdateError::NumericalDivergence(format!(
                    "non-positive cavity precision {cavity_precision} on {} -> {target} \
                     (system likely not walk-summable)",
                    view.center()
                )));
            }
            let a_ij = view.edge_data(out).coeff;
            let new_precision = -(a_ij * a_ij) / cavity_precision;
            let new_mean = cavity_mean_field / a_ij;
            let (old_precision, old_mean) = {
                let e = view.edge_data(out);
                (e.precision, e.mean)
            };
            let residual =
                (new_precision - old_precision).abs() + (new_mean - old_mean).abs();
            {
                let e = view.edge_data_mut(out);
                e.precision = new_precision;
                e.mean = new_mean;
            }
            if residual > self.residual_bound && sink.supports_dynamic_tasks() {
                sink.add_task(Task::with_priority(
                    target,
                    self.function,
                    residual.to_f64().unwrap_or(f64::MAX),
                ));
            }
        }
        Ok(())
    }
}

/// Builds the solver graph for a symmetric system given in coordinate
/// form. Diagonal entries become vertex priors; each off-diagonal nonzero
/// becomes a directed edge (both directions must be present or the input
/// must carry only one triangle of a symmetric matrix — missing reverse
/// entries are mirrored).
pub fn build_graph<F: Real>(
    a: &CooMatrix<F>,
    b: &[F],
) -> DataGraph<GabpVertexData<F>, GabpEdgeData<F>> {
    assert_eq!(a.rows, a.cols, "system matrix must be square");
    assert_eq!(a.rows, b.len(), "rhs length must match");
    let n = a.rows;
    let mut diag = vec![F::zero(); n];
    let mut off: std::collections::BTreeMap<(usize, usize), F> = std::collections::BTreeMap::new();
    for &(r, c, v) in &a.entries {
        if r == c {
            diag[r] = diag[r] + v;
        } else {
            off.insert((r, c), v);
        }
    }
    let mirrored: Vec<((usize, usize), F)> = off
        .iter()
        .filter(|&(&(r, c), _)| !off.contains_key(&(c, r)))
        .map(|(&(r, c), &v)| ((c, r), v))
        .collect();
    off.extend(mirrored);

    let mut g = DataGraph::new();
    for i in 0..n {
        g.add_vertex(GabpVertexData::new(diag[i], b[i])).unwrap();
    }
    for (&(r, c), &v) in &off {
        g.add_edge(
            VertexId(r as u32),
            VertexId(c as u32),
            GabpEdgeData {
                coeff: v,
                precision: F::zero(),
                mean: F::zero(),
            },
        )
        .unwrap();
    }
    g.freeze();
    g
}

/// Current posterior means, i.e. the solution estimate.
pub fn solution<F: Real>(graph: &DataGraph<GabpVertexData<F>, GabpEdgeData<F>>) -> Vec<F> {
    graph.vertex_ids().map(|v| graph.vertex_data(v).mean).collect()
}

/// Every vertex as an initial task for a residual-driven run.
pub fn seed_tasks<F: Real>(
    graph: &DataGraph<GabpVertexData<F>, GabpEdgeData<F>>,
    function: FunctionId,
) -> Vec<Task> {
    graph
        .vertex_ids()
        .map(|v| Task::with_priority(v, function, f64::INFINITY))
        .collect()
}

/// Random diagonally dominant symmetric system for tests and demos.
pub fn random_dominant_system<F: Real>(
    n: usize,
    density: f64,
    seed: u64,
) -> (CooMatrix<F>, Vec<F>) {
    use crate::scalar::real;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut row_mass = vec![0.0f64; n];
    for r in 0..n {
        for c in (r + 1)..n {
            if rng.random::<f64>() < density {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                entries.push((r, c, real::<F>(v)));
                entries.push((c, r, real::<F>(v)));
                row_mass[r] += v.abs();
                row_mass[c] += v.abs();
            }
        }
    }
    for (r, mass) in row_mass.iter().enumerate() {
        entries.push((r, r, real::<F>(mass + 1.0 + rng.random::<f64>())));
    }
    let b: Vec<F> = (0..n)
        .map(|_| real::<F>(rng.random::<f64>() * 4.0 - 2.0))
        .collect();
    (
        CooMatrix {
            rows: n,
            cols: n,
            entries,
        },
        b,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::ConsistencyModel;
    use crate::engine::{Engine, EngineConfig, RunError};
    use crate::graph::SharedDataTable;
    use crate::scheduling::SchedulerSpec;
    use std::sync::Arc;

    const GABP: FunctionId = FunctionId(0);

    fn solve(
        a: CooMatrix<f64>,
        b: Vec<f64>,
        workers: usize,
    ) -> Result<Vec<f64>, RunError> {
        let graph = build_graph(&a, &b);
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(workers, ConsistencyModel::Edge),
        );
        eng.register_update(
            GABP,
            Arc::new(GabpUpdate {
                function: GABP,
                residual_bound: 1e-12,
            }),
        );
        let tasks = seed_tasks(eng.graph(), GABP);
        eng.run(&SchedulerSpec::Priority, &tasks)?;
        Ok(solution(eng.graph()))
    }

    #[test]
    fn identity_converges_in_one_sweep() {
        let a = CooMatrix {
            rows: 3,
            cols: 3,
            entries: (0..3).map(|i| (i, i, 1.0)).collect(),
        };
        let b = vec![1.5, -2.0, 0.25];
        assert_eq!(solve(a, b.clone(), 1).unwrap(), b);
    }

    #[test]
    fn diagonal_scales_rhs() {
        let a = CooMatrix {
            rows: 3,
            cols: 3,
            entries: vec![(0, 0, 2.0), (1, 1, 4.0), (2, 2, 0.5)],
        };
        let x = solve(a, vec![1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(x, vec![0.5, 0.25, 2.0]);
    }

    #[test]
    fn two_by_two_exact() {
        // [[2,1],[1,2]] x = [3,3] has x = [1,1].
        let a = CooMatrix {
            rows: 2,
            cols: 2,
            entries: vec![(0, 0, 2.0), (1, 1, 2.0), (0, 1, 1.0), (1, 0, 1.0)],
        };
        let x = solve(a, vec![3.0, 3.0], 1).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominant_system_matches_direct_solve() {
        use nalgebra::{DMatrix, DVector};
        let (a, b) = random_dominant_system::<f64>(20, 0.3, 42);
        let mut dense = DMatrix::<f64>::zeros(20, 20);
        for &(r, c, v) in &a.entries {
            dense[(r, c)] += v;
        }
        let oracle = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let x = solve(a, b, 4).unwrap();
        for (xi, oi) in x.iter().zip(oracle.iter()) {
            assert!((xi - oi).abs() < 1e-6, "{xi} vs {oi}");
        }
    }

    #[test]
    fn non_walk_summable_reports_divergence() {
        // Off-diagonal mass overwhelms the diagonal; the cavity precision
        // goes non-positive quickly.
        let a = CooMatrix {
            rows: 2,
            cols: 2,
            entries: vec![(0, 0, 1.0), (1, 1, 1.0), (0, 1, 5.0), (1, 0, 5.0)],
        };
        let err = solve(a, vec![1.0, 1.0], 1).unwrap_err();
        assert!(matches!(
            err,
            RunError::UpdateFailed {
                source: UpdateError::NumericalDivergence(_),
                ..
            }
        ));
    }

    #[test]
    fn symmetric_triangle_input_is_mirrored() {
        let a = CooMatrix {
            rows: 2,
            cols: 2,
            entries: vec![(0, 0, 2.0), (1, 1, 2.0), (0, 1, 1.0)], // one triangle
        };
        let graph = build_graph(&a, &[3.0, 3.0]);
        assert_eq!(graph.edge_count(), 2);
    }
}
