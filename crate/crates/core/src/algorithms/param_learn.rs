//! Learning the per-axis smoothing parameters of the grid MRF by moment
//! matching, driven entirely by the sync mechanism: one sync computes
//! axis-aligned smoothed observations as a ground-truth proxy, one
//! aggregates the proxy's empirical label disagreement, and a periodic
//! sync aggregates the model's expected disagreement under the current
//! beliefs and applies a gradient step to the shared parameters.

use std::time::Duration;

use super::bp::{BpEdgeData, BpVertexData, LAMBDA_KEY};
use crate::graph::{ScopeView, SyncRegistration};
use crate::scalar::{real, Real};

pub const SMOOTHING_KEY: &str = "axis_smoothing";
pub const EMPIRICAL_KEY: &str = "axis_stats_empirical";

/// Per-axis accumulator of summed disagreement and edge count.
#[derive(Debug, Clone)]
pub struct AxisStats<F> {
    pub sum: Vec<F>,
    pub count: Vec<u64>,
}

impl<F: Real> AxisStats<F> {
    pub fn zero(axes: usize) -> Self {
        AxisStats {
            sum: vec![F::zero(); axes],
            count: vec![0; axes],
        }
    }

    pub fn add(&mut self, axis: usize, value: F) {
        self.sum[axis] = self.sum[axis] + value;
        self.count[axis] += 1;
    }

    pub fn means(&self) -> Vec<F> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c == 0 { F::zero() } else { s / real::<F>(c as f64) })
            .collect()
    }
}

fn quantize<F: Real>(x: F, k: usize) -> f64 {
    let v = x.round().to_f64().unwrap_or(0.0);
    v.clamp(0.0, k as f64 - 1.0)
}

type Reg<F> = SyncRegistration<BpVertexData<F>, BpEdgeData<F>>;

/// Pass one of the proxy construction: store, per vertex and axis, the
/// mean observation over the vertex and its axis-aligned neighbors.
pub fn smoothing_sync<F: Real>(axes: usize) -> Reg<F> {
    SyncRegistration::new(
        SMOOTHING_KEY,
        0u64,
        move |view: &mut ScopeView<'_, BpVertexData<F>, BpEdgeData<F>>, acc: u64| {
            let mut sums = vec![view.center_data().observation; axes];
            let mut counts = vec![1u64; axes];
            // Grids are bidirected, so out-edges alone visit each neighbor
            // exactly once.
            let edges: Vec<_> = view.out_edges().to_vec();
            for e in edges {
                let axis = view.edge_data(e).axis as usize;
                let (_, neighbor) = view.edge_endpoints(e);
                sums[axis] = sums[axis] + view.neighbor_data(neighbor).observation;
                counts[axis] += 1;
            }
            view.center_data_mut().smoothed = sums
                .iter()
                .zip(&counts)
                .map(|(&s, &c)| s / real::<F>(c as f64))
                .collect();
            acc + 1
        },
        |_prev: Option<&u64>, acc| acc,
    )
}

/// Pass two: empirical mean absolute label disagreement of the quantized
/// proxy along each axis. Requires the smoothing pass to have run.
pub fn empirical_stats_sync<F: Real>(axes: usize, k: usize) -> Reg<F> {
    SyncRegistration::new(
        EMPIRICAL_KEY,
        AxisStats::<F>::zero(axes),
        move |view: &mut ScopeView<'_, BpVertexData<F>, BpEdgeData<F>>, mut acc: AxisStats<F>| {
            let out: Vec<_> = view.out_edges().to_vec();
            for e in out {
                let axis = view.edge_data(e).axis as usize;
                let (_, t) = view.edge_endpoints(e);
                let own = view.center_data().smoothed.get(axis).copied();
                let theirs = view.neighbor_data(t).smoothed.get(axis).copied();
                if let (Some(a), Some(b)) = (own, theirs) {
                    acc.add(axis, real::<F>((quantize(a, k) - quantize(b, k)).abs()));
                }
            }
            acc
        },
        |_prev: Option<&Vec<F>>, acc: AxisStats<F>| acc.means(),
    )
}

/// The learning sync on the shared parameter vector: fold the model's
/// expected absolute label disagreement under the current beliefs, then
/// step each lambda toward the moment match
/// `lambda += eta * (model - empirical)`, floored at `lambda_min`.
/// Expected disagreement falls as lambda grows, so the iteration contracts
/// onto the matching point.
pub fn lambda_learning_sync<F: Real>(
    axes: usize,
    empirical: Vec<F>,
    eta: F,
    lambda_min: F,
    period: Option<Duration>,
) -> Reg<F> {
    let reg = SyncRegistration::new(
        LAMBDA_KEY,
        AxisStats::<F>::zero(axes),
        move |view: &mut ScopeView<'_, BpVertexData<F>, BpEdgeData<F>>, mut acc: AxisStats<F>| {
            let out: Vec<_> = view.out_edges().to_vec();
            for e in out {
                let axis = view.edge_data(e).axis as usize;
                let (_, t) = view.edge_endpoints(e);
                let expected = {
                    let bv = &view.center_data().belief;
                    let bt = &view.neighbor_data(t).belief;
                    expected_abs_disagreement(bv, bt)
                };
                acc.add(axis, expected);
            }
            acc
        },
        move |prev: Option<&Vec<F>>, acc: AxisStats<F>| {
            let current = prev.cloned().unwrap_or_else(|| vec![F::one(); axes]);
            let model = acc.means();
            current
                .iter()
                .enumerate()
                .map(|(a, &lam)| {
                    if acc.count.get(a).copied().unwrap_or(0) == 0 {
                        lam // zero-statistics fold leaves lambda unchanged
                    } else {
                        (lam + eta * (model[a] - empirical[a])).max(lambda_min)
                    }
                })
                .collect::<Vec<F>>()
        },
    );
    match period {
        Some(p) => reg.periodic(p),
        None => reg,
    }
}

/// E|X - Y| for independent label variables with the given distributions.
pub fn expected_abs_disagreement<F: Real>(a: &[F], b: &[F]) -> F {
    let mut total = F::zero();
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            total = total + pa * pb * real::<F>((i as f64 - j as f64).abs());
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::bp::build_grid;
    use crate::consistency::ConsistencyModel;
    use crate::engine::{Engine, EngineConfig};
    use crate::graph::SharedDataTable;
    use std::sync::Arc;

    fn grid_engine(obs: Vec<f64>, w: usize, h: usize, k: usize) -> Engine<BpVertexData<f64>, BpEdgeData<f64>> {
        let graph = build_grid(&obs, w, h, k, 0.5);
        Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(2, ConsistencyModel::Edge),
        )
    }

    #[test]
    fn smoothing_averages_axis_neighbors() {
        // 3x1 row: smoothing along axis 0 averages the run.
        let eng = grid_engine(vec![0.0, 3.0, 0.0], 3, 1, 4);
        eng.table().register_sync(smoothing_sync::<f64>(2)).unwrap();
        eng.sync_now(SMOOTHING_KEY).unwrap();
        let g = eng.graph();
        let middle = &g.vertex_data(crate::graph::VertexId(1)).smoothed;
        assert!((middle[0] - 1.0).abs() < 1e-12); // (0+3+0)/3
        assert!((middle[1] - 3.0).abs() < 1e-12); // no vertical neighbors
    }

    #[test]
    fn empirical_stats_count_quantized_steps() {
        // Two-pixel row 0 | 3 with k=4: smoothed values 1.5 each, equal, so
        // zero disagreement after smoothing flattens the step.
        let eng = grid_engine(vec![0.0, 3.0], 2, 1, 4);
        eng.table().register_sync(smoothing_sync::<f64>(2)).unwrap();
        eng.table()
            .register_sync(empirical_stats_sync::<f64>(2, 4))
            .unwrap();
        eng.sync_now(SMOOTHING_KEY).unwrap();
        eng.sync_now(EMPIRICAL_KEY).unwrap();
        let stats: Vec<f64> = eng.table().get_as(EMPIRICAL_KEY).unwrap();
        assert_eq!(stats[0], 0.0);
        assert_eq!(stats[1], 0.0);
    }

    #[test]
    fn matching_moments_leave_lambda_unchanged() {
        let eng = grid_engine(vec![0.0, 0.0, 0.0, 0.0], 2, 2, 2);
        eng.table().set(LAMBDA_KEY, vec![1.25f64, 0.75]);
        // Uniform beliefs on k=2: expected |Δ| = 0.5 per edge. Set the
        // empirical stats to exactly that.
        eng.table()
            .register_sync(lambda_learning_sync::<f64>(
                2,
                vec![0.5, 0.5],
                0.5,
                1e-3,
                None,
            ))
            .unwrap();
        // Registration applies a zero-statistics accumulator: unchanged.
        let after_register: Vec<f64> = eng.table().get_as(LAMBDA_KEY).unwrap();
        assert_eq!(after_register, vec![1.25, 0.75]);
        eng.sync_now(LAMBDA_KEY).unwrap();
        let after: Vec<f64> = eng.table().get_as(LAMBDA_KEY).unwrap();
        assert!((after[0] - 1.25).abs() < 1e-12);
        assert!((after[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn lambda_floors_at_minimum() {
        let eng = grid_engine(vec![0.0; 4], 2, 2, 2);
        eng.table().set(LAMBDA_KEY, vec![0.01f64, 0.01]);
        // Empirical far above model: gradient pushes lambda down hard.
        eng.table()
            .register_sync(lambda_learning_sync::<f64>(
                2,
                vec![5.0, 5.0],
                1.0,
                1e-3,
                None,
            ))
            .unwrap();
        eng.sync_now(LAMBDA_KEY).unwrap();
        let after: Vec<f64> = eng.table().get_as(LAMBDA_KEY).unwrap();
        assert_eq!(after, vec![1e-3, 1e-3]);
    }

    #[test]
    fn expected_disagreement_basics() {
        let one_hot = |i: usize, k: usize| {
            let mut v = vec![0.0f64; k];
            v[i] = 1.0;
            v
        };
        assert_eq!(expected_abs_disagreement(&one_hot(0, 3), &one_hot(2, 3)), 2.0);
        assert_eq!(expected_abs_disagreement(&one_hot(1, 3), &one_hot(1, 3)), 0.0);
        let uniform = vec![0.5f64, 0.5];
        assert!((expected_abs_disagreement(&uniform, &uniform) - 0.5).abs() < 1e-12);
    }
}
