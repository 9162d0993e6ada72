//! Loopy belief propagation on pairwise MRFs with Laplace smoothing
//! potentials, with residual-driven dynamic rescheduling.

use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, EdgeId, ScopeView, SdtReader, VertexId};
use crate::scalar::{real, Real};
use crate::scheduling::FunctionId;

/// SDT key holding the per-axis smoothing parameters `Vec<F>`.
pub const LAMBDA_KEY: &str = "lambda";

#[derive(Debug, Clone)]
pub struct BpVertexData<F> {
    /// Likelihood of each label given the observation; strictly positive.
    pub node_potential: Vec<F>,
    /// Current marginal estimate; sums to one.
    pub belief: Vec<F>,
    /// Noisy pixel value, in label units.
    pub observation: F,
    /// Per-axis locally smoothed observation, filled by the parameter
    /// learning proxy pass.
    pub smoothed: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct BpEdgeData<F> {
    /// Message m_{u->v}; normalized.
    pub message: Vec<F>,
    /// Previous message, kept for residual inspection.
    pub old_message: Vec<F>,
    /// Which smoothing parameter applies to this edge.
    pub axis: u8,
}

impl<F: Real> BpVertexData<F> {
    pub fn new(node_potential: Vec<F>, observation: F) -> Self {
        let k = node_potential.len();
        BpVertexData {
            node_potential,
            belief: uniform(k),
            observation,
            smoothed: Vec::new(),
        }
    }

    pub fn labels(&self) -> usize {
        self.node_potential.len()
    }

    /// Expectation of the label index under the current belief.
    pub fn expectation(&self) -> F {
        self.belief
            .iter()
            .enumerate()
            .map(|(i, &b)| b * real::<F>(i as f64))
            .sum()
    }

    pub fn argmax(&self) -> usize {
        self.belief
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("belief is finite"))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

impl<F: Real> BpEdgeData<F> {
    pub fn new(labels: usize, axis: u8) -> Self {
        BpEdgeData {
            message: uniform(labels),
            old_message: uniform(labels),
            axis,
        }
    }
}

pub fn uniform<F: Real>(k: usize) -> Vec<F> {
    vec![F::one() / real::<F>(k as f64); k]
}

/// Laplace similarity potential between label indices.
#[inline]
pub fn laplace_potential<F: Real>(lambda: F, a: usize, b: usize) -> F {
    let d = real::<F>((a as f64 - b as f64).abs());
    (-lambda * d).exp()
}

pub fn l1_distance<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// Normalizes in place; errors on an all-zero vector.
fn normalize<F: Real>(v: &mut [F], what: &str) -> Result<(), UpdateError> {
    let sum: F = v.iter().copied().sum();
    if !(sum > F::zero()) || !sum.is_finite() {
        return Err(UpdateError::DegeneratePotential(format!(
            "{what} normalizer is {sum}"
        )));
    }
    for x in v {
        *x = *x / sum;
    }
    Ok(())
}

/// The BP update for one vertex: recompute the local belief from the
/// inbound messages, then refresh every outbound message, rescheduling the
/// target when the message moved more than the residual bound.
pub struct BpUpdate<F> {
    pub function: FunctionId,
    pub residual_bound: F,
}

impl<F: Real> BpUpdate<F> {
    pub fn new(function: FunctionId, residual_bound: F) -> Self {
        BpUpdate {
            function,
            residual_bound,
        }
    }
}

impl<F: Real> UpdateFn<BpVertexData<F>, BpEdgeData<F>> for BpUpdate<F> {
    fn apply(
        &self,
        view: &mut ScopeView<'_, BpVertexData<F>, BpEdgeData<F>>,
        sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        let lambda: std::sync::Arc<Vec<F>> = sdt
            .get(LAMBDA_KEY)
            .ok()
            .and_then(|v| v.downcast::<Vec<F>>().ok())
            .ok_or_else(|| UpdateError::Other("SDT key `lambda` missing or mistyped".into()))?;

        let k = view.center_data().labels();
        let in_edges: Vec<EdgeId> = view.in_edges().to_vec();
        let out_edges: Vec<EdgeId> = view.out_edges().to_vec();

        // Belief: node potential times all inbound messages.
        let mut belief = view.center_data().node_potential.clone();
        for &e in &in_edges {
            let m = &view.edge_data(e).message;
            for (b, &mi) in belief.iter_mut().zip(m) {
                *b = *b * mi;
            }
        }
        normalize(&mut belief, "belief")?;
        view.center_data_mut().belief = belief.clone();

        for &out in &out_edges {
            let (_, target) = view.edge_endpoints(out);
            // Cavity: node potential times inbound messages except the one
            // arriving from the target.
            let mut cavity = view.center_data().node_potential.clone();
            for &e in &in_edges {
                let (source, _) = view.edge_endpoints(e);
                if source == target {
                    continue;
                }
                let m = &view.edge_data(e).message;
                for (c, &mi) in cavity.iter_mut().zip(m) {
                    *c = *c * mi;
                }
            }
            let (axis, old) = {
                let e = view.edge_data(out);
                (e.axis as usize, e.message.clone())
            };
            let lam = lambda.get(axis).copied().unwrap_or_else(F::one);
            let mut new_message = vec![F::zero(); k];
            for (xt, slot) in new_message.iter_mut().enumerate() {
                let mut total = F::zero();
                for (xv, &c) in cavity.iter().enumerate() {
                    total = total + laplace_potential(lam, xv, xt) * c;
                }
                *slot = total;
            }
            normalize(&mut new_message, "message")?;
            let residual = l1_distance(&new_message, &old);
            {
                let e = view.edge_data_mut(out);
                e.old_message = old;
                e.message = new_message;
            }
            if residual > self.residual_bound && sink.supports_dynamic_tasks() {
                sink.add_task_with_priority(
                    target,
                    self.function,
                    residual.to_f64().unwrap_or(f64::MAX),
                );
            }
        }
        Ok(())
    }
}

/// Gaussian observation likelihoods over `k` labels; `sigma == 0`
/// degenerates to a near-one-hot potential on the rounded label.
pub fn observation_potential<F: Real>(obs: F, k: usize, sigma: F) -> Vec<F> {
    if sigma <= F::zero() {
        let label = obs
            .round()
            .to_f64()
            .map(|x| (x.max(0.0) as usize).min(k - 1))
            .unwrap_or(0);
        let floor = real::<F>(1e-12);
        return (0..k)
            .map(|i| if i == label { F::one() } else { floor })
            .collect();
    }
    let two = real::<F>(2.0);
    (0..k)
        .map(|i| {
            let d = obs - real::<F>(i as f64);
            (-(d * d) / (two * sigma * sigma)).exp()
        })
        .collect()
}

/// Grid MRF over observations laid out row-major `width x height`, with
/// bidirected edges along axis 0 (horizontal) and axis 1 (vertical).
pub fn build_grid<F: Real>(
    observations: &[F],
    width: usize,
    height: usize,
    k: usize,
    sigma: F,
) -> DataGraph<BpVertexData<F>, BpEdgeData<F>> {
    assert_eq!(observations.len(), width * height);
    assert!(k >= 2, "need at least two labels");
    let mut g = DataGraph::new();
    for &obs in observations {
        g.add_vertex(BpVertexData::new(observation_potential(obs, k, sigma), obs))
            .unwrap();
    }
    let id = |x: usize, y: usize| VertexId((y * width + x) as u32);
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                g.add_edge(id(x, y), id(x + 1, y), BpEdgeData::new(k, 0)).unwrap();
                g.add_edge(id(x + 1, y), id(x, y), BpEdgeData::new(k, 0)).unwrap();
            }
            if y + 1 < height {
                g.add_edge(id(x, y), id(x, y + 1), BpEdgeData::new(k, 1)).unwrap();
                g.add_edge(id(x, y + 1), id(x, y), BpEdgeData::new(k, 1)).unwrap();
            }
        }
    }
    g.freeze();
    g
}

/// Chain MRF with explicit node potentials; axis 0 everywhere.
pub fn build_chain<F: Real>(
    potentials: Vec<Vec<F>>,
) -> DataGraph<BpVertexData<F>, BpEdgeData<F>> {
    let k = potentials.first().map(|p| p.len()).unwrap_or(0);
    let mut g = DataGraph::new();
    for p in potentials {
        g.add_vertex(BpVertexData::new(p, F::zero())).unwrap();
    }
    let n = g.vertex_count();
    for i in 0..n.saturating_sub(1) {
        let (u, v) = (VertexId(i as u32), VertexId(i as u32 + 1));
        g.add_edge(u, v, BpEdgeData::new(k, 0)).unwrap();
        g.add_edge(v, u, BpEdgeData::new(k, 0)).unwrap();
    }
    g.freeze();
    g
}
