//! Greedy graph coloring as an update function, plus construction of the
//! chromatic set schedule that drives the exact parallel Gibbs sampler.

use thiserror::Error;

use super::gibbs::{GibbsEdgeData, GibbsVertexData, UNCOLORED};
use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, ScopeView, SdtReader, VertexId};
use crate::scalar::Real;
use crate::scheduling::FunctionId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ColoringError {
    #[error("vertex {0} is uncolored")]
    Uncolored(VertexId),
    #[error("adjacent vertices {0} and {1} share color {2}")]
    Improper(VertexId, VertexId, u32),
}

/// Sets the center to the first color unused among its neighbors. Runs
/// under the edge consistency model and writes only its own vertex, so any
/// parallel execution is equivalent to some sequential greedy pass.
pub struct GreedyColorUpdate;

impl<F: Real> UpdateFn<GibbsVertexData<F>, GibbsEdgeData<F>> for GreedyColorUpdate {
    fn apply(
        &self,
        view: &mut ScopeView<'_, GibbsVertexData<F>, GibbsEdgeData<F>>,
        _sdt: &SdtReader,
        _sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        let mut used: Vec<u32> = view
            .neighbors()
            .iter()
            .map(|&u| view.neighbor_data(u).color)
            .filter(|&c| c != UNCOLORED)
            .collect();
        used.sort_unstable();
        used.dedup();
        let mut color = 0u32;
        for c in used {
            if c == color {
                color += 1;
            } else if c > color {
                break;
            }
        }
        view.center_data_mut().color = color;
        Ok(())
    }
}

/// Checks that every vertex is colored and no edge joins equal colors.
pub fn verify_coloring<F: Real>(
    graph: &DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>>,
) -> Result<u32, ColoringError> {
    let mut max_color = 0;
    for v in graph.vertex_ids() {
        let c = graph.vertex_data(v).color;
        if c == UNCOLORED {
            return Err(ColoringError::Uncolored(v));
        }
        max_color = max_color.max(c);
    }
    for e in graph.edge_ids() {
        let (u, v) = graph.endpoints(e);
        let (cu, cv) = (graph.vertex_data(u).color, graph.vertex_data(v).color);
        if cu == cv {
            return Err(ColoringError::Improper(u, v, cu));
        }
    }
    Ok(max_color + 1)
}

/// Vertex sets S_1..S_C grouped by color, in ascending color order.
pub fn color_sets<F: Real>(
    graph: &DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>>,
) -> Result<Vec<Vec<VertexId>>, ColoringError> {
    let colors = verify_coloring(graph)?;
    let mut sets = vec![Vec::new(); colors as usize];
    for v in graph.vertex_ids() {
        sets[graph.vertex_data(v).color as usize].push(v);
    }
    Ok(sets)
}

/// The chromatic schedule: the color sets, repeated once per sweep, each
/// set running `function`.
pub fn build_color_schedule<F: Real>(
    graph: &DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>>,
    function: FunctionId,
    sweeps: usize,
) -> Result<Vec<(Vec<VertexId>, FunctionId)>, ColoringError> {
    let sets = color_sets(graph)?;
    let mut schedule = Vec::with_capacity(sets.len() * sweeps);
    for _ in 0..sweeps {
        for set in &sets {
            schedule.push((set.clone(), function));
        }
    }
    Ok(schedule)
}

/// Distribution of vertices over colors, ascending by color.
pub fn color_histogram<F: Real>(
    graph: &DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>>,
) -> Vec<(u32, usize)> {
    let mut counts: Vec<usize> = Vec::new();
    for v in graph.vertex_ids() {
        let c = graph.vertex_data(v).color as usize;
        if counts.len() <= c {
            counts.resize(c + 1, 0);
        }
        counts[c] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(c, n)| (c as u32, n))
        .collect()
}
