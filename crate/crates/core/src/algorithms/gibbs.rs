//! Chromatic Gibbs sampling: greedy graph coloring followed by an exact
//! parallel Gauss-Seidel sampler driven by the set scheduler.
//!
//! Per-vertex counter-based RNG streams (seeded from the global seed and
//! the vertex id) make every draw independent of scheduling, so a parallel
//! chromatic execution reproduces the sequential color-sweep samples
//! bitwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{TaskSink, UpdateError, UpdateFn};
use crate::graph::{DataGraph, ScopeView, SdtReader, VertexId};
use crate::scalar::{real, Real};

pub const UNCOLORED: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct GibbsVertexData<F> {
    /// Node potential over the K labels; strictly positive for ergodicity.
    pub potential: Vec<F>,
    /// Assigned by the coloring phase; UNCOLORED until then.
    pub color: u32,
    pub current_sample: usize,
    pub sample_counts: Vec<u64>,
    /// Private sample stream; draws here never consume another vertex's
    /// randomness.
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct GibbsEdgeData<F> {
    /// Pairwise potential, row-major K x K: `coupling[x_src * k + x_tgt]`.
    pub coupling: Vec<F>,
}

pub fn seed_rng(global_seed: u64, v: VertexId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(global_seed ^ u64::from(v.0).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl<F: Real> GibbsVertexData<F> {
    pub fn new(potential: Vec<F>, global_seed: u64, v: VertexId) -> Self {
        let k = potential.len();
        GibbsVertexData {
            potential,
            color: UNCOLORED,
            current_sample: 0,
            sample_counts: vec![0; k],
            rng: seed_rng(global_seed, v),
        }
    }

    /// Empirical marginal from the tallies; uniform before any draw.
    pub fn empirical_marginal(&self) -> Vec<F> {
        let total: u64 = self.sample_counts.iter().sum();
        if total == 0 {
            return vec![F::one() / real::<F>(self.sample_counts.len() as f64); self.sample_counts.len()];
        }
        self.sample_counts
            .iter()
            .map(|&c| real::<F>(c as f64) / real::<F>(total as f64))
            .collect()
    }
}

/// Laplace coupling matrix exp(-lambda |a-b|).
pub fn laplace_coupling<F: Real>(k: usize, lambda: F) -> Vec<F> {
    let mut m = vec![F::zero(); k * k];
    for a in 0..k {
        for b in 0..k {
            m[a * k + b] = (-lambda * real::<F>((a as f64 - b as f64).abs())).exp();
        }
    }
    m
}

/// One Gibbs draw from P(x_v | x_neighbors), using the vertex's own RNG
/// stream. Runs under vertex consistency; the chromatic schedule keeps
/// adjacent draws apart.
pub struct GibbsUpdate;

impl<F: Real> UpdateFn<GibbsVertexData<F>, GibbsEdgeData<F>> for GibbsUpdate {
    fn apply(
        &self,
        view: &mut ScopeView<'_, GibbsVertexData<F>, GibbsEdgeData<F>>,
        _sdt: &SdtReader,
        _sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        let k = view.center_data().potential.len();
        let mut weights = view.center_data().potential.clone();
        let in_edges: Vec<_> = view.in_edges().to_vec();
        let out_edges: Vec<_> = view.out_edges().to_vec();
        for &e in &in_edges {
            let (source, _) = view.edge_endpoints(e);
            let xs = view.neighbor_data(source).current_sample;
            let coupling = &view.edge_data(e).coupling;
            for (x, w) in weights.iter_mut().enumerate() {
                *w = *w * coupling[xs * k + x];
            }
        }
        for &e in &out_edges {
            let (_, target) = view.edge_endpoints(e);
            let xt = view.neighbor_data(target).current_sample;
            let coupling = &view.edge_data(e).coupling;
            for (x, w) in weights.iter_mut().enumerate() {
                *w = *w * coupling[x * k + xt];
            }
        }
        let total: F = weights.iter().copied().sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(UpdateError::DegeneratePotential(format!(
                "zero conditional mass at {}",
                view.center()
            )));
        }

        let data = view.center_data_mut();
        let u: F = real::<F>(data.rng.random::<f64>()) * total;
        let mut cum = F::zero();
        let mut drawn = k - 1;
        for (x, &w) in weights.iter().enumerate() {
            cum = cum + w;
            if u < cum {
                drawn = x;
                break;
            }
        }
        data.current_sample = drawn;
        data.sample_counts[drawn] += 1;
        Ok(())
    }
}

/// MRF builder: `edges` are undirected pairs realized as single directed
/// edges carrying the coupling matrix.
pub fn build_mrf<F: Real>(
    potentials: Vec<Vec<F>>,
    edges: &[(u32, u32)],
    coupling: &[F],
    global_seed: u64,
) -> DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>> {
    let mut g = DataGraph::new();
    for (i, p) in potentials.into_iter().enumerate() {
        g.add_vertex(GibbsVertexData::new(p, global_seed, VertexId(i as u32)))
            .unwrap();
    }
    for &(u, v) in edges {
        g.add_edge(
            VertexId(u),
            VertexId(v),
            GibbsEdgeData {
                coupling: coupling.to_vec(),
            },
        )
        .unwrap();
    }
    g.freeze();
    g
}

/// Random strictly positive potentials for synthetic instances.
pub fn random_potentials<F: Real>(n: usize, k: usize, strength: f64, seed: u64) -> Vec<Vec<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..k)
                .map(|_| real::<F>((rng.random::<f64>() * 2.0 - 1.0) * strength).exp())
                .collect()
        })
        .collect()
}

pub fn grid_edges(width: usize, height: usize) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    let id = |x: usize, y: usize| (y * width + x) as u32;
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                edges.push((id(x, y), id(x + 1, y)));
            }
            if y + 1 < height {
                edges.push((id(x, y), id(x, y + 1)));
            }
        }
    }
    edges
}
