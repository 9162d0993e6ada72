//! The data graph: a directed graph whose vertices and edges carry opaque,
//! mutable data blocks, plus the shared data table for global state.
//!
//! The graph structure doubles as the computational dependency structure:
//! an update scheduled on a vertex may touch exactly that vertex's scope
//! (the vertex, its adjacent edges, and its neighbors). Structure is built
//! single-threaded, then frozen; after freezing only the data blocks may
//! change, and only under scope locks.

mod sdt;
mod view;

pub use sdt::{SdtError, SdtReader, SdtValue, SharedDataTable, SyncRegistration};
pub use view::{ScopeAccess, ScopeView};

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};

use thiserror::Error;

/// Dense vertex identifier, stable for the graph's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Dense directed-edge identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph is frozen; structural mutation rejected")]
    Frozen,
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("self-loop {0}->{0} rejected")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0}->{1}")]
    DuplicateEdge(VertexId, VertexId),
}

/// The neighborhood of a vertex: the extent of the graph an update function
/// applied there may access. `neighbors` is sorted and deduplicated, and
/// never contains the center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeDescriptor {
    pub center: VertexId,
    pub in_edges: Vec<EdgeId>,
    pub out_edges: Vec<EdgeId>,
    pub neighbors: Vec<VertexId>,
}

/// Directed graph with per-vertex and per-edge data blocks.
///
/// Data blocks live in `UnsafeCell`s because mutation happens concurrently
/// from worker threads under *external* synchronization (the lock table of
/// the consistency layer). All shared access goes through [`ScopeView`]s
/// handed out by the engine while the covering scope is held; the plain
/// accessors below are for single-threaded setup and readout and assert
/// that no engine run is active.
pub struct DataGraph<V, E> {
    vertex_data: Vec<UnsafeCell<V>>,
    edge_data: Vec<UnsafeCell<E>>,
    endpoints: Vec<(VertexId, VertexId)>,
    /// Per vertex, (target, edge) pairs sorted by target id.
    out_adj: Vec<Vec<(VertexId, EdgeId)>>,
    /// Per vertex, (source, edge) pairs sorted by source id.
    in_adj: Vec<Vec<(VertexId, EdgeId)>>,
    /// Per vertex, sorted deduplicated union of in/out neighbor ids.
    /// Built lazily at freeze time.
    neighbors: Vec<Vec<VertexId>>,
    /// Scope descriptors precomputed at freeze time for the engine's hot
    /// path.
    scopes: Vec<ScopeDescriptor>,
    frozen: AtomicBool,
    active_runs: AtomicU32,
}

// Safety: data cells are only accessed concurrently through scope views
// issued under the lock table, whose reader/writer protocol prevents
// conflicting references to the same cell. Structure is immutable once
// frozen, which the engine requires before spawning workers.
unsafe impl<V: Send + Sync, E: Send + Sync> Sync for DataGraph<V, E> {}
unsafe impl<V: Send + Sync, E: Send + Sync> Send for DataGraph<V, E> {}

impl<V, E> Default for DataGraph<V, E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V, E> DataGraph<V, E> {
    pub fn new() -> Self {
        DataGraph {
            vertex_data: Vec::new(),
            edge_data: Vec::new(),
            endpoints: Vec::new(),
            out_adj: Vec::new(),
            in_adj: Vec::new(),
            neighbors: Vec::new(),
            scopes: Vec::new(),
            frozen: AtomicBool::new(false),
            active_runs: AtomicU32::new(0),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_data.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_data.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_data.len() as u32).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edge_data.len() as u32).map(EdgeId)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.load(Ordering::Acquire)
    }

    fn check_mutable(&self) -> Result<(), GraphError> {
        if self.is_frozen() {
            Err(GraphError::Frozen)
        } else {
            Ok(())
        }
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GraphError> {
        if v.index() < self.vertex_data.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownVertex(v))
        }
    }

    /// Adds a vertex carrying `data`, returning the next dense id.
    pub fn add_vertex(&mut self, data: V) -> Result<VertexId, GraphError> {
        self.check_mutable()?;
        let id = VertexId(self.vertex_data.len() as u32);
        self.vertex_data.push(UnsafeCell::new(data));
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        Ok(id)
    }

    /// Adds the directed edge `u -> v`. At most one edge per ordered pair;
    /// self-loops are rejected.
    pub fn add_edge(&mut self, u: VertexId, v: VertexId, data: E) -> Result<EdgeId, GraphError> {
        self.check_mutable()?;
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if self.edge_between(u, v).is_some() {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let id = EdgeId(self.edge_data.len() as u32);
        self.edge_data.push(UnsafeCell::new(data));
        self.endpoints.push((u, v));
        let out = &mut self.out_adj[u.index()];
        let pos = out.partition_point(|&(t, _)| t < v);
        out.insert(pos, (v, id));
        let inc = &mut self.in_adj[v.index()];
        let pos = inc.partition_point(|&(s, _)| s < u);
        inc.insert(pos, (u, id));
        Ok(id)
    }

    /// Looks up the edge `u -> v`, if present. Binary search over the
    /// sorted out-list of `u`.
    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        let out = self.out_adj.get(u.index())?;
        out.binary_search_by_key(&v, |&(t, _)| t)
            .ok()
            .map(|i| out[i].1)
    }

    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.endpoints[e.index()]
    }

    /// `(target, edge)` pairs of the out-edges of `u`, sorted by target.
    pub fn out_edges(&self, u: VertexId) -> &[(VertexId, EdgeId)] {
        &self.out_adj[u.index()]
    }

    /// `(source, edge)` pairs of the in-edges of `v`, sorted by source.
    pub fn in_edges(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.in_adj[v.index()]
    }

    /// Sorted, deduplicated neighbor ids of `v` (union of both directions).
    /// Precomputed lists are available once frozen; before that the union
    /// is built on the fly.
    pub fn neighbor_ids(&self, v: VertexId) -> Vec<VertexId> {
        if self.is_frozen() {
            return self.neighbors[v.index()].clone();
        }
        self.merge_neighbors(v)
    }

    fn merge_neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let mut ids: Vec<VertexId> = self.in_adj[v.index()]
            .iter()
            .map(|&(s, _)| s)
            .chain(self.out_adj[v.index()].iter().map(|&(t, _)| t))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Freezes the structure. Irreversible; required before engine runs.
    pub fn freeze(&mut self) {
        if self.is_frozen() {
            return;
        }
        self.neighbors = (0..self.vertex_data.len() as u32)
            .map(|v| self.merge_neighbors(VertexId(v)))
            .collect();
        self.scopes = (0..self.vertex_data.len() as u32)
            .map(|v| {
                let v = VertexId(v);
                ScopeDescriptor {
                    center: v,
                    in_edges: self.in_adj[v.index()].iter().map(|&(_, e)| e).collect(),
                    out_edges: self.out_adj[v.index()].iter().map(|&(_, e)| e).collect(),
                    neighbors: self.neighbors[v.index()].clone(),
                }
            })
            .collect();
        self.frozen.store(true, Ordering::Release);
    }

    /// Borrowed scope descriptor; available once frozen. The engine uses
    /// this to avoid rebuilding adjacency vectors per task.
    pub fn scope_ref(&self, v: VertexId) -> Result<&ScopeDescriptor, GraphError> {
        self.check_vertex(v)?;
        assert!(self.is_frozen(), "scope_ref requires a frozen graph");
        Ok(&self.scopes[v.index()])
    }

    /// The scope of `v`: the center, its adjacent edges in both directions,
    /// and its sorted deduplicated neighbors. O(degree) work.
    pub fn scope_of(&self, v: VertexId) -> Result<ScopeDescriptor, GraphError> {
        self.check_vertex(v)?;
        Ok(ScopeDescriptor {
            center: v,
            in_edges: self.in_adj[v.index()].iter().map(|&(_, e)| e).collect(),
            out_edges: self.out_adj[v.index()].iter().map(|&(_, e)| e).collect(),
            neighbors: self.neighbor_ids(v),
        })
    }

    /// Read access to a vertex data block outside any engine run.
    ///
    /// Panics if an engine run is active; in-run access must go through a
    /// scope view.
    pub fn vertex_data(&self, v: VertexId) -> &V {
        assert_eq!(
            self.active_runs.load(Ordering::SeqCst),
            0,
            "plain data access while an engine run is active"
        );
        unsafe { &*self.vertex_data[v.index()].get() }
    }

    pub fn edge_data(&self, e: EdgeId) -> &E {
        assert_eq!(
            self.active_runs.load(Ordering::SeqCst),
            0,
            "plain data access while an engine run is active"
        );
        unsafe { &*self.edge_data[e.index()].get() }
    }

    /// Exclusive access to a vertex data block (setup / readout).
    pub fn vertex_data_mut(&mut self, v: VertexId) -> &mut V {
        self.vertex_data[v.index()].get_mut()
    }

    pub fn edge_data_mut(&mut self, e: EdgeId) -> &mut E {
        self.edge_data[e.index()].get_mut()
    }

    /// Marks an engine run active; plain accessors panic until the matching
    /// [`DataGraph::end_run`]. Used by the engine, not by user code.
    pub fn begin_run(&self) {
        self.active_runs.fetch_add(1, Ordering::SeqCst);
    }

    pub fn end_run(&self) {
        self.active_runs.fetch_sub(1, Ordering::SeqCst);
    }

    pub(crate) fn vertex_cell(&self, v: VertexId) -> *mut V {
        self.vertex_data[v.index()].get()
    }

    pub(crate) fn edge_cell(&self, e: EdgeId) -> *mut E {
        self.edge_data[e.index()].get()
    }
}

impl<V, E> std::fmt::Debug for DataGraph<V, E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataGraph")
            .field("vertices", &self.vertex_data.len())
            .field("edges", &self.edge_data.len())
            .field("frozen", &self.is_frozen())
            .finish()
    }
}
