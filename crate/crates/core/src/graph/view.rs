//! Scoped access to graph data.
//!
//! A [`ScopeView`] is the only way update functions and sync folds touch
//! vertex/edge data during a run. The view is created by the engine after
//! the covering scope has been locked, and its capability flags encode what
//! the active consistency model makes safe to write.

use super::{DataGraph, EdgeId, ScopeDescriptor, VertexId};

/// Write capabilities granted by the active consistency model.
///
/// Reads of neighbor and edge data are always available through the view;
/// under the vertex model they are unsynchronized and only sound when the
/// schedule keeps adjacent updates apart (chromatic schedules) or the field
/// itself is a word-sized atomic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScopeAccess {
    pub edge_writes: bool,
    pub neighbor_writes: bool,
}

impl ScopeAccess {
    pub const fn full() -> Self {
        ScopeAccess {
            edge_writes: true,
            neighbor_writes: true,
        }
    }

    pub const fn edge() -> Self {
        ScopeAccess {
            edge_writes: true,
            neighbor_writes: false,
        }
    }

    pub const fn vertex() -> Self {
        ScopeAccess {
            edge_writes: false,
            neighbor_writes: false,
        }
    }
}

/// Mutable window onto the data of one vertex's scope.
pub struct ScopeView<'a, V, E> {
    graph: &'a DataGraph<V, E>,
    scope: &'a ScopeDescriptor,
    access: ScopeAccess,
}

impl<'a, V, E> ScopeView<'a, V, E> {
    /// Caller contract: the scope's locks are held for the lifetime of the
    /// view, under a model at least as strong as `access` claims.
    pub fn new(
        graph: &'a DataGraph<V, E>,
        scope: &'a ScopeDescriptor,
        access: ScopeAccess,
    ) -> Self {
        ScopeView {
            graph,
            scope,
            access,
        }
    }

    pub fn center(&self) -> VertexId {
        self.scope.center
    }

    pub fn descriptor(&self) -> &ScopeDescriptor {
        self.scope
    }

    pub fn in_edges(&self) -> &[EdgeId] {
        &self.scope.in_edges
    }

    pub fn out_edges(&self) -> &[EdgeId] {
        &self.scope.out_edges
    }

    pub fn neighbors(&self) -> &[VertexId] {
        &self.scope.neighbors
    }

    pub fn edge_endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.graph.endpoints(e)
    }

    fn assert_adjacent_edge(&self, e: EdgeId) {
        let (s, t) = self.graph.endpoints(e);
        assert!(
            s == self.scope.center || t == self.scope.center,
            "edge {e} is outside the scope of {}",
            self.scope.center
        );
    }

    fn assert_neighbor(&self, u: VertexId) {
        assert!(
            self.scope.neighbors.binary_search(&u).is_ok(),
            "vertex {u} is not a neighbor of {}",
            self.scope.center
        );
    }

    pub fn center_data(&self) -> &V {
        unsafe { &*self.graph.vertex_cell(self.scope.center) }
    }

    pub fn center_data_mut(&mut self) -> &mut V {
        unsafe { &mut *self.graph.vertex_cell(self.scope.center) }
    }

    pub fn edge_data(&self, e: EdgeId) -> &E {
        self.assert_adjacent_edge(e);
        unsafe { &*self.graph.edge_cell(e) }
    }

    pub fn edge_data_mut(&mut self, e: EdgeId) -> &mut E {
        self.assert_adjacent_edge(e);
        assert!(
            self.access.edge_writes,
            "edge writes require the edge or full consistency model"
        );
        unsafe { &mut *self.graph.edge_cell(e) }
    }

    pub fn neighbor_data(&self, u: VertexId) -> &V {
        self.assert_neighbor(u);
        unsafe { &*self.graph.vertex_cell(u) }
    }

    pub fn neighbor_data_mut(&mut self, u: VertexId) -> &mut V {
        self.assert_neighbor(u);
        assert!(
            self.access.neighbor_writes,
            "neighbor writes require the full consistency model"
        );
        unsafe { &mut *self.graph.vertex_cell(u) }
    }

    /// Structure-only queries for arbitrary vertices. The structure is
    /// frozen during a run, so this never races with data mutation; data
    /// outside the scope stays out of reach.
    pub fn structure(&self) -> StructureView<'a, V, E> {
        StructureView { graph: self.graph }
    }
}

/// Read-only adjacency queries over the whole (frozen) graph.
pub struct StructureView<'a, V, E> {
    graph: &'a DataGraph<V, E>,
}

impl<'a, V, E> StructureView<'a, V, E> {
    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn out_edges(&self, u: VertexId) -> &'a [(VertexId, EdgeId)] {
        self.graph.out_edges(u)
    }

    pub fn in_edges(&self, v: VertexId) -> &'a [(VertexId, EdgeId)] {
        self.graph.in_edges(v)
    }

    pub fn neighbor_ids(&self, v: VertexId) -> Vec<VertexId> {
        self.graph.neighbor_ids(v)
    }

    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.graph.endpoints(e)
    }
}
