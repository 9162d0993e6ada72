//! Consistency models realized as exclusion sets over lockable entities,
//! enforced by a deadlock-free ordered reader/writer locking protocol.
//!
//! Edge protection is subsumed by endpoint vertex locks: any writer of the
//! data on edge (u,v) executes at u or v and therefore holds a write-class
//! lock on that endpoint, while a scope that must keep the edge stable holds
//! at least a read-class lock on both endpoints.

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::graph::{DataGraph, EdgeId, GraphError, ScopeAccess, ScopeDescriptor, VertexId};

/// The three data consistency models, ordered by strength:
/// `Full > Edge > Vertex`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConsistencyModel {
    Full,
    Edge,
    Vertex,
}

impl ConsistencyModel {
    pub fn access(self) -> ScopeAccess {
        match self {
            ConsistencyModel::Full => ScopeAccess::full(),
            ConsistencyModel::Edge => ScopeAccess::edge(),
            ConsistencyModel::Vertex => ScopeAccess::vertex(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConsistencyModel::Full => "full",
            ConsistencyModel::Edge => "edge",
            ConsistencyModel::Vertex => "vertex",
        }
    }
}

impl std::str::FromStr for ConsistencyModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ConsistencyModel::Full),
            "edge" => Ok(ConsistencyModel::Edge),
            "vertex" => Ok(ConsistencyModel::Vertex),
            other => Err(format!("unknown consistency model `{other}`")),
        }
    }
}

/// A lockable entity: a vertex or a directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Vertex(VertexId),
    Edge(EdgeId),
}

impl Entity {
    /// Dense index over vertices `[0, n)` followed by edges `[n, n+m)`.
    pub fn dense_index(self, vertex_count: usize) -> usize {
        match self {
            Entity::Vertex(v) => v.index(),
            Entity::Edge(e) => vertex_count + e.index(),
        }
    }
}

/// The set of entities an executing update function excludes others from.
/// Two update functions may run concurrently iff their exclusion sets are
/// disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionSet {
    entities: Vec<Entity>,
}

impl ExclusionSet {
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn contains(&self, e: Entity) -> bool {
        self.entities.binary_search(&e).is_ok()
    }

    pub fn is_subset_of(&self, other: &ExclusionSet) -> bool {
        self.entities.iter().all(|&e| other.contains(e))
    }

    pub fn intersects(&self, other: &ExclusionSet) -> bool {
        self.entities.iter().any(|&e| other.contains(e))
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Exclusion set of `v` under `model`:
/// vertex `{v}`; edge `{v} + adjacent edges`; full `{v} + adjacent edges +
/// neighbors`.
pub fn exclusion_set<V, E>(
    graph: &DataGraph<V, E>,
    v: VertexId,
    model: ConsistencyModel,
) -> Result<ExclusionSet, GraphError> {
    let scope = graph.scope_of(v)?;
    Ok(exclusion_set_of_scope(&scope, model))
}

pub fn exclusion_set_of_scope(scope: &ScopeDescriptor, model: ConsistencyModel) -> ExclusionSet {
    let mut entities = vec![Entity::Vertex(scope.center)];
    if matches!(model, ConsistencyModel::Edge | ConsistencyModel::Full) {
        entities.extend(scope.in_edges.iter().map(|&e| Entity::Edge(e)));
        entities.extend(scope.out_edges.iter().map(|&e| Entity::Edge(e)));
    }
    if matches!(model, ConsistencyModel::Full) {
        entities.extend(scope.neighbors.iter().map(|&v| Entity::Vertex(v)));
    }
    entities.sort_unstable();
    entities.dedup();
    ExclusionSet { entities }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LockClass {
    Read,
    Write,
}

/// One reader/writer lock per vertex. Scopes are acquired blocking, in
/// strictly ascending vertex-id order, and a worker holds at most one scope
/// at a time; together these rule out cyclic waits.
pub struct LockTable {
    locks: Vec<RwLock<()>>,
    audit: Option<Audit>,
}

/// Per-entity in-flight hold counters used by the instrumented stress
/// tests. A write-class hold corresponds to membership in an active
/// exclusion set; a read-class hold is a neighbor read under the edge
/// model. Any overlap between an active exclusion set and another active
/// hold is counted as a violation.
struct Audit {
    vertex_count: usize,
    write_holds: Vec<AtomicU64>,
    read_holds: Vec<AtomicU64>,
    violations: AtomicU64,
}

impl Audit {
    fn new(vertex_count: usize, edge_count: usize) -> Self {
        let n = vertex_count + edge_count;
        Audit {
            vertex_count,
            write_holds: (0..n).map(|_| AtomicU64::new(0)).collect(),
            read_holds: (0..n).map(|_| AtomicU64::new(0)).collect(),
            violations: AtomicU64::new(0),
        }
    }

    fn on_grant(&self, exclusion: &ExclusionSet, reads: &[VertexId]) {
        for &e in exclusion.entities() {
            let i = e.dense_index(self.vertex_count);
            let prior_writes = self.write_holds[i].fetch_add(1, Ordering::SeqCst);
            let prior_reads = self.read_holds[i].load(Ordering::SeqCst);
            if prior_writes > 0 || prior_reads > 0 {
                self.violations.fetch_add(1, Ordering::SeqCst);
            }
        }
        for &v in reads {
            let i = Entity::Vertex(v).dense_index(self.vertex_count);
            if self.write_holds[i].load(Ordering::SeqCst) > 0 {
                self.violations.fetch_add(1, Ordering::SeqCst);
            }
            self.read_holds[i].fetch_add(1, Ordering::SeqCst);
        }
    }

    fn on_release(&self, exclusion: &ExclusionSet, reads: &[VertexId]) {
        for &e in exclusion.entities() {
            let i = e.dense_index(self.vertex_count);
            self.write_holds[i].fetch_sub(1, Ordering::SeqCst);
        }
        for &v in reads {
            let i = Entity::Vertex(v).dense_index(self.vertex_count);
            self.read_holds[i].fetch_sub(1, Ordering::SeqCst);
        }
    }
}

thread_local! {
    static SCOPE_HELD: Cell<bool> = const { Cell::new(false) };
}

enum Slot<'a> {
    Read(#[allow(dead_code)] RwLockReadGuard<'a, ()>),
    Write(#[allow(dead_code)] RwLockWriteGuard<'a, ()>),
}

/// RAII guard over an acquired scope. Locks release on drop, which also
/// rules out double release.
pub struct ScopeGuard<'a> {
    table: &'a LockTable,
    slots: Vec<Slot<'a>>,
    audit_state: Option<(ExclusionSet, Vec<VertexId>)>,
}

impl Drop for ScopeGuard<'_> {
    fn drop(&mut self) {
        // Counters come down while the locks are still held so the audit
        // never observes a phantom overlap.
        if let (Some(audit), Some((exclusion, reads))) =
            (self.table.audit.as_ref(), self.audit_state.as_ref())
        {
            audit.on_release(exclusion, reads);
        }
        self.slots.clear();
        SCOPE_HELD.with(|h| h.set(false));
    }
}

impl LockTable {
    pub fn new(vertex_count: usize) -> Self {
        LockTable {
            locks: (0..vertex_count).map(|_| RwLock::new(())).collect(),
            audit: None,
        }
    }

    /// Lock table with per-entity in-flight counters enabled.
    pub fn with_audit(vertex_count: usize, edge_count: usize) -> Self {
        LockTable {
            locks: (0..vertex_count).map(|_| RwLock::new(())).collect(),
            audit: Some(Audit::new(vertex_count, edge_count)),
        }
    }

    /// Honors the `GRAPPLE_LOCK_AUDIT` environment toggle.
    pub fn for_graph<V, E>(graph: &DataGraph<V, E>) -> Self {
        if std::env::var_os("GRAPPLE_LOCK_AUDIT").is_some() {
            Self::with_audit(graph.vertex_count(), graph.edge_count())
        } else {
            Self::new(graph.vertex_count())
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.locks.len()
    }

    /// Total overlapping-exclusion-set violations observed so far, if the
    /// audit is enabled.
    pub fn audit_violations(&self) -> Option<u64> {
        self.audit
            .as_ref()
            .map(|a| a.violations.load(Ordering::SeqCst))
    }

    /// Blocks until the scope of `scope.center` is granted under `model`.
    ///
    /// Lock plan: vertex -- write-lock the center; edge -- write-lock the
    /// center, read-lock each neighbor; full -- write-lock the center and
    /// every neighbor. Acquisitions happen in ascending vertex-id order.
    ///
    /// Acquiring while this thread already holds a scope is a contract
    /// violation and panics.
    pub fn acquire(&self, scope: &ScopeDescriptor, model: ConsistencyModel) -> ScopeGuard<'_> {
        SCOPE_HELD.with(|h| {
            assert!(
                !h.get(),
                "contract violation: worker already holds a scope"
            );
            h.set(true);
        });

        let mut plan: Vec<(VertexId, LockClass)> = Vec::with_capacity(scope.neighbors.len() + 1);
        match model {
            ConsistencyModel::Vertex => plan.push((scope.center, LockClass::Write)),
            ConsistencyModel::Edge => {
                plan.extend(scope.neighbors.iter().map(|&v| (v, LockClass::Read)));
                let pos = plan.partition_point(|&(v, _)| v < scope.center);
                plan.insert(pos, (scope.center, LockClass::Write));
            }
            ConsistencyModel::Full => {
                plan.extend(scope.neighbors.iter().map(|&v| (v, LockClass::Write)));
                let pos = plan.partition_point(|&(v, _)| v < scope.center);
                plan.insert(pos, (scope.center, LockClass::Write));
            }
        }
        debug_assert!(plan.windows(2).all(|w| w[0].0 < w[1].0));

        let mut slots = Vec::with_capacity(plan.len());
        for (v, class) in plan {
            let lock = &self.locks[v.index()];
            slots.push(match class {
                LockClass::Read => Slot::Read(lock.read()),
                LockClass::Write => Slot::Write(lock.write()),
            });
        }

        let audit_state = self.audit.as_ref().map(|audit| {
            let exclusion = exclusion_set_of_scope(scope, model);
            let reads: Vec<VertexId> = if model == ConsistencyModel::Edge {
                scope.neighbors.clone()
            } else {
                Vec::new()
            };
            audit.on_grant(&exclusion, &reads);
            (exclusion, reads)
        });

        ScopeGuard {
            table: self,
            slots,
            audit_state,
        }
    }
}

#[cfg(test)]
mod tests;
