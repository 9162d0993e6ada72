//! The set scheduler: compiles a sequence of (vertex set, function) pairs
//! into a dependency DAG so tasks from future sets can start early, then
//! issues ready tasks greedily.
//!
//! A node's dependencies are found by tracking, per lockable entity, the
//! latest earlier node whose exclusion set contains it; transitively
//! implied edges are then pruned, leaving exactly the orderings whose
//! removal would let two overlapping exclusion sets run concurrently.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use parking_lot::Mutex;

use super::{FunctionId, Scheduler, SchedulerError, SchedulerKind, Task};
use crate::consistency::{exclusion_set, ConsistencyModel};
use crate::graph::{DataGraph, GraphError, VertexId};

/// DAG over update tasks; `deps[i]` lists strictly smaller node indices
/// that must complete before node `i` may run.
#[derive(Debug, Clone)]
pub struct ExecutionPlan {
    nodes: Vec<Task>,
    deps: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
}

impl ExecutionPlan {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Task] {
        &self.nodes
    }

    pub fn deps(&self, node: usize) -> &[usize] {
        &self.deps[node]
    }

    pub fn dependents(&self, node: usize) -> &[usize] {
        &self.dependents[node]
    }
}

/// Compiles the execution sequence `((S_1, f_1), ..., (S_k, f_k))` under
/// `model`'s exclusion sets. Nodes are listed set by set, ascending vertex
/// id within a set. Executing the plan greedily (any ready node, any
/// worker) produces the same final data as running each set to a barrier,
/// for update functions satisfying the model's sequential-consistency
/// conditions.
pub fn compile_set_schedule<V, E>(
    graph: &DataGraph<V, E>,
    sequence: &[(Vec<VertexId>, FunctionId)],
    model: ConsistencyModel,
) -> Result<ExecutionPlan, GraphError> {
    let entity_count = graph.vertex_count() + graph.edge_count();
    let mut last_touch: Vec<Option<usize>> = vec![None; entity_count];
    let mut nodes: Vec<Task> = Vec::new();
    let mut raw_deps: Vec<Vec<usize>> = Vec::new();

    for (set, function) in sequence {
        let mut members = set.clone();
        members.sort_unstable();
        members.dedup();
        for v in members {
            let exclusion = exclusion_set(graph, v, model)?;
            let node = nodes.len();
            let mut deps: Vec<usize> = exclusion
                .entities()
                .iter()
                .filter_map(|&e| last_touch[e.dense_index(graph.vertex_count())])
                .collect();
            deps.sort_unstable();
            deps.dedup();
            for &e in exclusion.entities() {
                last_touch[e.dense_index(graph.vertex_count())] = Some(node);
            }
            raw_deps.push(deps);
            nodes.push(Task::new(v, *function));
        }
    }

    let deps = transitive_reduction(&raw_deps);
    let mut dependents = vec![Vec::new(); nodes.len()];
    for (i, ds) in deps.iter().enumerate() {
        for &j in ds {
            dependents[j].push(i);
        }
    }

    Ok(ExecutionPlan {
        nodes,
        deps,
        dependents,
    })
}

/// Keeps a dep edge (i <- j) only if no other dependency of `i` already
/// reaches `j`. Dep indices strictly decrease along edges, so the search
/// from a candidate `k` can prune below the target.
fn transitive_reduction(raw: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut visited = vec![u64::MAX; raw.len()];
    let mut stamp = 0u64;
    let mut stack: Vec<usize> = Vec::new();

    let mut reaches = |from: usize, target: usize, visited: &mut [u64]| -> bool {
        stamp += 1;
        stack.clear();
        stack.push(from);
        visited[from] = stamp;
        while let Some(x) = stack.pop() {
            if x == target {
                return true;
            }
            for &d in &raw[x] {
                if d >= target && visited[d] != stamp {
                    visited[d] = stamp;
                    stack.push(d);
                }
            }
        }
        false
    };

    raw.iter()
        .map(|deps| {
            deps.iter()
                .copied()
                .filter(|&j| {
                    !deps
                        .iter()
                        .any(|&k| k != j && k > j && reaches(k, j, &mut visited))
                })
                .collect()
        })
        .collect()
}

/// Poll result for greedy plan execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanPoll {
    /// Node is ready; run it and report back with `complete`.
    Ready { node: usize, task: Task },
    /// Nothing ready right now, but issued or blocked nodes remain.
    Blocked,
    /// Every node has completed.
    Exhausted,
}

/// Mutable issue/complete state over a compiled plan. Ready nodes are
/// issued lowest-index first so single-worker runs are deterministic.
pub struct PlanExecution {
    plan: Arc<ExecutionPlan>,
    indegree: Vec<usize>,
    ready: BinaryHeap<Reverse<usize>>,
    issued: Vec<bool>,
    completed: Vec<bool>,
    completed_count: usize,
}

impl PlanExecution {
    pub fn new(plan: Arc<ExecutionPlan>) -> Self {
        let indegree: Vec<usize> = (0..plan.len()).map(|i| plan.deps(i).len()).collect();
        let ready = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        PlanExecution {
            issued: vec![false; plan.len()],
            completed: vec![false; plan.len()],
            completed_count: 0,
            indegree,
            ready,
            plan,
        }
    }

    pub fn next_ready(&mut self) -> PlanPoll {
        if self.is_finished() {
            return PlanPoll::Exhausted;
        }
        match self.ready.pop() {
            Some(Reverse(node)) => {
                self.issued[node] = true;
                PlanPoll::Ready {
                    node,
                    task: self.plan.nodes()[node],
                }
            }
            None => PlanPoll::Blocked,
        }
    }

    /// Marks an issued node complete, releasing its dependents.
    pub fn complete(&mut self, node: usize) {
        assert!(
            self.issued[node] && !self.completed[node],
            "contract violation: completing node {node} that was not issued"
        );
        self.completed[node] = true;
        self.completed_count += 1;
        for &d in self.plan.dependents(node) {
            self.indegree[d] -= 1;
            if self.indegree[d] == 0 {
                self.ready.push(Reverse(d));
            }
        }
    }

    pub fn is_finished(&self) -> bool {
        self.completed_count == self.plan.len()
    }
}

/// Scheduler wrapper driving a compiled plan from the worker pool.
pub struct SetScheduler {
    exec: Mutex<PlanExecution>,
    in_flight: Vec<Mutex<Option<usize>>>,
}

impl SetScheduler {
    pub fn new(plan: ExecutionPlan, workers: usize) -> Self {
        SetScheduler {
            exec: Mutex::new(PlanExecution::new(Arc::new(plan))),
            in_flight: (0..workers.max(1)).map(|_| Mutex::new(None)).collect(),
        }
    }
}

impl Scheduler for SetScheduler {
    fn add_task(&self, _task: Task) -> Result<(), SchedulerError> {
        Err(SchedulerError::UnsupportedAdd("set"))
    }

    fn next_task(&self, worker: usize) -> Option<Task> {
        match self.exec.lock().next_ready() {
            PlanPoll::Ready { node, task } => {
                *self.in_flight[worker % self.in_flight.len()].lock() = Some(node);
                Some(task)
            }
            PlanPoll::Blocked | PlanPoll::Exhausted => None,
        }
    }

    fn task_completed(&self, worker: usize, _task: &Task) {
        let node = self.in_flight[worker % self.in_flight.len()]
            .lock()
            .take()
            .expect("completion without an issued node");
        self.exec.lock().complete(node);
    }

    fn is_empty(&self) -> bool {
        self.exec.lock().is_finished()
    }

    fn supports_dynamic_tasks(&self) -> bool {
        false
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Set
    }
}
