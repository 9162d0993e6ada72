//! Task abstraction and the scheduler taxonomy.
//!
//! Schedulers fall into two families: *fed* schedulers (FIFO and priority
//! variants) hold a dynamic task list that update functions may append to,
//! while *generated* schedulers (synchronous, round-robin, set) produce
//! their schedule themselves and reject `add_task`.

mod generated;
mod plan;
mod queues;

pub use generated::{RoundRobin, Synchronous};
pub use plan::{compile_set_schedule, ExecutionPlan, PlanExecution, PlanPoll, SetScheduler};
pub use queues::{ApproxPriority, FifoMultiQueue, FifoPartitioned, FifoSingle, PriorityScheduler};

use thiserror::Error;

use crate::consistency::ConsistencyModel;
use crate::graph::{DataGraph, GraphError, VertexId};

/// Names a registered update function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionId(pub u16);

/// The unit of scheduled work: apply one update function to one vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub vertex: VertexId,
    pub function: FunctionId,
    /// Present only when headed for a priority-class scheduler.
    pub priority: Option<f64>,
}

impl Task {
    pub fn new(vertex: VertexId, function: FunctionId) -> Self {
        Task {
            vertex,
            function,
            priority: None,
        }
    }

    pub fn with_priority(vertex: VertexId, function: FunctionId, priority: f64) -> Self {
        assert!(!priority.is_nan(), "task priority must be a number");
        Task {
            vertex,
            function,
            priority: Some(priority),
        }
    }
}

/// The scheduler taxonomy. FIFO kinds preserve insertion order (strictly,
/// or per-queue for the relaxed variants); prioritized kinds reorder by
/// priority (globally, or per-queue); the rest generate their schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Synchronous,
    RoundRobin,
    FifoSingle,
    FifoMultiQueue,
    FifoPartitioned,
    Priority,
    ApproxPriority,
    Set,
}

impl SchedulerKind {
    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::Synchronous => "sync",
            SchedulerKind::RoundRobin => "round-robin",
            SchedulerKind::FifoSingle => "fifo",
            SchedulerKind::FifoMultiQueue => "multiqueue",
            SchedulerKind::FifoPartitioned => "partitioned",
            SchedulerKind::Priority => "priority",
            SchedulerKind::ApproxPriority => "approx-priority",
            SchedulerKind::Set => "set",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(SchedulerKind::Synchronous),
            "round-robin" => Ok(SchedulerKind::RoundRobin),
            "fifo" => Ok(SchedulerKind::FifoSingle),
            "multiqueue" => Ok(SchedulerKind::FifoMultiQueue),
            "partitioned" => Ok(SchedulerKind::FifoPartitioned),
            "priority" => Ok(SchedulerKind::Priority),
            "approx-priority" => Ok(SchedulerKind::ApproxPriority),
            "set" => Ok(SchedulerKind::Set),
            other => Err(format!("unknown scheduler `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("the {0} scheduler generates its own schedule; dynamic tasks are unsupported")]
    UnsupportedAdd(&'static str),
    #[error("set schedule references a vertex outside the graph: {0}")]
    BadSchedule(GraphError),
}

/// A source of update tasks shared by all workers.
///
/// Implementations are safe for concurrent `add`/`next` and never hold
/// internal synchronization across a call boundary, so workers may acquire
/// scopes freely between calls.
pub trait Scheduler: Send + Sync {
    /// Enqueues a task. Fed schedulers only.
    fn add_task(&self, task: Task) -> Result<(), SchedulerError>;

    /// Enqueues a task produced by `worker`. Defaults to [`Scheduler::add_task`];
    /// per-worker-queue kinds route to the producing worker's queue.
    fn add_task_from(&self, _worker: usize, task: Task) -> Result<(), SchedulerError> {
        self.add_task(task)
    }

    /// Pops the next task for `worker`, or `None` when nothing can be
    /// issued right now (either drained, or blocked on a barrier/plan
    /// dependency).
    fn next_task(&self, worker: usize) -> Option<Task>;

    /// Called by the engine once a popped task's update has finished and
    /// its scope is released. Barrier and plan schedulers advance on this.
    fn task_completed(&self, _worker: usize, _task: &Task) {}

    /// True when no task is queued or pending issuance anywhere. Together
    /// with all workers idle this signals exhaustion.
    fn is_empty(&self) -> bool;

    fn supports_dynamic_tasks(&self) -> bool;

    fn kind(&self) -> SchedulerKind;

    /// Whether exhaustion of this scheduler reflects a configured sweep
    /// bound rather than a drained task list.
    fn sweep_limited(&self) -> bool {
        false
    }
}

/// Scheduler selection plus per-kind parameters.
#[derive(Clone)]
pub enum SchedulerSpec {
    Synchronous {
        function: FunctionId,
        sweeps: usize,
    },
    RoundRobin {
        function: FunctionId,
        sweeps: usize,
    },
    FifoSingle,
    FifoMultiQueue,
    FifoPartitioned,
    Priority,
    ApproxPriority,
    /// A sequence of (vertex set, function) pairs compiled into an
    /// execution plan. `compile_model` selects the exclusion sets used for
    /// the dependency analysis; it may be stronger than the runtime model
    /// (chromatic Gibbs compiles with edge exclusion and locks per-vertex).
    Set {
        sequence: Vec<(Vec<VertexId>, FunctionId)>,
        compile_model: ConsistencyModel,
    },
}

impl SchedulerSpec {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            SchedulerSpec::Synchronous { .. } => SchedulerKind::Synchronous,
            SchedulerSpec::RoundRobin { .. } => SchedulerKind::RoundRobin,
            SchedulerSpec::FifoSingle => SchedulerKind::FifoSingle,
            SchedulerSpec::FifoMultiQueue => SchedulerKind::FifoMultiQueue,
            SchedulerSpec::FifoPartitioned => SchedulerKind::FifoPartitioned,
            SchedulerSpec::Priority => SchedulerKind::Priority,
            SchedulerSpec::ApproxPriority => SchedulerKind::ApproxPriority,
            SchedulerSpec::Set { .. } => SchedulerKind::Set,
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind().label()
    }

    /// Instantiates the scheduler for a frozen graph and worker count.
    pub fn build<V, E>(
        &self,
        graph: &DataGraph<V, E>,
        workers: usize,
    ) -> Result<Box<dyn Scheduler>, SchedulerError> {
        let workers = workers.max(1);
        Ok(match self {
            SchedulerSpec::Synchronous { function, sweeps } => Box::new(Synchronous::new(
                graph.vertex_count() as u32,
                *function,
                *sweeps,
            )),
            SchedulerSpec::RoundRobin { function, sweeps } => Box::new(RoundRobin::new(
                graph.vertex_count() as u32,
                *function,
                *sweeps,
            )),
            SchedulerSpec::FifoSingle => Box::new(FifoSingle::new()),
            SchedulerSpec::FifoMultiQueue => Box::new(FifoMultiQueue::new(workers)),
            SchedulerSpec::FifoPartitioned => Box::new(FifoPartitioned::new(workers)),
            SchedulerSpec::Priority => Box::new(PriorityScheduler::new()),
            SchedulerSpec::ApproxPriority => Box::new(ApproxPriority::new(workers)),
            SchedulerSpec::Set {
                sequence,
                compile_model,
            } => {
                let plan = compile_set_schedule(graph, sequence, *compile_model)
                    .map_err(SchedulerError::BadSchedule)?;
                Box::new(SetScheduler::new(plan, workers))
            }
        })
    }
}
