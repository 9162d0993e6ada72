//! The execution engine: pops tasks, acquires scopes, applies update
//! functions, runs the sync mechanism, and assesses termination.

mod sync;

#[cfg(test)]
mod tests;

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use thiserror::Error;

use crate::consistency::{ConsistencyModel, LockTable};
use crate::graph::{
    DataGraph, GraphError, ScopeView, SdtError, SdtReader, SdtValue, SharedDataTable,
};
use crate::scheduling::{FunctionId, Scheduler, SchedulerError, SchedulerSpec, Task};
use crate::graph::VertexId;

/// Error raised by an update function body; aborts the run.
#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("degenerate potential: {0}")]
    DegeneratePotential(String),
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("graph must be frozen before an engine run")]
    NotFrozen,
    #[error("engine run already active")]
    AlreadyRunning,
    #[error("update function {0:?} is not registered")]
    UnknownFunction(FunctionId),
    #[error("{kind} scheduler generates its schedule; initial tasks are not accepted")]
    InitialTasksUnsupported { kind: &'static str },
    #[error("no sync registration for key `{0}`")]
    UnregisteredSync(String),
    #[error("update at {vertex} (function {function:?}) failed: {source}")]
    UpdateFailed {
        vertex: VertexId,
        function: FunctionId,
        source: UpdateError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Sdt(#[from] SdtError),
}

/// A stateless update function: reads and writes the granted scope view,
/// reads the shared data table, and may emit follow-up tasks through the
/// sink (honored only by fed schedulers).
pub trait UpdateFn<V, E>: Send + Sync {
    fn apply(
        &self,
        view: &mut ScopeView<'_, V, E>,
        sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError>;
}

impl<V, E, F> UpdateFn<V, E> for F
where
    F: Fn(&mut ScopeView<'_, V, E>, &SdtReader, &mut TaskSink) -> Result<(), UpdateError>
        + Send
        + Sync,
{
    fn apply(
        &self,
        view: &mut ScopeView<'_, V, E>,
        sdt: &SdtReader,
        sink: &mut TaskSink,
    ) -> Result<(), UpdateError> {
        self(view, sdt, sink)
    }
}

/// Buffers tasks emitted by an update function. The engine feeds them to
/// the scheduler only after the emitting function's scope is released, so
/// self-rescheduling cannot break the exclusion-set invariant.
pub struct TaskSink {
    dynamic: bool,
    emitted: Vec<Task>,
    sync_requests: Vec<String>,
}

impl TaskSink {
    fn new(dynamic: bool) -> Self {
        TaskSink {
            dynamic,
            emitted: Vec::new(),
            sync_requests: Vec::new(),
        }
    }

    /// Sink detached from any scheduler, for driving update functions
    /// directly (sequential reference runs, tests). Emitted tasks are
    /// buffered and can be drained by the caller.
    pub fn detached(dynamic: bool) -> Self {
        Self::new(dynamic)
    }

    /// Takes the tasks emitted so far.
    pub fn drain_tasks(&mut self) -> Vec<Task> {
        std::mem::take(&mut self.emitted)
    }

    /// Whether the active scheduler accepts dynamically created tasks.
    pub fn supports_dynamic_tasks(&self) -> bool {
        self.dynamic
    }

    pub fn add_task(&mut self, task: Task) {
        self.emitted.push(task);
    }

    pub fn add_task_with_priority(&mut self, vertex: VertexId, function: FunctionId, priority: f64) {
        self.emitted.push(Task::with_priority(vertex, function, priority));
    }

    /// Asks the engine to run the sync for `key` once the current task
    /// completes and its scope is released.
    pub fn request_sync(&mut self, key: impl Into<String>) {
        self.sync_requests.push(key.into());
    }
}

/// A stop test over the shared data table, polled between tasks and after
/// each background sync.
pub type TerminationFn = Arc<dyn Fn(&SdtReader) -> bool + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// Task list drained with every worker idle and nothing in flight.
    SchedulerExhausted,
    /// A termination function returned true.
    TerminationFunction,
    /// A generated schedule reached its configured sweep bound.
    SweepLimit,
}

impl TerminationReason {
    pub fn label(self) -> &'static str {
        match self {
            TerminationReason::SchedulerExhausted => "scheduler-exhausted",
            TerminationReason::TerminationFunction => "termination-function",
            TerminationReason::SweepLimit => "sweep-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunStats {
    pub workers: usize,
    pub scheduler: &'static str,
    pub model: ConsistencyModel,
    pub updates_applied: u64,
    pub wall_time: Duration,
    pub per_worker_updates: Vec<u64>,
    pub termination_reason: TerminationReason,
}

impl RunStats {
    pub const CSV_HEADER: &'static str = "workers,scheduler,model,updates,wall_time_s,reason";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{}",
            self.workers,
            self.scheduler,
            self.model.label(),
            self.updates_applied,
            self.wall_time.as_secs_f64(),
            self.termination_reason.label()
        )
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    pub model: ConsistencyModel,
    /// Poll interval for termination functions and the background sync
    /// executor's wakeups.
    pub sync_poll_interval: Duration,
    /// Enables the per-entity in-flight counters on the lock table (also
    /// switched on by the `GRAPPLE_LOCK_AUDIT` environment variable).
    pub lock_audit: bool,
}

impl EngineConfig {
    pub fn new(workers: usize, model: ConsistencyModel) -> Self {
        EngineConfig {
            workers: workers.max(1),
            model,
            sync_poll_interval: Duration::from_millis(5),
            lock_audit: false,
        }
    }
}

struct Registry<V, E> {
    slots: Vec<Option<Arc<dyn UpdateFn<V, E>>>>,
}

impl<V, E> Registry<V, E> {
    fn new() -> Self {
        Registry { slots: Vec::new() }
    }

    fn insert(&mut self, id: FunctionId, f: Arc<dyn UpdateFn<V, E>>) {
        let idx = id.0 as usize;
        if self.slots.len() <= idx {
            self.slots.resize_with(idx + 1, || None);
        }
        self.slots[idx] = Some(f);
    }

    fn get(&self, id: FunctionId) -> Result<&Arc<dyn UpdateFn<V, E>>, RunError> {
        self.slots
            .get(id.0 as usize)
            .and_then(|s| s.as_ref())
            .ok_or(RunError::UnknownFunction(id))
    }

    fn check(&self, id: FunctionId) -> Result<(), RunError> {
        self.get(id).map(|_| ())
    }
}

/// Drives worker execution over one graph/table pair. An engine may be
/// invoked repeatedly; graph data and converged state persist between
/// invocations.
pub struct Engine<V, E> {
    graph: Arc<DataGraph<V, E>>,
    table: Arc<SharedDataTable<V, E>>,
    locks: Arc<LockTable>,
    registry: Registry<V, E>,
    terminations: Vec<TerminationFn>,
    config: EngineConfig,
    running: AtomicBool,
}

struct RunShared<'r> {
    scheduler: &'r dyn Scheduler,
    workers: usize,
    stop: AtomicBool,
    reason: Mutex<Option<TerminationReason>>,
    error: Mutex<Option<RunError>>,
    idle: AtomicUsize,
    per_worker: Vec<AtomicU64>,
    start: Instant,
    last_poll_nanos: AtomicU64,
    poll_interval: Duration,
}

impl RunShared<'_> {
    fn halted(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn finish(&self, reason: TerminationReason) {
        let mut slot = self.reason.lock();
        if slot.is_none() {
            *slot = Some(reason);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn fail(&self, err: RunError) {
        let mut slot = self.error.lock();
        if slot.is_none() {
            *slot = Some(err);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Rate-limited termination-function poll shared across workers.
    fn maybe_poll_terminations(&self, reader: &SdtReader, fns: &[TerminationFn]) {
        if fns.is_empty() {
            return;
        }
        let now = self.start.elapsed().as_nanos() as u64;
        let last = self.last_poll_nanos.load(Ordering::Relaxed);
        if now.saturating_sub(last) < self.poll_interval.as_nanos() as u64 {
            return;
        }
        if self
            .last_poll_nanos
            .compare_exchange(last, now, Ordering::Relaxed, Ordering::Relaxed)
            .is_err()
        {
            return;
        }
        if fns.iter().any(|f| f(reader)) {
            self.finish(TerminationReason::TerminationFunction);
        }
    }

    fn poll_terminations_now(&self, reader: &SdtReader, fns: &[TerminationFn]) {
        if fns.iter().any(|f| f(reader)) {
            self.finish(TerminationReason::TerminationFunction);
        }
    }
}

struct RunFlag<'g, V, E>(&'g DataGraph<V, E>);

impl<V, E> Drop for RunFlag<'_, V, E> {
    fn drop(&mut self) {
        self.0.end_run();
    }
}

impl<V, E> Engine<V, E>
where
    V: Send + Sync,
    E: Send + Sync,
{
    pub fn new(
        graph: Arc<DataGraph<V, E>>,
        table: Arc<SharedDataTable<V, E>>,
        config: EngineConfig,
    ) -> Self {
        let locks = if config.lock_audit {
            LockTable::with_audit(graph.vertex_count(), graph.edge_count())
        } else {
            LockTable::for_graph(&graph)
        };
        Engine {
            locks: Arc::new(locks),
            graph,
            table,
            registry: Registry::new(),
            terminations: Vec::new(),
            config,
            running: AtomicBool::new(false),
        }
    }

    pub fn graph(&self) -> &Arc<DataGraph<V, E>> {
        &self.graph
    }

    pub fn table(&self) -> &Arc<SharedDataTable<V, E>> {
        &self.table
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_model(&mut self, model: ConsistencyModel) {
        self.config.model = model;
    }

    /// Overlapping-exclusion-set violations observed by the lock audit, if
    /// enabled.
    pub fn audit_violations(&self) -> Option<u64> {
        self.locks.audit_violations()
    }

    pub fn register_update(&mut self, id: FunctionId, f: Arc<dyn UpdateFn<V, E>>) {
        self.registry.insert(id, f);
    }

    pub fn add_termination(&mut self, f: impl Fn(&SdtReader) -> bool + Send + Sync + 'static) {
        self.terminations.push(Arc::new(f));
    }

    pub fn clear_terminations(&mut self) {
        self.terminations.clear();
    }

    /// Runs `scheduler` to termination and reports statistics.
    ///
    /// Initial tasks seed fed schedulers and must be empty for generated
    /// ones. The run stops when (a) the scheduler is exhausted with every
    /// worker idle and no emitted task in flight, or (b) a termination
    /// function returns true. An update-function error aborts the run,
    /// releasing all locks and surfacing the offending vertex and function.
    pub fn run(&self, scheduler: &SchedulerSpec, initial: &[Task]) -> Result<RunStats, RunError> {
        if !self.graph.is_frozen() {
            return Err(RunError::NotFrozen);
        }
        if self.running.swap(true, Ordering::SeqCst) {
            return Err(RunError::AlreadyRunning);
        }
        let result = self.run_inner(scheduler, initial);
        self.running.store(false, Ordering::SeqCst);
        result
    }

    fn run_inner(&self, spec: &SchedulerSpec, initial: &[Task]) -> Result<RunStats, RunError> {
        match spec {
            SchedulerSpec::Synchronous { function, .. }
            | SchedulerSpec::RoundRobin { function, .. } => self.registry.check(*function)?,
            SchedulerSpec::Set { sequence, .. } => {
                for (_, f) in sequence {
                    self.registry.check(*f)?;
                }
            }
            _ => {}
        }
        let scheduler = spec.build(&self.graph, self.config.workers)?;
        if !scheduler.supports_dynamic_tasks() && !initial.is_empty() {
            return Err(RunError::InitialTasksUnsupported {
                kind: spec.label(),
            });
        }
        for task in initial {
            self.registry.check(task.function)?;
            self.graph.scope_of(task.vertex)?; // validates the vertex
            scheduler.add_task(*task)?;
        }

        let shared = RunShared {
            scheduler: scheduler.as_ref(),
            workers: self.config.workers,
            stop: AtomicBool::new(false),
            reason: Mutex::new(None),
            error: Mutex::new(None),
            idle: AtomicUsize::new(0),
            per_worker: (0..self.config.workers).map(|_| AtomicU64::new(0)).collect(),
            start: Instant::now(),
            last_poll_nanos: AtomicU64::new(0),
            poll_interval: self.config.sync_poll_interval,
        };

        self.graph.begin_run();
        let _run_flag = RunFlag(&self.graph);

        std::thread::scope(|s| {
            for w in 0..self.config.workers {
                let shared = &shared;
                s.spawn(move || self.worker_loop(w, shared));
            }
            let periodic = self.periodic_registrations();
            if !periodic.is_empty() {
                let shared = &shared;
                s.spawn(move || self.background_sync_loop(periodic, shared));
            }
        });

        if let Some(err) = shared.error.lock().take() {
            return Err(err);
        }
        let per_worker: Vec<u64> = shared
            .per_worker
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .collect();
        let reason = shared
            .reason
            .lock()
            .unwrap_or(TerminationReason::SchedulerExhausted);
        Ok(RunStats {
            workers: self.config.workers,
            scheduler: spec.label(),
            model: self.config.model,
            updates_applied: per_worker.iter().sum(),
            wall_time: shared.start.elapsed(),
            per_worker_updates: per_worker,
            termination_reason: reason,
        })
    }

    fn worker_loop(&self, w: usize, shared: &RunShared<'_>) {
        let reader = self.table.reader();
        loop {
            if shared.halted() {
                return;
            }
            shared.maybe_poll_terminations(&reader, &self.terminations);
            if let Some(task) = shared.scheduler.next_task(w) {
                if let Err(e) = self.process_task(w, task, shared) {
                    shared.fail(e);
                    return;
                }
                continue;
            }

            // Nothing to pop right now. Declare ourselves idle and keep
            // polling; exhaustion needs every worker idle (no in-flight
            // update can still emit tasks) plus an empty scheduler.
            shared.idle.fetch_add(1, Ordering::SeqCst);
            let mut claimed = None;
            loop {
                if shared.halted() {
                    break;
                }
                if let Some(task) = shared.scheduler.next_task(w) {
                    claimed = Some(task);
                    break;
                }
                if shared.idle.load(Ordering::SeqCst) == shared.workers
                    && shared.scheduler.is_empty()
                {
                    shared.finish(if shared.scheduler.sweep_limited() {
                        TerminationReason::SweepLimit
                    } else {
                        TerminationReason::SchedulerExhausted
                    });
                    break;
                }
                shared.maybe_poll_terminations(&reader, &self.terminations);
                std::thread::sleep(Duration::from_micros(20));
            }
            shared.idle.fetch_sub(1, Ordering::SeqCst);
            match claimed {
                Some(task) => {
                    if let Err(e) = self.process_task(w, task, shared) {
                        shared.fail(e);
                        return;
                    }
                }
                None => return,
            }
        }
    }

    fn process_task(&self, w: usize, task: Task, shared: &RunShared<'_>) -> Result<(), RunError> {
        let func = self.registry.get(task.function)?;
        let scope = self.graph.scope_ref(task.vertex)?;
        let reader = self.table.reader();
        let mut sink = TaskSink::new(shared.scheduler.supports_dynamic_tasks());
        {
            let _guard = self.locks.acquire(scope, self.config.model);
            let mut view = ScopeView::new(&self.graph, scope, self.config.model.access());
            func.apply(&mut view, &reader, &mut sink)
                .map_err(|source| RunError::UpdateFailed {
                    vertex: task.vertex,
                    function: task.function,
                    source,
                })?;
        } // scope released; emitted tasks become visible below

        shared.per_worker[w].fetch_add(1, Ordering::Relaxed);
        for t in sink.emitted.drain(..) {
            self.registry.check(t.function)?;
            shared.scheduler.add_task_from(w, t)?;
        }
        for key in sink.sync_requests.drain(..) {
            self.sync_by_key(&key)?;
        }
        shared.scheduler.task_completed(w, &task);
        Ok(())
    }

    fn periodic_registrations(&self) -> Vec<Arc<crate::graph::SyncRegistration<V, E>>> {
        self.table
            .registrations()
            .into_iter()
            .filter(|r| r.period().is_some())
            .collect()
    }

    fn background_sync_loop(
        &self,
        periodic: Vec<Arc<crate::graph::SyncRegistration<V, E>>>,
        shared: &RunShared<'_>,
    ) {
        let reader = self.table.reader();
        let mut due: Vec<Instant> = periodic
            .iter()
            .map(|r| Instant::now() + r.period().unwrap())
            .collect();
        while !shared.halted() {
            let now = Instant::now();
            for (i, reg) in periodic.iter().enumerate() {
                if shared.halted() {
                    return;
                }
                if now >= due[i] {
                    if let Err(e) = self.execute_sync(reg) {
                        shared.fail(e);
                        return;
                    }
                    shared.poll_terminations_now(&reader, &self.terminations);
                    due[i] = Instant::now() + reg.period().unwrap();
                }
            }
            let wake = due.iter().min().copied().unwrap();
            let pause = wake
                .saturating_duration_since(Instant::now())
                .min(self.config.sync_poll_interval)
                .max(Duration::from_micros(200));
            std::thread::sleep(pause);
        }
    }

    fn sync_by_key(&self, key: &str) -> Result<SdtValue, RunError> {
        let reg = self
            .table
            .registration(key)
            .ok_or_else(|| RunError::UnregisteredSync(key.to_owned()))?;
        self.execute_sync(&reg)?;
        Ok(self.table.get(key)?)
    }

    /// Runs the sync for `key` immediately on the calling thread (plus
    /// range workers when a merge is registered) and returns the freshly
    /// applied value.
    pub fn sync_now(&self, key: &str) -> Result<SdtValue, RunError> {
        if !self.graph.is_frozen() {
            return Err(RunError::NotFrozen);
        }
        self.sync_by_key(key)
    }
}
