//! Generated schedules: round-robin (Gauss-Seidel style) and synchronous
//! (Jacobi style, barrier between generations).

use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{FunctionId, Scheduler, SchedulerError, SchedulerKind, Task};
use crate::graph::VertexId;

/// Vertices `0..n` in id order, repeated for a configured number of
/// sweeps. Workers claim positions from a shared cursor, so updates always
/// see the most recently written data.
pub struct RoundRobin {
    vertices: u32,
    function: FunctionId,
    total: u64,
    cursor: AtomicU64,
}

impl RoundRobin {
    pub fn new(vertices: u32, function: FunctionId, sweeps: usize) -> Self {
        RoundRobin {
            vertices,
            function,
            total: u64::from(vertices) * sweeps as u64,
            cursor: AtomicU64::new(0),
        }
    }
}

impl Scheduler for RoundRobin {
    fn add_task(&self, _task: Task) -> Result<(), SchedulerError> {
        Err(SchedulerError::UnsupportedAdd("round-robin"))
    }

    fn next_task(&self, _worker: usize) -> Option<Task> {
        if self.vertices == 0 {
            return None;
        }
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        if i < self.total {
            Some(Task::new(
                VertexId((i % u64::from(self.vertices)) as u32),
                self.function,
            ))
        } else {
            None
        }
    }

    fn is_empty(&self) -> bool {
        self.cursor.load(Ordering::Relaxed) >= self.total
    }

    fn supports_dynamic_tasks(&self) -> bool {
        false
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::RoundRobin
    }

    fn sweep_limited(&self) -> bool {
        true
    }
}

struct SynchronousState {
    generation: usize,
    cursor: u32,
    outstanding: u32,
}

/// Barrier-delimited generations: every vertex is issued once per
/// generation and generation `g+1` starts only after all of `g`'s tasks
/// have completed.
pub struct Synchronous {
    vertices: u32,
    function: FunctionId,
    generations: usize,
    state: Mutex<SynchronousState>,
}

impl Synchronous {
    pub fn new(vertices: u32, function: FunctionId, generations: usize) -> Self {
        Synchronous {
            vertices,
            function,
            generations: if vertices == 0 { 0 } else { generations },
            state: Mutex::new(SynchronousState {
                generation: 0,
                cursor: 0,
                outstanding: 0,
            }),
        }
    }
}

impl Scheduler for Synchronous {
    fn add_task(&self, _task: Task) -> Result<(), SchedulerError> {
        Err(SchedulerError::UnsupportedAdd("sync"))
    }

    fn next_task(&self, _worker: usize) -> Option<Task> {
        let mut state = self.state.lock();
        if state.generation >= self.generations || state.cursor >= self.vertices {
            // Drained, or waiting at the barrier for stragglers.
            return None;
        }
        let v = VertexId(state.cursor);
        state.cursor += 1;
        state.outstanding += 1;
        Some(Task::new(v, self.function))
    }

    fn task_completed(&self, _worker: usize, _task: &Task) {
        let mut state = self.state.lock();
        state.outstanding -= 1;
        if state.outstanding == 0 && state.cursor >= self.vertices {
            state.generation += 1;
            state.cursor = 0;
        }
    }

    fn is_empty(&self) -> bool {
        let state = self.state.lock();
        state.generation >= self.generations
    }

    fn supports_dynamic_tasks(&self) -> bool {
        false
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Synchronous
    }

    fn sweep_limited(&self) -> bool {
        true
    }
}
