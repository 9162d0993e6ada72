//! Fed schedulers: FIFO (single queue, multi-queue with stealing,
//! statically partitioned) and prioritized (global heap, per-worker
//! approximate heaps).

use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;

use super::{FunctionId, Scheduler, SchedulerError, SchedulerKind, Task};
use crate::graph::VertexId;

/// Strict global FIFO: consumption order equals production order.
pub struct FifoSingle {
    queue: Mutex<VecDeque<Task>>,
}

impl Default for FifoSingle {
    fn default() -> Self {
        Self::new()
    }
}

impl FifoSingle {
    pub fn new() -> Self {
        FifoSingle {
            queue: Mutex::new(VecDeque::new()),
        }
    }
}

impl Scheduler for FifoSingle {
    fn add_task(&self, task: Task) -> Result<(), SchedulerError> {
        self.queue.lock().push_back(task);
        Ok(())
    }

    fn next_task(&self, _worker: usize) -> Option<Task> {
        self.queue.lock().pop_front()
    }

    fn is_empty(&self) -> bool {
        self.queue.lock().is_empty()
    }

    fn supports_dynamic_tasks(&self) -> bool {
        true
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::FifoSingle
    }
}

/// Per-worker FIFO queues with stealing. Tasks a worker produces land on
/// its own queue; a worker with an empty queue steals from the front of
/// another, so per-queue FIFO order is preserved but no global order is.
pub struct FifoMultiQueue {
    queues: Vec<Mutex<VecDeque<Task>>>,
    spread: AtomicUsize,
}

impl FifoMultiQueue {
    pub fn new(workers: usize) -> Self {
        FifoMultiQueue {
            queues: (0..workers.max(1))
                .map(|_| Mutex::new(VecDeque::new()))
                .collect(),
            spread: AtomicUsize::new(0),
        }
    }
}

impl Scheduler for FifoMultiQueue {
    fn add_task(&self, task: Task) -> Result<(), SchedulerError> {
        let i = self.spread.fetch_add(1, Ordering::Relaxed) % self.queues.len();
        self.queues[i].lock().push_back(task);
        Ok(())
    }

    fn add_task_from(&self, worker: usize, task: Task) -> Result<(), SchedulerError> {
        self.queues[worker % self.queues.len()].lock().push_back(task);
        Ok(())
    }

    fn next_task(&self, worker: usize) -> Option<Task> {
        let own = worker % self.queues.len();
        if let Some(t) = self.queues[own].lock().pop_front() {
            return Some(t);
        }
        for offset in 1..self.queues.len() {
            let i = (own + offset) % self.queues.len();
            if let Some(t) = self.queues[i].lock().pop_front() {
                return Some(t);
            }
        }
        None
    }

    fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.lock().is_empty())
    }

    fn supports_dynamic_tasks(&self) -> bool {
        true
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::FifoMultiQueue
    }
}

/// Vertex-hash-partitioned FIFO queues, one per worker, no stealing.
/// Partitions are static for the run.
pub struct FifoPartitioned {
    queues: Vec<Mutex<VecDeque<Task>>>,
}

impl FifoPartitioned {
    pub fn new(workers: usize) -> Self {
        FifoPartitioned {
            queues: (0..workers.max(1))
                .map(|_| Mutex::new(VecDeque::new()))
                .collect(),
        }
    }

    fn partition(&self, v: VertexId) -> usize {
        // Fibonacci hashing; keeps grid-adjacent ids off the same queue.
        let h = u64::from(v.0).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32;
        (h as usize) % self.queues.len()
    }
}

impl Scheduler for FifoPartitioned {
    fn add_task(&self, task: Task) -> Result<(), SchedulerError> {
        let i = self.partition(task.vertex) % self.queues.len();
        self.queues[i].lock().push_back(task);
        Ok(())
    }

    fn next_task(&self, worker: usize) -> Option<Task> {
        self.queues[worker % self.queues.len()].lock().pop_front()
    }

    fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.lock().is_empty())
    }

    fn supports_dynamic_tasks(&self) -> bool {
        true
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::FifoPartitioned
    }
}

#[derive(Debug)]
struct HeapEntry {
    priority: f64,
    seq: u64,
    task: Task,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority && self.seq == other.seq
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max priority first; ties broken by insertion order.
        self.priority
            .total_cmp(&other.priority)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-priority queue with max-merge deduplication: re-adding a
/// (vertex, function) pair keeps the larger priority as a single entry.
/// Stale heap entries are discarded lazily on pop.
#[derive(Default)]
struct PriorityInner {
    heap: BinaryHeap<HeapEntry>,
    best: HashMap<(VertexId, FunctionId), f64>,
    seq: u64,
}

impl PriorityInner {
    fn add(&mut self, task: Task) {
        let priority = task.priority.unwrap_or(0.0);
        assert!(!priority.is_nan(), "task priority must be a number");
        let key = (task.vertex, task.function);
        match self.best.entry(key) {
            std::collections::hash_map::Entry::Occupied(mut slot) => {
                if *slot.get() >= priority {
                    return; // merged away
                }
                slot.insert(priority);
            }
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(priority);
            }
        }
        self.heap.push(HeapEntry {
            priority,
            seq: self.seq,
            task: Task {
                priority: Some(priority),
                ..task
            },
        });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Task> {
        while let Some(entry) = self.heap.pop() {
            let key = (entry.task.vertex, entry.task.function);
            match self.best.get(&key) {
                Some(&current) if current == entry.priority => {
                    self.best.remove(&key);
                    return Some(entry.task);
                }
                _ => {} // superseded by a later max-merge
            }
        }
        None
    }

    fn peek_priority(&self) -> Option<f64> {
        // Stale entries only overstate the top; good enough for steal
        // victim selection.
        self.heap.peek().map(|e| e.priority)
    }

    fn is_empty(&self) -> bool {
        self.best.is_empty()
    }
}

/// Strict global priority order.
pub struct PriorityScheduler {
    inner: Mutex<PriorityInner>,
}

impl Default for PriorityScheduler {
    fn default() -> Self {
        Self::new()
    }
}

impl PriorityScheduler {
    pub fn new() -> Self {
        PriorityScheduler {
            inner: Mutex::new(PriorityInner::default()),
        }
    }
}

impl Scheduler for PriorityScheduler {
    fn add_task(&self, task: Task) -> Result<(), SchedulerError> {
        self.inner.lock().add(task);
        Ok(())
    }

    fn next_task(&self, _worker: usize) -> Option<Task> {
        self.inner.lock().pop()
    }

    fn is_empty(&self) -> bool {
        self.inner.lock().is_empty()
    }

    fn supports_dynamic_tasks(&self) -> bool {
        true
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Priority
    }
}

/// Per-worker priority heaps; global order is only approximate. An idle
/// worker steals from the heap whose top priority is currently largest.
pub struct ApproxPriority {
    heaps: Vec<Mutex<PriorityInner>>,
    spread: AtomicUsize,
}

impl ApproxPriority {
    pub fn new(workers: usize) -> Self {
        ApproxPriority {
            heaps: (0..workers.max(1))
                .map(|_| Mutex::new(PriorityInner::default()))
                .collect(),
            spread: AtomicUsize::new(0),
        }
    }
}

impl Scheduler for ApproxPriority {
    fn add_task(&self, task: Task) -> Result<(), SchedulerError> {
        let i = self.spread.fetch_add(1, Ordering::Relaxed) % self.heaps.len();
        self.heaps[i].lock().add(task);
        Ok(())
    }

    fn add_task_from(&self, worker: usize, task: Task) -> Result<(), SchedulerError> {
        self.heaps[worker % self.heaps.len()].lock().add(task);
        Ok(())
    }

    fn next_task(&self, worker: usize) -> Option<Task> {
        let own = worker % self.heaps.len();
        if let Some(t) = self.heaps[own].lock().pop() {
            return Some(t);
        }
        // Steal from the richest-looking heap first.
        let mut victims: Vec<(usize, f64)> = Vec::new();
        for (i, heap) in self.heaps.iter().enumerate() {
            if i == own {
                continue;
            }
            if let Some(p) = heap.lock().peek_priority() {
                victims.push((i, p));
            }
        }
        victims.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (i, _) in victims {
            if let Some(t) = self.heaps[i].lock().pop() {
                return Some(t);
            }
        }
        None
    }

    fn is_empty(&self) -> bool {
        self.heaps.iter().all(|h| h.lock().is_empty())
    }

    fn supports_dynamic_tasks(&self) -> bool {
        true
    }

    fn kind(&self) -> SchedulerKind {
        SchedulerKind::ApproxPriority
    }
}
