//! Sync execution: sequential fold in ascending vertex order, or a
//! parallel tree reduction over contiguous id ranges when the registration
//! provides a merge. Each vertex's fold step runs under that vertex's
//! scope, acquired with the engine's configured consistency model.

use std::any::Any;

use super::{Engine, RunError};
use crate::graph::{ScopeView, SyncRegistration, VertexId};

type Acc = Box<dyn Any + Send>;

fn ranges(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let parts = parts.max(1);
    let chunk = n.div_ceil(parts);
    (0..parts)
        .map(|i| (i * chunk, ((i + 1) * chunk).min(n)))
        .filter(|(s, e)| s < e)
        .collect()
}

impl<V, E> Engine<V, E>
where
    V: Send + Sync,
    E: Send + Sync,
{
    fn fold_range(
        &self,
        reg: &SyncRegistration<V, E>,
        start: usize,
        end: usize,
        mut acc: Acc,
    ) -> Acc {
        for v in start..end {
            let v = VertexId(v as u32);
            let scope = self.graph.scope_ref(v).expect("vertex in range");
            let _guard = self.locks.acquire(scope, self.config.model);
            let mut view = ScopeView::new(&self.graph, scope, self.config.model.access());
            acc = reg.fold_scope(&mut view, acc);
        }
        acc
    }

    pub(crate) fn execute_sync(&self, reg: &SyncRegistration<V, E>) -> Result<(), RunError> {
        let n = self.graph.vertex_count();
        let acc = if reg.has_merge() && self.config.workers > 1 && n > 1 {
            let parts = ranges(n, self.config.workers);
            let partials: Vec<Acc> = std::thread::scope(|s| {
                let handles: Vec<_> = parts
                    .iter()
                    .map(|&(start, end)| {
                        s.spawn(move || self.fold_range(reg, start, end, reg.fresh_acc()))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sync fold worker panicked"))
                    .collect()
            });
            partials
                .into_iter()
                .reduce(|a, b| reg.merge_accs(a, b))
                .unwrap_or_else(|| reg.fresh_acc())
        } else {
            self.fold_range(reg, 0, n, reg.fresh_acc())
        };
        self.table.store_sync_result(reg.key(), reg, acc);
        Ok(())
    }
}
