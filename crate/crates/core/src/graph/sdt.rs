//! Shared data table: the global key -> value map plus sync registrations.
//!
//! Values are replaced atomically behind an `Arc`, so a concurrent reader
//! always observes a complete value written by some single write. Update
//! functions receive a read-only [`SdtReader`]; writes happen between runs
//! or through the sync executor.

use std::any::Any;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use thiserror::Error;

use super::view::ScopeView;

pub type SdtValue = Arc<dyn Any + Send + Sync>;

type Acc = Box<dyn Any + Send>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SdtError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{0}` already has a sync registration")]
    DuplicateRegistration(String),
    #[error("value under key `{0}` has a different type")]
    TypeMismatch(String),
}

#[derive(Default)]
struct Entries {
    map: RwLock<HashMap<String, SdtValue>>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<SdtValue> {
        self.map.read().get(key).cloned()
    }

    fn set(&self, key: &str, value: SdtValue) {
        self.map.write().insert(key.to_owned(), value);
    }
}

/// Read-only handle to the table entries, cheap to clone and safe to use
/// from any worker.
#[derive(Clone)]
pub struct SdtReader {
    entries: Arc<Entries>,
}

impl SdtReader {
    pub fn get(&self, key: &str) -> Result<SdtValue, SdtError> {
        self.entries
            .get(key)
            .ok_or_else(|| SdtError::MissingKey(key.to_owned()))
    }

    pub fn get_as<T: Any + Clone>(&self, key: &str) -> Result<T, SdtError> {
        let value = self.get(key)?;
        value
            .downcast_ref::<T>()
            .cloned()
            .ok_or_else(|| SdtError::TypeMismatch(key.to_owned()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.get(key).is_some()
    }
}

/// A fold/merge/apply aggregation attached to a table key.
///
/// The fold step runs under the same scope locks as update functions and
/// may modify vertex data. When a merge is provided it must be associative
/// over accumulators produced by the fold; the engine then folds contiguous
/// vertex ranges in parallel and merges partial results left to right.
pub struct SyncRegistration<V, E> {
    key: String,
    period: Option<Duration>,
    initial: Box<dyn Fn() -> Acc + Send + Sync>,
    fold: Box<dyn Fn(&mut ScopeView<'_, V, E>, Acc) -> Acc + Send + Sync>,
    merge: Option<Box<dyn Fn(Acc, Acc) -> Acc + Send + Sync>>,
    apply: Box<dyn Fn(Option<&SdtValue>, Acc) -> SdtValue + Send + Sync>,
}

fn take_acc<A: Any>(acc: Acc) -> A {
    *acc.downcast::<A>().expect("sync accumulator type mismatch")
}

impl<V, E> SyncRegistration<V, E> {
    /// Sequential-only registration (no merge).
    ///
    /// `apply` receives the key's previous table value, if any, which is how
    /// gradient-style aggregations step a parameter in place.
    pub fn new<A, T, Fo, Ap>(key: impl Into<String>, initial: A, fold: Fo, apply: Ap) -> Self
    where
        A: Any + Send + Sync + Clone,
        T: Any + Send + Sync,
        Fo: Fn(&mut ScopeView<'_, V, E>, A) -> A + Send + Sync + 'static,
        Ap: Fn(Option<&T>, A) -> T + Send + Sync + 'static,
    {
        SyncRegistration {
            key: key.into(),
            period: None,
            initial: Box::new(move || Box::new(initial.clone())),
            fold: Box::new(move |scope, acc| Box::new(fold(scope, take_acc::<A>(acc)))),
            merge: None,
            apply: Box::new(move |prev, acc| {
                let prev = prev.and_then(|v| v.downcast_ref::<T>());
                Arc::new(apply(prev, take_acc::<A>(acc)))
            }),
        }
    }

    /// Registration with an associative merge enabling parallel tree
    /// reduction over per-range folds.
    pub fn with_merge<A, T, Fo, Me, Ap>(
        key: impl Into<String>,
        initial: A,
        fold: Fo,
        merge: Me,
        apply: Ap,
    ) -> Self
    where
        A: Any + Send + Sync + Clone,
        T: Any + Send + Sync,
        Fo: Fn(&mut ScopeView<'_, V, E>, A) -> A + Send + Sync + 'static,
        Me: Fn(A, A) -> A + Send + Sync + 'static,
        Ap: Fn(Option<&T>, A) -> T + Send + Sync + 'static,
    {
        let mut reg = Self::new(key, initial, fold, apply);
        reg.merge = Some(Box::new(move |a, b| {
            Box::new(merge(take_acc::<A>(a), take_acc::<A>(b)))
        }));
        reg
    }

    /// Schedules the sync to run in the background at least once per
    /// `period` while an engine run is active.
    pub fn periodic(mut self, period: Duration) -> Self {
        self.period = Some(period);
        self
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn period(&self) -> Option<Duration> {
        self.period
    }

    pub fn has_merge(&self) -> bool {
        self.merge.is_some()
    }

    pub(crate) fn fresh_acc(&self) -> Acc {
        (self.initial)()
    }

    pub(crate) fn fold_scope(&self, scope: &mut ScopeView<'_, V, E>, acc: Acc) -> Acc {
        (self.fold)(scope, acc)
    }

    pub(crate) fn merge_accs(&self, a: Acc, b: Acc) -> Acc {
        (self.merge.as_ref().expect("merge not provided"))(a, b)
    }

    pub(crate) fn finalize(&self, prev: Option<&SdtValue>, acc: Acc) -> SdtValue {
        (self.apply)(prev, acc)
    }
}

/// Global key -> value map with sync registrations attached to keys.
pub struct SharedDataTable<V, E> {
    entries: Arc<Entries>,
    registrations: RwLock<Vec<Arc<SyncRegistration<V, E>>>>,
}

impl<V, E> Default for SharedDataTable<V, E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V, E> SharedDataTable<V, E> {
    pub fn new() -> Self {
        SharedDataTable {
            entries: Arc::new(Entries::default()),
            registrations: RwLock::new(Vec::new()),
        }
    }

    pub fn get(&self, key: &str) -> Result<SdtValue, SdtError> {
        self.entries
            .get(key)
            .ok_or_else(|| SdtError::MissingKey(key.to_owned()))
    }

    pub fn get_as<T: Any + Clone>(&self, key: &str) -> Result<T, SdtError> {
        self.reader().get_as(key)
    }

    /// Replaces the value under `key` atomically.
    pub fn set<T: Any + Send + Sync>(&self, key: &str, value: T) {
        self.entries.set(key, Arc::new(value));
    }

    pub fn set_value(&self, key: &str, value: SdtValue) {
        self.entries.set(key, value);
    }

    pub fn reader(&self) -> SdtReader {
        SdtReader {
            entries: Arc::clone(&self.entries),
        }
    }

    /// Attaches a sync registration. The key is immediately initialized to
    /// `apply(current, initial)`, so reads racing the first sync see a
    /// complete value.
    pub fn register_sync(&self, reg: SyncRegistration<V, E>) -> Result<(), SdtError> {
        let mut regs = self.registrations.write();
        if regs.iter().any(|r| r.key == reg.key) {
            return Err(SdtError::DuplicateRegistration(reg.key.clone()));
        }
        let prev = self.entries.get(&reg.key);
        let value = reg.finalize(prev.as_ref(), reg.fresh_acc());
        self.entries.set(&reg.key, value);
        regs.push(Arc::new(reg));
        Ok(())
    }

    pub fn registration(&self, key: &str) -> Option<Arc<SyncRegistration<V, E>>> {
        self.registrations
            .read()
            .iter()
            .find(|r| r.key == key)
            .cloned()
    }

    pub fn registrations(&self) -> Vec<Arc<SyncRegistration<V, E>>> {
        self.registrations.read().clone()
    }

    /// Writes a freshly applied sync result for `key`.
    pub(crate) fn store_sync_result(&self, key: &str, reg: &SyncRegistration<V, E>, acc: Acc) {
        let prev = self.entries.get(key);
        let value = reg.finalize(prev.as_ref(), acc);
        self.entries.set(key, value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, Ordering};

    type Table = SharedDataTable<u32, ()>;

    #[test]
    fn set_then_get() {
        let t = Table::new();
        t.set("k", 5.0f64);
        assert_eq!(t.get_as::<f64>("k").unwrap(), 5.0);
    }

    #[test]
    fn missing_key_errors() {
        let t = Table::new();
        assert_eq!(
            t.get("nope").unwrap_err(),
            SdtError::MissingKey("nope".into())
        );
    }

    #[test]
    fn type_mismatch_detected() {
        let t = Table::new();
        t.set("k", 1u32);
        assert_eq!(
            t.get_as::<f64>("k").unwrap_err(),
            SdtError::TypeMismatch("k".into())
        );
    }

    #[test]
    fn registration_initializes_key() {
        let t = Table::new();
        let reg = SyncRegistration::new(
            "sum",
            0.0f64,
            |scope, acc: f64| acc + f64::from(*scope.center_data()),
            |_prev: Option<&f64>, acc| acc,
        );
        t.register_sync(reg).unwrap();
        assert_eq!(t.get_as::<f64>("sum").unwrap(), 0.0);
    }

    #[test]
    fn duplicate_registration_rejected() {
        let t = Table::new();
        let mk = || {
            SyncRegistration::new(
                "k",
                0u64,
                |_scope, acc: u64| acc,
                |_prev: Option<&u64>, acc| acc,
            )
        };
        t.register_sync(mk()).unwrap();
        assert_eq!(
            t.register_sync(mk()).unwrap_err(),
            SdtError::DuplicateRegistration("k".into())
        );
    }

    /// A reader hammering a key during writes sees only complete values.
    #[test]
    fn no_torn_reads() {
        let t = Table::new();
        t.set("vec", vec![0u64; 64]);
        let reader = t.reader();
        let stop = AtomicBool::new(false);
        std::thread::scope(|s| {
            s.spawn(|| {
                for i in 1..2000u64 {
                    t.set("vec", vec![i; 64]);
                }
                stop.store(true, Ordering::Release);
            });
            s.spawn(|| {
                while !stop.load(Ordering::Acquire) {
                    let v: Vec<u64> = reader.get_as("vec").unwrap();
                    assert!(v.windows(2).all(|w| w[0] == w[1]), "torn value observed");
                }
            });
        });
    }
}
