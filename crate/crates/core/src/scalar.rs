//! Scalar abstraction for the numeric algorithm layer.
//!
//! All algorithm math is generic over [`Real`] so the same code runs in
//! `f32` or `f64`. The engine plumbing (priorities, wall clocks, stats)
//! stays in concrete `f64`. Concrete graph aliases for the common `f64`
//! instantiations live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable in algorithm data blocks.
///
/// The associated [`Real::Atomic`] type is the word-sized atomic cell used
/// for fields that may be written through shared references under the
/// vertex consistency model (e.g. cached residuals).
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    type Atomic: AtomicReal<Self>;
}

impl Real for f32 {
    type Atomic = AtomicF32;
}

impl Real for f64 {
    type Atomic = AtomicF64;
}

/// Shorthand for converting an `f64` literal into a generic scalar.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Word-sized atomic cell over a floating-point value.
///
/// Loads and stores are individually atomic; read-modify-write goes through
/// a compare-exchange loop. This gives per-field atomicity (never a torn
/// value) without any ordering guarantee between fields.
pub trait AtomicReal<F>: Send + Sync + Debug {
    fn new(value: F) -> Self;
    fn load(&self) -> F;
    fn store(&self, value: F);
    /// Atomically adds `delta` and returns the previous value.
    fn fetch_add(&self, delta: F) -> F;
}

macro_rules! atomic_real {
    ($name:ident, $float:ty, $atomic:ty, $bits:ident) => {
        #[derive(Debug)]
        pub struct $name($atomic);

        impl AtomicReal<$float> for $name {
            fn new(value: $float) -> Self {
                Self(<$atomic>::new(value.to_bits()))
            }

            fn load(&self) -> $float {
                <$float>::from_bits(self.0.load(Ordering::SeqCst))
            }

            fn store(&self, value: $float) {
                self.0.store(value.to_bits(), Ordering::SeqCst);
            }

            fn fetch_add(&self, delta: $float) -> $float {
                let mut current = self.0.load(Ordering::SeqCst);
                loop {
                    let next = (<$float>::from_bits(current) + delta).to_bits();
                    match self.0.compare_exchange_weak(
                        current,
                        next,
                        Ordering::SeqCst,
                        Ordering::SeqCst,
                    ) {
                        Ok(prev) => return <$float>::from_bits(prev),
                        Err(observed) => current = observed,
                    }
                }
            }
        }

        impl Clone for $name {
            fn clone(&self) -> Self {
                Self::new(self.load())
            }
        }
    };
}

atomic_real!(AtomicF64, f64, AtomicU64, u64);
atomic_real!(AtomicF32, f32, AtomicU32, u32);

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn fetch_add_is_exact_under_contention() {
        let cell = Arc::new(AtomicF64::new(0.0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let cell = Arc::clone(&cell);
                s.spawn(move || {
                    for _ in 0..1000 {
                        cell.fetch_add(1.0);
                    }
                });
            }
        });
        assert_eq!(cell.load(), 8000.0);
    }

    #[test]
    fn generic_literal_conversion() {
        let x: f32 = real(0.5);
        assert_eq!(x, 0.5f32);
        let y: f64 = real(0.5);
        assert_eq!(y, 0.5f64);
    }
}
