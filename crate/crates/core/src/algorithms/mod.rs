//! Case-study algorithms built on the engine: residual belief propagation
//! with parameter learning, chromatic Gibbs sampling over a greedy
//! coloring, CoEM label propagation, the shooting algorithm for the Lasso,
//! and Gaussian BP inside an interior-point outer loop.

pub mod bp;
pub mod coem;
pub mod coloring;
pub mod denoise;
pub mod gabp;
pub mod gibbs;
pub mod interior_point;
pub mod lasso;
pub mod param_learn;
