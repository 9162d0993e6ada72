//! A shared-memory graph-parallel execution engine.
//!
//! Computation is expressed as stateless update functions applied to the
//! scopes of vertices in a data graph, with global state in a shared data
//! table maintained by a fold/merge/apply sync mechanism. The engine
//! enforces one of three consistency models through an ordered locking
//! protocol and draws work from pluggable schedulers, including a
//! plan-compiling set scheduler.
//!
//! Numeric algorithm code is generic over the scalar type (see
//! [`scalar::Real`]); the aliases below fix the `f64` instantiations used
//! by the CLI and most tests.

pub mod algorithms;
pub mod consistency;
pub mod engine;
pub mod graph;
pub mod io;
pub mod scalar;
pub mod scheduling;

pub use consistency::{exclusion_set, ConsistencyModel, Entity, ExclusionSet, LockTable};
pub use engine::{
    Engine, EngineConfig, RunError, RunStats, TaskSink, TerminationReason, UpdateError, UpdateFn,
};
pub use graph::{
    DataGraph, EdgeId, GraphError, ScopeDescriptor, ScopeView, SdtReader, SharedDataTable,
    SyncRegistration, VertexId,
};
pub use scalar::{AtomicReal, Real};
pub use scheduling::{FunctionId, Scheduler, SchedulerKind, SchedulerSpec, Task};

/// `f64` data graphs of the bundled algorithms.
pub type BpGraph = DataGraph<
    algorithms::bp::BpVertexData<f64>,
    algorithms::bp::BpEdgeData<f64>,
>;
pub type GibbsGraph = DataGraph<
    algorithms::gibbs::GibbsVertexData<f64>,
    algorithms::gibbs::GibbsEdgeData<f64>,
>;
pub type CoemGraph = DataGraph<
    algorithms::coem::CoemVertexData<f64>,
    algorithms::coem::CoemEdgeData<f64>,
>;
pub type LassoGraph = DataGraph<
    algorithms::lasso::LassoVertex<f64>,
    algorithms::lasso::LassoEdge<f64>,
>;
pub type GabpGraph = DataGraph<
    algorithms::gabp::GabpVertexData<f64>,
    algorithms::gabp::GabpEdgeData<f64>,
>;
