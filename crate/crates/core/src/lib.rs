//! Resource arbitration for network slicing.
//!
//! Verticals hold resource budgets; each vertical service instance (VSI)
//! brings a VNF forwarding graph and a latency objective. The solver turns
//! those into a deployment flavour (minimum and maximum CPU and bandwidth),
//! the engine decides which services run and in which slice, and the
//! simulated orchestrator places flavours on a finite pool.
//!
//! The math in [`model`] and [`solver`] is generic over `f32`/`f64`. The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! engine and orchestrator use.

pub mod engine;
pub mod model;
pub mod orchestrator;
pub mod scalar;
pub mod solver;
pub mod units;

pub use scalar::Scalar;
pub use solver::{AllocationError, AllocationCase, InfeasibleReason, Tolerance};

pub type Resources = model::Resources<f64>;
pub type ResourceBudget = model::ResourceBudget<f64>;
pub type VnfSpec = model::VnfSpec<f64>;
pub type VirtualLinkSpec = model::VirtualLinkSpec<f64>;
pub type Vnffg = model::Vnffg<f64>;
pub type Slo = model::Slo<f64>;
pub type DeploymentFlavour = model::DeploymentFlavour<f64>;
pub type VsiRecord = model::VsiRecord<f64>;
pub type NsiRecord = model::NsiRecord<f64>;
pub type SharedVnfState = model::SharedVnfState<f64>;
pub type AllocationResult = solver::AllocationResult<f64>;

pub use model::{
    ElementId, GraphViolation, LinkId, NsiId, PriorityClass, VerticalId, VnfId, VsiId, VsiState,
};
