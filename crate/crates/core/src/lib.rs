//! Deterministic scheduler and simulator for pipeline-parallel training
//! schedules.
//!
//! The crate models a pipeline as stages executing forward (F),
//! backward-input (B) and backward-weight (W) operators per microbatch,
//! connected by links with configurable communication latency. On top of
//! that it provides:
//!
//! - warm-up forward planning, memory-bounded and delay-aware ([`planner`]);
//! - an analytical delay model classifying injected latencies as absorbed
//!   or cascading ([`analysis`]);
//! - discrete-time schedule generation with a B > F > W selection policy
//!   ([`scheduler`]);
//! - exact event-driven replay of a fixed order under injected latencies,
//!   with decoupled or bounded-queue transfer semantics ([`executor`]);
//! - an exhaustive optimal-makespan oracle for tiny instances ([`oracle`]);
//! - latency sweeps ([`sweep`]) and multi-iteration straggler-trace
//!   campaigns ([`campaign`]).
//!
//! Everything is integer-microsecond arithmetic and deterministic: identical
//! inputs produce identical outputs, byte for byte once serialized.

pub mod analysis;
pub mod campaign;
pub mod error;
pub mod executor;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod scheduler;
pub mod sweep;
pub mod time;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
