//! Bilevel demand-response engine for electric-vehicle charging.
//!
//! The lower layer simulates heterogeneous EV users responding to an hourly
//! retail price schedule, either through a deterministic rule pipeline or an
//! LLM-backed policy with record/replay fixtures. The upper layer optimizes
//! that schedule for aggregator profit with particle swarm optimization
//! inside hard price bounds, checked against an exhaustive grid-search
//! oracle at desk scale.

pub mod agents;
pub mod domain;
pub mod gateway;
pub mod optimizer;
pub mod profilegen;
pub mod simulation;

#[cfg(feature = "test-support")]
pub mod test_support;
