//! Typed tables, the step-plan language, and its static and dynamic semantics.

pub mod bind;
pub mod engine;
pub mod graph;
pub mod metrics;
pub mod plan;
pub mod sql;
pub mod table;
pub mod task;
pub mod validate;
