//! Generators and reference oracles shared by the workspace's tests.

pub mod dag;
pub mod fixtures;
pub mod gen;
pub mod oracle;

pub use gen::{
    random_catalog, random_plan, random_step, random_table, seeded, single_step_case,
    table_with_schema, Input, PlanShape, TestRng,
};
