//! SQL emission for steps and plans, and execution on embedded SQLite.

mod emit;
mod sqlite;

pub use emit::{
    collides_with_step_relation, emit_plan_sql, emit_plan_steps, emit_step_sql, emit_step_sql_with,
    quote_ident, relation_name, Dialect, EmitError, EmittedSql,
};
pub use sqlite::{execute_plan_sql, Emitted, SqlDatabase, SqlError, StepSqlSource};
