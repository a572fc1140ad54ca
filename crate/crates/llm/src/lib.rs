//! LLM roles for plan-based table summarization: prompt assembly, planner
//! output parsing, offline mock backends, an HTTP backend and the
//! plan-execute-summarize pipeline.

pub mod backend;
pub mod config;
pub mod gateway;
pub mod http;
pub mod mock;
pub mod output;
pub mod pipeline;
pub mod prompt;

pub use backend::{Backend, CompletionRequest, LlmError, Role};
pub use config::LlmConfig;
pub use gateway::{request_plan, request_step_sql, request_summary, LlmStepSql, PlanningError};
pub use mock::{MockBackend, MockPlanner, MockSqlExecutor};
pub use output::{parse_planner_output, PlannerOutputError};
pub use pipeline::{run_plan, run_task, Executor, PipelineError, PipelineOptions, PipelineOutput};
pub use prompt::{build_planner_prompt, builtin_demos, builtin_sql_demos, Demo, SqlDemo};
