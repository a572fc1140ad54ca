//! Plan, execute, summarize: the end-to-end flow for one task.

use thiserror::Error;

use spage_core::engine::{execute_plan_with, ExecOptions, ExecutionReport};
use spage_core::graph::{build_graph, PlanGraph};
use spage_core::metrics::TaskOutput;
use spage_core::plan::Plan;
use spage_core::sql::{execute_plan_sql, Dialect, Emitted, SqlError};
use spage_core::task::SummarizationTask;
use spage_core::validate::{validate_plan, ValidationReport};

use crate::backend::{Backend, LlmError};
use crate::config::LlmConfig;
use crate::gateway::{request_plan, request_summary, LlmStepSql, PlanningError};
use crate::prompt::{Demo, SqlDemo};

/// Summary recorded when the terminal step produced no table.
pub const NO_RESULT_SUMMARY: &str = "No summary: the plan did not produce a final table.";

/// How plan steps are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Native,
    EmittedSql(Dialect),
    /// Each step's SQL is requested from the backend.
    LlmSql,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub config: LlmConfig,
    pub exec: ExecOptions,
    pub executor: Executor,
    pub demos: Vec<Demo>,
    pub sql_demos: Vec<SqlDemo>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub plan: Plan,
    pub validation: ValidationReport,
    pub report: ExecutionReport,
    pub graph: PlanGraph,
    pub summary: String,
}

impl PipelineOutput {
    pub fn task_output(&self) -> TaskOutput {
        TaskOutput {
            summary: self.summary.clone(),
            report: self.report.clone(),
            graph: self.graph.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("planning failed: {0}")]
    Planning(#[from] PlanningError),
    #[error("summary request failed: {0}")]
    Summary(LlmError),
    #[error(transparent)]
    Sql(#[from] SqlError),
}

/// Asks the backend for a plan, then executes and summarizes it.
pub fn run_task(
    task: &SummarizationTask,
    backend: &dyn Backend,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let plan = request_plan(task, &options.config, &options.demos, backend)?;
    run_plan(task, plan, backend, options)
}

/// Executes a given plan and summarizes its terminal table. Validation errors
/// do not stop execution; they surface as failed steps in the report.
pub fn run_plan(
    task: &SummarizationTask,
    plan: Plan,
    backend: &dyn Backend,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let validation = validate_plan(&plan, &task.catalog);
    let report = match options.executor {
        Executor::Native => execute_plan_with(&plan, &task.catalog, &options.exec),
        Executor::EmittedSql(dialect) => {
            execute_plan_sql(&plan, &task.catalog, &options.exec, &Emitted(dialect))?
        }
        Executor::LlmSql => {
            let source = LlmStepSql {
                backend,
                config: &options.config,
                demos: &options.sql_demos,
            };
            execute_plan_sql(&plan, &task.catalog, &options.exec, &source)?
        }
    };
    let summary = match &report.terminal_table {
        Some(t) => {
            request_summary(task, t, &options.config, backend).map_err(PipelineError::Summary)?
        }
        None => NO_RESULT_SUMMARY.to_string(),
    };
    Ok(PipelineOutput {
        graph: build_graph(&plan),
        plan,
        validation,
        report,
        summary,
    })
}
