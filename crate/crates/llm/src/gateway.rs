//! The three LLM roles: planning, per-step SQL and summarization.

use thiserror::Error;

use spage_core::engine::{ErrorClass, ExecError};
use spage_core::plan::{Plan, Step};
use spage_core::sql::StepSqlSource;
use spage_core::table::{Schema, Table};
use spage_core::task::SummarizationTask;

use crate::backend::{Backend, CompletionRequest, LlmError, Role};
use crate::config::LlmConfig;
use crate::output::{extract_sql, parse_planner_output, PlannerOutputError};
use crate::prompt::{
    build_planner_prompt, build_step_sql_prompt, build_summary_prompt, Demo, SqlDemo, PLAN_SCHEMA,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanningError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Output(#[from] PlannerOutputError),
}

pub fn request_plan(
    task: &SummarizationTask,
    config: &LlmConfig,
    demos: &[Demo],
    backend: &dyn Backend,
) -> Result<Plan, PlanningError> {
    let mut request = CompletionRequest::new(
        Role::Planner,
        build_planner_prompt(task, config, demos),
        config,
    )?;
    request.json_schema = Some(serde_json::from_str(PLAN_SCHEMA).expect("plan schema asset"));
    Ok(parse_planner_output(&backend.complete(&request)?)?)
}

pub fn request_summary(
    task: &SummarizationTask,
    terminal: &Table,
    config: &LlmConfig,
    backend: &dyn Backend,
) -> Result<String, LlmError> {
    let request = CompletionRequest::new(
        Role::Summary,
        build_summary_prompt(&task.query, terminal),
        config,
    )?;
    Ok(backend.complete(&request)?.trim().to_string())
}

/// SQL for one step; `schemas` are the step's input schemas in source order.
pub fn request_step_sql(
    step: &Step,
    schemas: &[&Schema],
    config: &LlmConfig,
    demos: &[SqlDemo],
    backend: &dyn Backend,
) -> Result<String, LlmError> {
    let request = CompletionRequest::new(
        Role::StepSql,
        build_step_sql_prompt(step, schemas, config, demos),
        config,
    )?;
    Ok(extract_sql(&backend.complete(&request)?))
}

/// Step SQL generated by a model, for the SQL execution harness.
pub struct LlmStepSql<'a> {
    pub backend: &'a dyn Backend,
    pub config: &'a LlmConfig,
    pub demos: &'a [SqlDemo],
}

impl StepSqlSource for LlmStepSql<'_> {
    fn step_sql(&self, step: &Step, schemas: &[&Schema]) -> Result<String, ExecError> {
        request_step_sql(step, schemas, self.config, self.demos, self.backend)
            .map_err(|e| ExecError::new(ErrorClass::RuntimeError, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::MockBackend;
    use crate::prompt::builtin_demos;

    #[test]
    fn requests_carry_the_configured_decoding_parameters() {
        let backend = MockBackend::default().recording();
        let config = LlmConfig {
            temperature: 0.3,
            top_p: 0.5,
            max_output_tokens: 77,
            model_name: "m".into(),
            ..LlmConfig::default()
        };
        let demo = &builtin_demos()[0];
        request_plan(&demo.task, &config, &[], &backend).unwrap();
        let table = demo.task.catalog.tables().next().unwrap().clone();
        request_summary(&demo.task, &table, &config, &backend).unwrap();
        let reqs = backend.requests();
        assert_eq!(reqs.len(), 2);
        for r in reqs {
            assert_eq!(
                (r.temperature, r.top_p, r.max_output_tokens),
                (0.3, 0.5, 77)
            );
            assert_eq!(r.model, "m");
        }
    }

    #[test]
    fn oversized_prompts_are_refused() {
        let config = LlmConfig {
            max_prompt_tokens: 10,
            ..LlmConfig::default()
        };
        let demo = &builtin_demos()[0];
        let err = request_plan(&demo.task, &config, &[], &MockBackend::default()).unwrap_err();
        assert!(matches!(
            err,
            PlanningError::Llm(LlmError::BudgetExceeded { limit: 10, .. })
        ));
    }
}
