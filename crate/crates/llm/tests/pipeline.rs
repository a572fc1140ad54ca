//! End-to-end runs over the offline backends.

use std::collections::BTreeSet;

use spage_core::engine::{esr, execute_plan, ExecOptions, Parallelism, StepStatus};
use spage_core::plan::{Plan, SourceRef};
use spage_core::sql::{execute_plan_sql, Dialect};
use spage_core::table::{Catalog, Schema};
use spage_core::task::SummarizationTask;
use spage_core::validate::validate_plan;
use spage_llm::pipeline::NO_RESULT_SUMMARY;
use spage_llm::prompt::build_step_sql_prompt;
use spage_llm::{
    builtin_demos, builtin_sql_demos, run_plan, run_task, Backend, CompletionRequest, Executor,
    LlmConfig, LlmError, LlmStepSql, MockBackend, MockPlanner, MockSqlExecutor, PipelineError,
    PipelineOptions, PlannerOutputError, PlanningError,
};
use spage_testkit::{
    dag, fixtures, oracle, random_catalog, random_plan, seeded, single_step_case, PlanShape,
};

fn options(executor: Executor) -> PipelineOptions {
    PipelineOptions {
        config: LlmConfig::default(),
        exec: ExecOptions::default(),
        executor,
        demos: builtin_demos(),
        sql_demos: builtin_sql_demos(),
    }
}

const PET_QUERY: &str = "What are the ages of students who have a pet?";

fn pet_task() -> SummarizationTask {
    SummarizationTask::new("pets", PET_QUERY, fixtures::catalog("toy"), None).unwrap()
}

#[test]
fn pet_task_runs_offline_with_every_executor() {
    let planner = MockPlanner::new().with_plan(PET_QUERY, fixtures::plan("pets_plan.json"));
    let backend = MockBackend::new(planner, MockSqlExecutor::faithful());
    for executor in [
        Executor::Native,
        Executor::EmittedSql(Dialect::SqliteCompatible),
        Executor::LlmSql,
    ] {
        let out = run_task(&pet_task(), &backend, &options(executor)).unwrap();
        assert!(out.validation.is_executable());
        assert_eq!(out.report.esr, 1.0);
        assert_eq!(out.report.cycles_used, 2);
        assert_eq!(
            out.summary,
            format!("For the query \"{PET_QUERY}\", the result has 1 row: Age 19.")
        );
    }
}

#[test]
fn unknown_queries_fall_back_to_a_scan_of_the_first_table() {
    let out = run_task(
        &pet_task(),
        &MockBackend::default(),
        &options(Executor::Native),
    )
    .unwrap();
    assert_eq!(out.plan.len(), 1);
    assert_eq!(out.report.esr, 1.0);
    assert!(out.summary.contains("2 rows"), "{}", out.summary);
}

struct Fixed(&'static str);

impl Backend for Fixed {
    fn complete(&self, _: &CompletionRequest) -> Result<String, LlmError> {
        Ok(self.0.to_string())
    }
}

#[test]
fn planner_replies_without_json_are_planning_errors() {
    let err = run_task(
        &pet_task(),
        &Fixed("I cannot help with that."),
        &options(Executor::Native),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        PipelineError::Planning(PlanningError::Output(PlannerOutputError::NoJsonFound))
    ));
}

#[test]
fn failed_terminal_steps_get_the_fixed_summary() {
    let plan = fixtures::plan("projects_nl_plan.json");
    let task = SummarizationTask::new(
        "p",
        "Average duration?",
        fixtures::catalog("projects"),
        None,
    )
    .unwrap();
    let out = run_plan(
        &task,
        plan,
        &MockBackend::default(),
        &options(Executor::Native),
    )
    .unwrap();
    assert!(!out.validation.is_executable());
    assert_eq!(out.report.esr, 0.0);
    assert_eq!(out.summary, NO_RESULT_SUMMARY);
}

fn golden_corpus() -> Vec<(Catalog, Plan)> {
    let mut corpus = vec![
        (fixtures::catalog("toy"), fixtures::plan("pets_plan.json")),
        (
            fixtures::catalog("projects"),
            fixtures::plan("projects_plan.json"),
        ),
        (
            fixtures::catalog("employees"),
            fixtures::plan("employees_plan.json"),
        ),
    ];
    let mut rng = seeded(11);
    for _ in 0..60 {
        let catalog = random_catalog(&mut rng, 3);
        let plan = random_plan(&mut rng, &catalog, &PlanShape::default());
        corpus.push((catalog, plan));
    }
    corpus
}

#[test]
fn faithful_step_sql_executes_every_golden_step() {
    let backend = MockBackend::default();
    let config = LlmConfig::default();
    let demos = builtin_sql_demos();
    let source = LlmStepSql {
        backend: &backend,
        config: &config,
        demos: &demos,
    };
    let mut reports = Vec::new();
    for (catalog, plan) in golden_corpus() {
        let report = execute_plan_sql(&plan, &catalog, &ExecOptions::default(), &source).unwrap();
        let native = execute_plan(&plan, &catalog, Parallelism::Wavefront);
        let got = report.terminal_table.as_ref().unwrap();
        let want = native.terminal_table.as_ref().unwrap();
        assert!(oracle::same_multiset(got.rows(), want.rows()), "{plan:?}");
        reports.push(report);
    }
    assert_eq!(esr(&reports).unwrap(), 1.0);
}

/// Steps whose SQL request the seeded mock corrupts, decided from the prompt
/// each step would be sent.
fn corrupted_steps(plan: &Plan, catalog: &Catalog, mock: &MockSqlExecutor) -> BTreeSet<u32> {
    let validation = validate_plan(plan, catalog);
    let config = LlmConfig::default();
    let demos = builtin_sql_demos();
    plan.steps()
        .iter()
        .filter(|step| {
            let schemas: Vec<&Schema> = step
                .sources
                .iter()
                .map(|s| match s {
                    SourceRef::Table(n) => catalog.get(n).unwrap().schema(),
                    SourceRef::Step(id) => &validation.inferred_schemas[id],
                })
                .collect();
            mock.corrupts(&build_step_sql_prompt(step, &schemas, &config, &demos))
        })
        .map(|s| s.id)
        .collect()
}

#[test]
fn corrupted_steps_and_their_dependents_are_exactly_the_failures() {
    let mock = MockSqlExecutor::corrupting(0.2, 5);
    let backend = MockBackend::new(MockPlanner::new(), mock.clone());
    let config = LlmConfig::default();
    let demos = builtin_sql_demos();
    let source = LlmStepSql {
        backend: &backend,
        config: &config,
        demos: &demos,
    };
    let mut rng = seeded(21);
    let mut seen_cascade = false;
    for _ in 0..80 {
        let catalog = random_catalog(&mut rng, 3);
        let plan = random_plan(
            &mut rng,
            &catalog,
            &PlanShape {
                steps: 3..=7,
                min_roots: 2,
            },
        );
        let corrupted = corrupted_steps(&plan, &catalog, &mock);
        let expected = dag::downstream_closure(&plan, corrupted.iter().copied());
        seen_cascade |= expected.len() > corrupted.len();
        let report = execute_plan_sql(&plan, &catalog, &ExecOptions::default(), &source).unwrap();
        let failed: BTreeSet<u32> = report
            .results
            .values()
            .filter(|r| !r.is_success())
            .map(|r| r.step_id)
            .collect();
        assert_eq!(failed, expected, "{plan:?}");
        // A corrupted step below another failure is never sent.
        let sent = corrupted.iter().filter(|id| {
            !plan
                .step(**id)
                .unwrap()
                .step_dependencies()
                .any(|d| expected.contains(&d))
        });
        for id in sent {
            let StepStatus::Failure { message, .. } = &report.results[id].status else {
                unreachable!()
            };
            assert!(message.contains("SELEC"), "{message}");
        }
    }
    assert!(seen_cascade);
}

#[test]
fn independent_steps_fail_at_the_corruption_rate() {
    let backend = MockBackend::new(MockPlanner::new(), MockSqlExecutor::corrupting(0.05, 2024));
    let config = LlmConfig::default();
    let demos = builtin_sql_demos();
    let source = LlmStepSql {
        backend: &backend,
        config: &config,
        demos: &demos,
    };
    let mut rng = seeded(2024);
    let reports: Vec<_> = (0..1000)
        .map(|_| {
            let (catalog, plan) = single_step_case(&mut rng);
            execute_plan_sql(&plan, &catalog, &ExecOptions::default(), &source).unwrap()
        })
        .collect();
    let rate = esr(&reports).unwrap();
    assert!((0.93..=0.97).contains(&rate), "{rate}");
}
