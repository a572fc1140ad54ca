//! Worked examples over the bundled data: the pet plan, both project plans and
//! the employee join, checked end to end through every backend.

use std::num::NonZeroUsize;

use spage_core::engine::{esr, execute_plan, ExecOptions, Parallelism};
use spage_core::graph::{build_graph, execution_cycles, CycleMode};
use spage_core::metrics::{evaluate_batch, MetricError, TaskOutput};
use spage_core::plan::{parse_plan, serialize_plan};
use spage_core::sql::{emit_plan_sql, execute_plan_sql, Dialect, Emitted, SqlDatabase};
use spage_core::table::{linearize, parse_date, Catalog, ColumnType, Table, Value};
use spage_core::task::SummarizationTask;
use spage_core::validate::{validate_plan, DiagnosticCode};
use spage_testkit::fixtures;
use spage_testkit::oracle::same_multiset;

fn text(s: &str) -> Value {
    Value::Text(s.into())
}

fn schema_of(t: &Table) -> Vec<(String, ColumnType)> {
    t.schema()
        .columns()
        .iter()
        .map(|c| (c.name.clone(), c.ty))
        .collect()
}

#[test]
fn pet_tables_linearize_as_in_the_prompt_format() {
    let catalog = fixtures::catalog("toy");
    let has_pet = catalog.get("Has_Pet").unwrap();
    assert_eq!(
        linearize(has_pet, NonZeroUsize::new(2).unwrap()),
        "table name: Has_Pet\ncol: ID | Has_Pet\nrow 1: 1 | Yes\nrow 2: 2 | No\n"
    );
}

#[test]
fn pet_plan_runs_in_two_cycles() {
    let plan = fixtures::plan("pets_plan.json");
    assert_eq!(plan.len(), 3);
    assert_eq!(plan.terminal_id(), 3);
    let graph = build_graph(&plan);
    assert_eq!(graph.wavefronts, vec![vec![1, 2], vec![3]]);
    assert_eq!(execution_cycles(&graph, CycleMode::Sequential), 3);
    assert_eq!(execution_cycles(&graph, CycleMode::Graph), 2);

    let catalog = fixtures::catalog("toy");
    let graph_run = execute_plan(&plan, &catalog, Parallelism::Wavefront);
    let seq_run = execute_plan(&plan, &catalog, Parallelism::Sequential);
    assert_eq!((graph_run.cycles_used, seq_run.cycles_used), (2, 3));
    assert_eq!(graph_run.esr, 1.0);
    let terminal = graph_run.terminal_table.unwrap();
    assert_eq!(
        schema_of(&terminal),
        [("Age".to_string(), ColumnType::Integer)]
    );
    assert_eq!(terminal.rows(), [vec![Value::Integer(19)]]);
    assert_eq!(seq_run.terminal_table.unwrap().rows(), terminal.rows());
}

#[test]
fn pet_plan_round_trips_through_text() {
    let plan = fixtures::plan("pets_plan.json");
    assert_eq!(parse_plan(&serialize_plan(&plan)).unwrap(), plan);
}

#[test]
fn nl_style_project_plan_names_a_missing_column() {
    let plan = fixtures::plan("projects_nl_plan.json");
    let report = validate_plan(&plan, &fixtures::catalog("projects"));
    assert!(!report.is_executable());
    assert_eq!(report.error_codes(), [DiagnosticCode::UnknownColumn]);
    let d = report.errors().next().unwrap();
    assert_eq!(d.step_id, 1);
    assert!(d.message.contains("duration"), "{}", d.message);
}

#[test]
fn structured_project_plan_averages_durations() {
    let plan = fixtures::plan("projects_plan.json");
    let catalog = fixtures::catalog("projects");
    let report = validate_plan(&plan, &catalog);
    assert!(report.is_executable(), "{:?}", report.diagnostics);
    let step2: Vec<_> = report.inferred_schemas[&2]
        .columns()
        .iter()
        .map(|c| (c.name.as_str(), c.ty))
        .collect();
    assert_eq!(
        step2,
        [
            ("ProjectID", ColumnType::Integer),
            ("Duration", ColumnType::Integer)
        ]
    );

    let run = execute_plan(&plan, &catalog, Parallelism::Wavefront);
    let terminal = run.terminal_table.unwrap();
    assert_eq!(
        schema_of(&terminal),
        [("avg_d".to_string(), ColumnType::Real)]
    );
    // Durations are 10, 20 and 30 days.
    assert_eq!(terminal.rows(), [vec![Value::Real(20.0)]]);
    assert_eq!(
        report.inferred_schemas[&3],
        terminal.schema().clone(),
        "static and dynamic schemas agree"
    );
}

#[test]
fn structured_employee_plan_joins_on_department() {
    let plan = fixtures::plan("employees_plan.json");
    let catalog = fixtures::catalog("employees");
    let report = validate_plan(&plan, &catalog);
    assert!(report.is_executable(), "{:?}", report.diagnostics);

    let run = execute_plan(&plan, &catalog, Parallelism::Wavefront);
    assert_eq!(run.cycles_used, 2);
    let terminal = run.terminal_table.unwrap();
    assert_eq!(
        schema_of(&terminal),
        [
            ("EmpName".to_string(), ColumnType::Text),
            ("Location".to_string(), ColumnType::Text)
        ]
    );
    let expected = [
        vec![text("Alice"), text("London")],
        vec![text("Dan"), text("London")],
        vec![text("Eve"), text("London")],
    ];
    assert!(
        same_multiset(terminal.rows(), &expected),
        "{:?}",
        terminal.rows()
    );
}

fn fixture_cases() -> Vec<(&'static str, &'static str)> {
    vec![
        ("pets_plan.json", "toy"),
        ("projects_plan.json", "projects"),
        ("employees_plan.json", "employees"),
    ]
}

#[test]
fn cte_query_matches_native_terminal_tables() {
    for (plan_name, dir) in fixture_cases() {
        let plan = fixtures::plan(plan_name);
        let catalog = fixtures::catalog(dir);
        let native = execute_plan(&plan, &catalog, Parallelism::Sequential)
            .terminal_table
            .unwrap();
        let sql = emit_plan_sql(&plan, Dialect::SqliteCompatible, Some(&catalog)).unwrap();
        let db = SqlDatabase::load(&catalog).unwrap();
        let via_sql = db.query(&sql, "terminal", native.schema()).unwrap();
        assert!(
            same_multiset(native.rows(), via_sql.rows()),
            "{plan_name}: {:?} vs {:?}",
            native.rows(),
            via_sql.rows()
        );
    }
}

#[test]
fn emitted_steps_execute_with_full_success() {
    let mut reports = Vec::new();
    for (plan_name, dir) in fixture_cases() {
        let plan = fixtures::plan(plan_name);
        let catalog = fixtures::catalog(dir);
        let report = execute_plan_sql(
            &plan,
            &catalog,
            &ExecOptions::default(),
            &Emitted(Dialect::SqliteCompatible),
        )
        .unwrap();
        let native = execute_plan(&plan, &catalog, Parallelism::Wavefront);
        for (id, r) in &report.results {
            let n = native.results[id].table().unwrap();
            assert!(
                same_multiset(r.table().unwrap().rows(), n.rows()),
                "{plan_name} step {id}"
            );
        }
        reports.push(report);
    }
    assert_eq!(esr(&reports).unwrap(), 1.0);
}

#[test]
fn date_cells_load_as_dates() {
    let catalog = fixtures::catalog("projects");
    let projects = catalog.get("Projects").unwrap();
    assert_eq!(
        projects.rows()[0][2],
        Value::Date(parse_date("2024-01-01").unwrap())
    );
    assert_eq!(projects.schema().columns()[4].ty, ColumnType::Real);
}

fn task(id: &str, catalog: &Catalog, reference: &str) -> SummarizationTask {
    SummarizationTask::new(
        id,
        "What happened?",
        catalog.clone(),
        Some(reference.into()),
    )
    .unwrap()
}

fn pet_output(summary: &str) -> TaskOutput {
    let plan = fixtures::plan("pets_plan.json");
    TaskOutput {
        summary: summary.into(),
        report: execute_plan(&plan, &fixtures::catalog("toy"), Parallelism::Wavefront),
        graph: build_graph(&plan),
    }
}

const PET_REFERENCE: &str = "Only one student has a pet, and that student is 19 years old.";

#[test]
fn perfect_summary_scores_maximal() {
    let catalog = fixtures::catalog("toy");
    let result = evaluate_batch(
        &[task("pets", &catalog, PET_REFERENCE)],
        &[pet_output(PET_REFERENCE)],
    )
    .unwrap();
    assert_eq!(result.bleu, 100.0);
    assert_eq!(result.rouge_l_f1, 1.0);
    assert_eq!(result.esr, 1.0);
    assert_eq!((result.avg_cycles_seq, result.avg_cycles_graph), (3.0, 2.0));
}

#[test]
fn mixed_corpus_matches_reference_scorers() {
    let catalog = fixtures::catalog("toy");
    let tasks = [
        task("pets", &catalog, PET_REFERENCE),
        task("abc", &catalog, "a x c"),
    ];
    let outputs = [
        pet_output("Only one student with a pet is 19."),
        pet_output("a b c"),
    ];
    let result = evaluate_batch(&tasks, &outputs).unwrap();
    // sacrebleu 2.6.0 corpus_bleu and rouge_score 0.1.2 rougeL, run offline.
    assert!(
        (result.bleu - 14.723282228934908).abs() < 1e-9,
        "{}",
        result.bleu
    );
    assert!((result.rouge_l_f1 - 0.6666666666666667).abs() < 1e-12);
    assert_eq!(result.esr, 1.0);
}

#[test]
fn batch_errors() {
    let catalog = fixtures::catalog("toy");
    assert_eq!(
        evaluate_batch(&[], &[]).unwrap_err(),
        MetricError::EmptyInput
    );
    assert_eq!(
        evaluate_batch(&[task("pets", &catalog, PET_REFERENCE)], &[]).unwrap_err(),
        MetricError::LengthMismatch {
            tasks: 1,
            outputs: 0
        }
    );
    let unreferenced = SummarizationTask::new("bare", "q", catalog, None).unwrap();
    assert_eq!(
        evaluate_batch(&[unreferenced], &[pet_output("x")]).unwrap_err(),
        MetricError::MissingReference("bare".into())
    );
}
