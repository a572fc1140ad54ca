//! Prompt assembly for the planner, step-SQL and summary roles.
//!
//! The prompt wording is our own reconstruction; the templates are versioned
//! text assets so changes show up as golden-file diffs.

use std::fmt::Write;
use std::num::NonZeroUsize;

use spage_core::plan::{
    parse_plan, serialize_plan, serialize_step, Operation, Plan, SourceRef, Step,
};
use spage_core::sql::{emit_step_sql_with, Dialect};
use spage_core::table::{linearize, parse_json_rows, Catalog, Schema, Table};
use spage_core::task::SummarizationTask;
use spage_core::validate::validate_plan;

use crate::config::LlmConfig;

pub const PROMPT_VERSION: &str = "v1";

const PLANNER: &str = include_str!("../assets/planner_v1.txt");
const PLANNER_DEMO: &str = include_str!("../assets/planner_demo_v1.txt");
const SUMMARY: &str = include_str!("../assets/summary_v1.txt");
const STEP_SQL: &str = include_str!("../assets/step_sql_v1.txt");
const STEP_SQL_DEMO: &str = include_str!("../assets/step_sql_demo_v1.txt");
const DEMOS: &str = include_str!("../assets/demos_v1.json");
pub const PLAN_SCHEMA: &str = include_str!("../assets/plan_schema_v1.json");

/// Marks the section of a planner prompt that holds the task itself.
pub const TASK_MARKER: &str = "### Task\n";
/// Marks the section of a step-SQL prompt that holds the step to translate.
pub const STEP_MARKER: &str = "### Step\n";

/// A worked planning example: a task and its plan.
#[derive(Debug, Clone)]
pub struct Demo {
    pub task: SummarizationTask,
    pub plan: Plan,
}

/// A worked step-to-SQL example.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlDemo {
    pub relations: String,
    pub step: Step,
    pub sql: String,
}

/// Fills `{{name}}` slots in one pass, so substituted text is never rescanned.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").expect("template slot is closed");
        let key = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("template slot `{key}` has no value"))
            .1;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

fn linearize_catalog(catalog: &Catalog, k_rows: NonZeroUsize) -> String {
    catalog.tables().map(|t| linearize(t, k_rows)).collect()
}

fn operation_table() -> String {
    let ops = [
        Operation::Scan,
        Operation::Aggregate,
        Operation::Filter,
        Operation::Sort,
        Operation::TopSort,
        Operation::Join,
        Operation::Except,
        Operation::Intersect,
        Operation::Union,
    ];
    let mut out = String::from("| Operation | Definition |\n|---|---|\n");
    for op in ops {
        let _ = writeln!(out, "| {} | {} |", op.name(), op.description());
    }
    out.pop();
    out
}

/// Instruction block, the first `config.demo_count` demos, the task's tables
/// truncated to `config.k_rows` rows, and the query.
pub fn build_planner_prompt(
    task: &SummarizationTask,
    config: &LlmConfig,
    demos: &[Demo],
) -> String {
    let mut demo_text = String::new();
    for (i, demo) in demos.iter().take(config.demo_count).enumerate() {
        let n = (i + 1).to_string();
        demo_text.push_str(&render(
            PLANNER_DEMO,
            &[
                ("n", &n),
                (
                    "tables",
                    &linearize_catalog(&demo.task.catalog, config.k_rows),
                ),
                ("query", &demo.task.query),
                ("plan", &serialize_plan(&demo.plan)),
            ],
        ));
    }
    render(
        PLANNER,
        &[
            ("operations", &operation_table()),
            ("demos", &demo_text),
            ("tables", &linearize_catalog(&task.catalog, config.k_rows)),
            ("query", &task.query),
        ],
    )
}

/// The query and the complete terminal table.
pub fn build_summary_prompt(query: &str, terminal: &Table) -> String {
    let all_rows = NonZeroUsize::new(terminal.row_count().max(1)).unwrap();
    render(
        SUMMARY,
        &[("query", query), ("table", &linearize(terminal, all_rows))],
    )
}

/// `relation(col TYPE, ...)`, one line per source of `step`, in source order.
pub fn relation_lines(step: &Step, schemas: &[&Schema]) -> String {
    let mut out = String::new();
    for (src, schema) in step.sources.iter().zip(schemas) {
        let name = match src {
            SourceRef::Step(id) => format!("step_{id}"),
            SourceRef::Table(name) => name.clone(),
        };
        let cols: Vec<String> = schema
            .columns()
            .iter()
            .map(|c| format!("{} {}", c.name, c.ty.name().to_uppercase()))
            .collect();
        let _ = writeln!(out, "{name}({})", cols.join(", "));
    }
    out
}

pub fn build_step_sql_prompt(
    step: &Step,
    schemas: &[&Schema],
    config: &LlmConfig,
    demos: &[SqlDemo],
) -> String {
    let mut demo_text = String::new();
    for (i, demo) in demos.iter().take(config.demo_count).enumerate() {
        let n = (i + 1).to_string();
        demo_text.push_str(&render(
            STEP_SQL_DEMO,
            &[
                ("n", &n),
                ("relations", &demo.relations),
                ("step", &serialize_step(&demo.step)),
                ("sql", &demo.sql),
            ],
        ));
    }
    render(
        STEP_SQL,
        &[
            ("demos", &demo_text),
            ("relations", &relation_lines(step, schemas)),
            ("step", &serialize_step(step)),
        ],
    )
}

/// The bundled planning demos: the pet-owner join, the project durations and
/// the London employees.
pub fn builtin_demos() -> Vec<Demo> {
    let docs: Vec<serde_json::Value> = serde_json::from_str(DEMOS).expect("demo asset is JSON");
    docs.into_iter()
        .enumerate()
        .map(|(i, doc)| {
            let tables = doc["tables"]
                .as_array()
                .expect("demo tables")
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    let name = t
                        .as_object_mut()
                        .and_then(|o| o.remove("name"))
                        .and_then(|n| n.as_str().map(str::to_string))
                        .expect("demo table name");
                    parse_json_rows(&t.to_string(), &name, &Default::default())
                        .expect("demo table parses")
                });
            let catalog = Catalog::from_tables(tables).expect("demo catalog");
            let query = doc["query"].as_str().expect("demo query");
            let plan = parse_plan(&doc["plan"].to_string()).expect("demo plan parses");
            Demo {
                task: SummarizationTask::new(format!("demo{}", i + 1), query, catalog, None)
                    .expect("demo task"),
                plan,
            }
        })
        .collect()
}

/// Every step of the bundled demo plans with the SQL the emitter writes for it.
pub fn builtin_sql_demos() -> Vec<SqlDemo> {
    let mut out = Vec::new();
    for demo in builtin_demos() {
        let report = validate_plan(&demo.plan, &demo.task.catalog);
        for step in demo.plan.steps() {
            let schemas: Vec<&Schema> = step
                .sources
                .iter()
                .map(|s| match s {
                    SourceRef::Table(n) => demo.task.catalog.get(n).expect("demo table").schema(),
                    SourceRef::Step(id) => &report.inferred_schemas[id],
                })
                .collect();
            let sql = emit_step_sql_with(step, Dialect::SqliteCompatible, Some(&schemas))
                .expect("demo step emits")
                .sql;
            out.push(SqlDemo {
                relations: relation_lines(step, &schemas),
                step: step.clone(),
                sql,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_slots_once() {
        assert_eq!(
            render("a {{x}} b {{y}}", &[("x", "{{y}}"), ("y", "2")]),
            "a {{y}} b 2"
        );
    }

    #[test]
    fn builtin_demos_are_valid() {
        let demos = builtin_demos();
        assert_eq!(demos.len(), 3);
        for d in &demos {
            assert!(validate_plan(&d.plan, &d.task.catalog).is_executable());
        }
        assert_eq!(builtin_sql_demos().len(), 9);
    }

    #[test]
    fn relation_lines_follow_source_order() {
        let demos = builtin_sql_demos();
        assert_eq!(demos[0].relations, "Has_Pet(ID INTEGER, Has_Pet TEXT)\n");
        assert_eq!(
            demos[2].relations,
            "step_1(ID INTEGER)\nstep_2(ID INTEGER, Age INTEGER)\n"
        );
    }
}
