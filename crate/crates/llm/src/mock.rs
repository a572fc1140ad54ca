//! Deterministic offline backends. They read the same prompts a live model
//! would, so the whole pipeline runs without a network.

use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use spage_core::plan::{parse_step, serialize_plan, Plan};
use spage_core::sql::{emit_step_sql_with, Dialect};
use spage_core::table::{Column, ColumnType, Schema};

use crate::backend::{Backend, CompletionRequest, LlmError, Role};
use crate::prompt::{STEP_MARKER, TASK_MARKER};

fn section_after<'a>(prompt: &'a str, marker: &str) -> &'a str {
    prompt
        .rfind(marker)
        .map_or(prompt, |i| &prompt[i + marker.len()..])
}

fn line_value<'a>(section: &'a str, prefix: &str) -> Option<&'a str> {
    section.lines().find_map(|l| l.strip_prefix(prefix))
}

/// Answers planner prompts with a known plan for the query, or else a plan
/// that scans every column of the first listed table.
#[derive(Debug, Clone, Default)]
pub struct MockPlanner {
    plans: HashMap<String, Plan>,
}

impl MockPlanner {
    pub fn new() -> Self {
        MockPlanner::default()
    }

    pub fn with_plan(mut self, query: impl Into<String>, plan: Plan) -> Self {
        self.plans.insert(query.into(), plan);
        self
    }

    pub fn respond(&self, prompt: &str) -> Result<String, LlmError> {
        let task = section_after(prompt, TASK_MARKER);
        let query = line_value(task, "Query: ").unwrap_or("");
        if let Some(plan) = self.plans.get(query) {
            return Ok(format!("```json\n{}\n```", serialize_plan(plan)));
        }
        let table = line_value(task, "table name: ")
            .ok_or_else(|| LlmError::Backend("mock planner: prompt lists no table".into()))?;
        let cols: Vec<String> = line_value(task, "col: ")
            .unwrap_or("")
            .split(" | ")
            .map(|c| format!("{c:?}"))
            .collect();
        Ok(format!(
            "{{\"steps\": [{{\"id\": 1, \"operation\": \"Scan\", \"source\": [{table:?}], \"condition\": null, \"output\": [{}]}}]}}",
            cols.join(", ")
        ))
    }
}

/// Template summaries naming the query and the result rows.
pub fn mock_summary(prompt: &str) -> String {
    let query = line_value(prompt, "Query: ").unwrap_or("").trim();
    let header: Vec<&str> = line_value(prompt, "col: ")
        .map(|h| h.split(" | ").collect())
        .unwrap_or_default();
    let rows: Vec<String> = prompt
        .lines()
        .filter(|l| l.starts_with("row "))
        .filter_map(|l| l.split_once(": ").map(|(_, cells)| cells))
        .map(|cells| {
            header
                .iter()
                .zip(cells.split(" | "))
                .map(|(h, v)| format!("{h} {v}"))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    match rows.len() {
        0 => format!("No matching records were found for the query \"{query}\"."),
        n => format!(
            "For the query \"{query}\", the result has {n} {}: {}.",
            if n == 1 { "row" } else { "rows" },
            rows.join("; ")
        ),
    }
}

/// Translates step prompts with the deterministic emitter, then breaks a
/// seeded fraction of the statements.
#[derive(Debug, Clone)]
pub struct MockSqlExecutor {
    pub dialect: Dialect,
    pub corruption_rate: f64,
    pub seed: u64,
}

impl MockSqlExecutor {
    pub fn faithful() -> Self {
        MockSqlExecutor {
            dialect: Dialect::SqliteCompatible,
            corruption_rate: 0.0,
            seed: 0,
        }
    }

    pub fn corrupting(rate: f64, seed: u64) -> Self {
        MockSqlExecutor {
            corruption_rate: rate,
            seed,
            ..MockSqlExecutor::faithful()
        }
    }

    /// Whether the answer to `prompt` is corrupted. Depends only on the seed
    /// and the prompt, so concurrent callers see the same decisions.
    pub fn corrupts(&self, prompt: &str) -> bool {
        if self.corruption_rate <= 0.0 {
            return false;
        }
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(prompt.as_bytes())
            .finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
        unit < self.corruption_rate
    }

    pub fn respond(&self, prompt: &str) -> Result<String, LlmError> {
        let section = section_after(prompt, STEP_MARKER);
        let fail = |m: String| LlmError::Backend(format!("mock SQL executor: {m}"));
        let step_text = line_value(section, "Step: ").ok_or_else(|| fail("no step line".into()))?;
        let step = parse_step(step_text).map_err(|e| fail(e.to_string()))?;
        let schemas = parse_relations(section).map_err(fail)?;
        let refs: Vec<&Schema> = schemas.iter().collect();
        let sql = emit_step_sql_with(&step, self.dialect, Some(&refs))
            .map_err(|e| fail(e.to_string()))?
            .sql;
        Ok(if self.corrupts(prompt) {
            sql.replacen("SELECT", "SELEC", 1)
        } else {
            sql
        })
    }
}

/// Schemas from the `relation(col TYPE, ...)` lines between `Relations:` and
/// `Step:`.
fn parse_relations(section: &str) -> Result<Vec<Schema>, String> {
    section
        .lines()
        .skip_while(|l| *l != "Relations:")
        .skip(1)
        .take_while(|l| !l.starts_with("Step: "))
        .map(|line| {
            let open = line
                .find('(')
                .ok_or_else(|| format!("bad relation line `{line}`"))?;
            let body = line[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("bad relation line `{line}`"))?;
            let columns = body
                .split(", ")
                .map(|c| {
                    let (name, ty) = c
                        .rsplit_once(' ')
                        .ok_or_else(|| format!("bad column `{c}`"))?;
                    let ty = ColumnType::from_name(ty).ok_or_else(|| format!("bad type `{ty}`"))?;
                    Ok(Column::new(name, ty))
                })
                .collect::<Result<Vec<_>, String>>()?;
            Schema::new(columns).map_err(|e| e.to_string())
        })
        .collect()
}

/// One backend serving all three roles offline.
#[derive(Debug)]
pub struct MockBackend {
    pub planner: MockPlanner,
    pub sql: MockSqlExecutor,
    log: Option<Mutex<Vec<CompletionRequest>>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(MockPlanner::new(), MockSqlExecutor::faithful())
    }
}

impl MockBackend {
    pub fn new(planner: MockPlanner, sql: MockSqlExecutor) -> Self {
        MockBackend {
            planner,
            sql,
            log: None,
        }
    }

    /// Keeps a copy of every request, for inspection in tests.
    pub fn recording(mut self) -> Self {
        self.log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log
            .as_ref()
            .map(|l| l.lock().unwrap().clone())
            .unwrap_or_default()
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        if let Some(log) = &self.log {
            log.lock().unwrap().push(request.clone());
        }
        match request.role {
            Role::Planner => self.planner.respond(&request.prompt),
            Role::StepSql => self.sql.respond(&request.prompt),
            Role::Summary => Ok(mock_summary(&request.prompt)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_templates() {
        let prompt = "Query: Who?\nResult table:\ntable name: Step3\ncol: Age | Name\nrow 1: 19 | Ann\nrow 2: 22 | Bo\nSummary:\n";
        assert_eq!(
            mock_summary(prompt),
            "For the query \"Who?\", the result has 2 rows: Age 19, Name Ann; Age 22, Name Bo."
        );
        let empty = "Query: Who?\nResult table:\ntable name: Step3\ncol: Age\nSummary:\n";
        assert_eq!(
            mock_summary(empty),
            "No matching records were found for the query \"Who?\"."
        );
    }

    #[test]
    fn corruption_is_seeded_and_near_its_rate() {
        let m = MockSqlExecutor::corrupting(0.05, 7);
        let hits = (0..20_000)
            .filter(|i| m.corrupts(&format!("prompt {i}")))
            .count();
        assert!((800..1200).contains(&hits), "{hits}");
        let again = (0..20_000)
            .filter(|i| m.corrupts(&format!("prompt {i}")))
            .count();
        assert_eq!(hits, again);
        assert!(!MockSqlExecutor::faithful().corrupts("anything"));
    }

    #[test]
    fn relation_lines_parse_back() {
        let schemas =
            parse_relations("Relations:\nstep_1(ID INTEGER, d DATE)\nT(x REAL)\nStep: {}\n")
                .unwrap();
        assert_eq!(schemas.len(), 2);
        assert_eq!(schemas[0].columns()[1].ty, ColumnType::Date);
    }
}
