//! Native execution of plans: operator semantics, wavefront scheduling with
//! failure propagation, and execution reports.

mod eval;
mod ops;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bind::bind_step;
use crate::graph::build_graph;
use crate::plan::{Plan, SourceRef, Step};
use crate::table::{Catalog, Table};
use crate::validate::DiagnosticCode;

pub const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorClass {
    SchemaError,
    TypeError,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{class:?}: {message}")]
pub struct ExecError {
    pub class: ErrorClass,
    pub message: String,
}

impl ExecError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        ExecError {
            class,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("ESR needs at least one report")]
    EmptyInput,
}

/// Cooperative per-step time budget, polled inside operator loops.
#[derive(Debug, Clone, Copy)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn after(budget: Option<Duration>) -> Self {
        Deadline(budget.and_then(|b| Instant::now().checked_add(b)))
    }

    pub fn none() -> Self {
        Deadline(None)
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|d| Instant::now() >= d)
    }

    pub fn check(&self) -> Result<(), ExecError> {
        if self.expired() {
            Err(ExecError::new(
                ErrorClass::Timeout,
                "step exceeded its time budget",
            ))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parallelism {
    Sequential,
    Wavefront,
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub parallelism: Parallelism,
    pub step_timeout: Option<Duration>,
    /// Worker threads for wavefront execution; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            parallelism: Parallelism::Wavefront,
            step_timeout: Some(DEFAULT_STEP_TIMEOUT),
            jobs: None,
        }
    }
}

impl ExecOptions {
    pub fn with(parallelism: Parallelism) -> Self {
        ExecOptions {
            parallelism,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    Success(Arc<Table>),
    Failure { class: ErrorClass, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub step_id: u32,
    pub status: StepStatus,
    pub wall_time: Duration,
}

impl StepResult {
    pub fn is_success(&self) -> bool {
        matches!(self.status, StepStatus::Success(_))
    }

    pub fn table(&self) -> Option<&Arc<Table>> {
        match &self.status {
            StepStatus::Success(t) => Some(t),
            StepStatus::Failure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub results: BTreeMap<u32, StepResult>,
    pub cycles_used: usize,
    pub esr: f64,
    pub terminal_id: u32,
    pub terminal_table: Option<Arc<Table>>,
}

impl ExecutionReport {
    pub fn step_count(&self) -> usize {
        self.results.len()
    }

    pub fn success_count(&self) -> usize {
        self.results.values().filter(|r| r.is_success()).count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let steps: Vec<serde_json::Value> = self
            .results
            .values()
            .map(|r| {
                let ms = r.wall_time.as_secs_f64() * 1000.0;
                match &r.status {
                    StepStatus::Success(t) => json!({
                        "step_id": r.step_id,
                        "status": "Success",
                        "rows": t.row_count(),
                        "wall_time_ms": ms,
                    }),
                    StepStatus::Failure { class, message } => json!({
                        "step_id": r.step_id,
                        "status": "Failure",
                        "error_class": class,
                        "message": message,
                        "wall_time_ms": ms,
                    }),
                }
            })
            .collect();
        json!({
            "steps": steps,
            "cycles_used": self.cycles_used,
            "esr": self.esr,
            "terminal_id": self.terminal_id,
            "terminal_table": self.terminal_table.as_deref(),
        })
    }
}

pub type Registry = HashMap<u32, Arc<Table>>;

fn class_of(code: DiagnosticCode) -> ErrorClass {
    match code {
        DiagnosticCode::TypeMismatch | DiagnosticCode::SetOpSchemaMismatch => ErrorClass::TypeError,
        _ => ErrorClass::SchemaError,
    }
}

/// Finds each source table: input tables in the catalog, step results in the
/// registry.
pub fn resolve_sources<'a>(
    step: &Step,
    registry: &'a Registry,
    catalog: &'a Catalog,
) -> Result<Vec<&'a Arc<Table>>, ExecError> {
    step.sources
        .iter()
        .map(|s| match s {
            SourceRef::Table(name) => catalog.get(name).ok_or_else(|| {
                ExecError::new(ErrorClass::SchemaError, format!("no input table `{name}`"))
            }),
            SourceRef::Step(id) => registry.get(id).ok_or_else(|| {
                ExecError::new(ErrorClass::SchemaError, format!("Step{id} has no result"))
            }),
        })
        .collect()
}

pub fn execute_step(
    step: &Step,
    registry: &Registry,
    catalog: &Catalog,
) -> Result<Table, ExecError> {
    execute_step_within(step, registry, catalog, Deadline::none())
}

pub fn execute_step_within(
    step: &Step,
    registry: &Registry,
    catalog: &Catalog,
    deadline: Deadline,
) -> Result<Table, ExecError> {
    let sources = resolve_sources(step, registry, catalog)?;
    let schemas: Vec<_> = sources.iter().map(|t| t.schema()).collect();
    let bound = bind_step(step, &schemas).map_err(|errors| {
        let first = &errors[0];
        let text: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        ExecError::new(class_of(first.code), text.join("; "))
    })?;
    let tables: Vec<&Table> = sources.iter().map(|t| t.as_ref()).collect();
    let rows = ops::run(&bound, &tables, deadline)?;
    Table::new(format!("Step{}", step.id), bound.schema, rows)
        .map_err(|e| ExecError::new(ErrorClass::RuntimeError, e.to_string()))
}

pub fn execute_plan(plan: &Plan, catalog: &Catalog, parallelism: Parallelism) -> ExecutionReport {
    execute_plan_with(plan, catalog, &ExecOptions::with(parallelism))
}

pub fn execute_plan_with(plan: &Plan, catalog: &Catalog, options: &ExecOptions) -> ExecutionReport {
    schedule(plan, options, |step, registry, deadline| {
        execute_step_within(step, registry, catalog, deadline)
    })
}

/// Drives any step runner through a plan. Steps whose inputs failed are
/// marked failed without running. In wavefront mode the steps of one layer
/// run concurrently and their results are published before the next layer.
pub fn schedule<F>(plan: &Plan, options: &ExecOptions, run: F) -> ExecutionReport
where
    F: Fn(&Step, &Registry, Deadline) -> Result<Table, ExecError> + Sync,
{
    let mut registry: Registry = HashMap::new();
    let mut results: BTreeMap<u32, StepResult> = BTreeMap::new();
    let timed = |step: &Step, registry: &Registry| -> StepResult {
        let start = Instant::now();
        let deadline = Deadline::after(options.step_timeout);
        let outcome = run(step, registry, deadline).and_then(|t| {
            deadline.check()?;
            Ok(t)
        });
        StepResult {
            step_id: step.id,
            status: match outcome {
                Ok(t) => StepStatus::Success(Arc::new(t)),
                Err(e) => StepStatus::Failure {
                    class: e.class,
                    message: e.message,
                },
            },
            wall_time: start.elapsed(),
        }
    };
    let upstream_failure = |step: &Step, results: &BTreeMap<u32, StepResult>| {
        step.step_dependencies()
            .find(|d| !results.get(d).is_some_and(StepResult::is_success))
            .map(|d| StepResult {
                step_id: step.id,
                status: StepStatus::Failure {
                    class: ErrorClass::RuntimeError,
                    message: format!("upstream failure: Step{d} did not succeed"),
                },
                wall_time: Duration::ZERO,
            })
    };

    let cycles_used = match options.parallelism {
        Parallelism::Sequential => {
            for step in plan.steps() {
                let result =
                    upstream_failure(step, &results).unwrap_or_else(|| timed(step, &registry));
                if let Some(t) = result.table() {
                    registry.insert(step.id, t.clone());
                }
                results.insert(step.id, result);
            }
            plan.len()
        }
        Parallelism::Wavefront => {
            let pool = options.jobs.map(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .expect("thread pool")
            });
            let mut cycles = 0;
            for wave in build_graph(plan).wavefronts {
                let mut runnable = Vec::new();
                for id in wave {
                    let step = plan.step(id).expect("graph node is a step");
                    match upstream_failure(step, &results) {
                        Some(r) => {
                            results.insert(id, r);
                        }
                        None => runnable.push(step),
                    }
                }
                if runnable.is_empty() {
                    continue;
                }
                cycles += 1;
                let run_wave = || -> Vec<StepResult> {
                    runnable.par_iter().map(|s| timed(s, &registry)).collect()
                };
                let done = match &pool {
                    Some(p) => p.install(run_wave),
                    None => run_wave(),
                };
                for r in done {
                    if let Some(t) = r.table() {
                        registry.insert(r.step_id, t.clone());
                    }
                    results.insert(r.step_id, r);
                }
            }
            cycles
        }
    };
    let successes = results.values().filter(|r| r.is_success()).count();
    let terminal_id = plan.terminal_id();
    ExecutionReport {
        esr: successes as f64 / plan.len() as f64,
        cycles_used,
        terminal_table: results.get(&terminal_id).and_then(|r| r.table().cloned()),
        terminal_id,
        results,
    }
}

/// Pooled execution success rate: successful steps over all steps.
pub fn esr(reports: &[ExecutionReport]) -> Result<f64, EngineError> {
    let total: usize = reports.iter().map(|r| r.step_count()).sum();
    if reports.is_empty() || total == 0 {
        return Err(EngineError::EmptyInput);
    }
    let ok: usize = reports.iter().map(|r| r.success_count()).sum();
    Ok(ok as f64 / total as f64)
}
