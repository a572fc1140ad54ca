//! Static, schema-aware checks of a plan against a catalog.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bind::{bind_step, is_equi_join, BindError};
use crate::plan::{Operation, Plan, SourceRef};
use crate::table::{Catalog, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticCode {
    UnknownSource,
    UnknownColumn,
    AmbiguousColumn,
    TypeMismatch,
    SetOpSchemaMismatch,
    NonEquiJoinUnsupported,
    MissingAlias,
    DuplicateColumn,
    AggregateMisuse,
    /// Only reachable for step lists that bypass `Plan::new`.
    UnusedStep,
    ImplicitGlobalAggregate,
}

impl DiagnosticCode {
    pub fn severity(self) -> Severity {
        match self {
            DiagnosticCode::UnusedStep | DiagnosticCode::ImplicitGlobalAggregate => {
                Severity::Warning
            }
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub step_id: u32,
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
}

impl Diagnostic {
    fn from_bind(step_id: u32, e: BindError) -> Self {
        Diagnostic {
            step_id,
            severity: e.code.severity(),
            code: e.code,
            message: e.message,
        }
    }
}

/// What the executing backend can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineCapabilities {
    pub non_equi_join: bool,
}

impl Default for EngineCapabilities {
    fn default() -> Self {
        EngineCapabilities {
            non_equi_join: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    /// Output schema of every step whose inputs and own expressions check out.
    pub inferred_schemas: BTreeMap<u32, Schema>,
}

impl ValidationReport {
    pub fn is_executable(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn error_codes(&self) -> Vec<DiagnosticCode> {
        self.errors().map(|d| d.code).collect()
    }
}

pub fn validate_plan(plan: &Plan, catalog: &Catalog) -> ValidationReport {
    validate_plan_with(plan, catalog, EngineCapabilities::default())
}

/// Walks steps in id order. A step that reads from a step with errors is
/// skipped without further diagnostics, so each root cause is reported once.
pub fn validate_plan_with(
    plan: &Plan,
    catalog: &Catalog,
    caps: EngineCapabilities,
) -> ValidationReport {
    let mut diagnostics = Vec::new();
    let mut inferred: BTreeMap<u32, Schema> = BTreeMap::new();
    for step in plan.steps() {
        let mut schemas = Vec::with_capacity(step.sources.len());
        let mut upstream_broken = false;
        let mut unknown = false;
        for src in &step.sources {
            match src {
                SourceRef::Table(name) => match catalog.get(name) {
                    Some(t) => schemas.push(t.schema()),
                    None => {
                        unknown = true;
                        let known: Vec<&str> = catalog.tables().map(|t| t.name()).collect();
                        diagnostics.push(Diagnostic {
                            step_id: step.id,
                            severity: Severity::Error,
                            code: DiagnosticCode::UnknownSource,
                            message: format!(
                                "no input table `{name}`; catalog has [{}]",
                                known.join(", ")
                            ),
                        });
                    }
                },
                SourceRef::Step(id) => match inferred.get(id) {
                    Some(s) => schemas.push(s),
                    None => upstream_broken = true,
                },
            }
        }
        if unknown || upstream_broken {
            continue;
        }
        match bind_step(step, &schemas) {
            Ok(bound) => {
                let mut ok = true;
                if step.operation == Operation::Join && !caps.non_equi_join {
                    let equi = bound.predicate.as_ref().is_some_and(is_equi_join);
                    if !equi {
                        ok = false;
                        diagnostics.push(Diagnostic {
                            step_id: step.id,
                            severity: Severity::Error,
                            code: DiagnosticCode::NonEquiJoinUnsupported,
                            message: "the target engine only evaluates equality joins".into(),
                        });
                    }
                }
                for w in bound.warnings {
                    diagnostics.push(Diagnostic::from_bind(step.id, w));
                }
                if ok {
                    inferred.insert(step.id, bound.schema);
                }
            }
            Err(errors) => {
                diagnostics.extend(
                    errors
                        .into_iter()
                        .map(|e| Diagnostic::from_bind(step.id, e)),
                );
            }
        }
    }
    ValidationReport {
        diagnostics,
        inferred_schemas: inferred,
    }
}
