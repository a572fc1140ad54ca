//! Deterministic SQL text for steps and whole plans.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bind::{bind_step, BoundExpr, BoundPredicate};
use crate::plan::{
    AggArg, ArithOp, ColumnRef, CompareOp, Expr, Operation, Plan, Predicate, SortDirection,
    SourceRef, Step,
};
use crate::table::{format_real, Catalog, ColumnType, Schema, Value};
use crate::validate::validate_plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Dialect {
    /// Plain ANSI subset: `date - date` is emitted as written.
    Ansi,
    /// Adds a `julianday` shim for date differences.
    #[default]
    SqliteCompatible,
}

impl Dialect {
    pub fn from_name(name: &str) -> Option<Dialect> {
        match name {
            "ansi" => Some(Dialect::Ansi),
            "sqlite" | "sqlite-compatible" => Some(Dialect::SqliteCompatible),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedSql {
    pub step_id: u32,
    pub sql: String,
    pub references: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("unsupported expression: {0}")]
    UnsupportedExpr(String),
    #[error("input table `{0}` collides with a generated step relation name")]
    NameCollision(String),
    #[error("step {step} does not type-check: {message}")]
    Invalid { step: u32, message: String },
}

/// `step_<k>` for step results; the double-quoted name for input tables.
pub fn relation_name(src: &SourceRef) -> String {
    match src {
        SourceRef::Step(id) => format!("step_{id}"),
        SourceRef::Table(name) => quote_ident(name),
    }
}

pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn quote_text(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// True for names that would shadow or be shadowed by `step_<k>` relations.
pub fn collides_with_step_relation(name: &str) -> bool {
    let lower = name.to_lowercase();
    lower
        .strip_prefix("step_")
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Untyped emission: without source schemas, date differences cannot be
/// recognised, so the ANSI form is used.
pub fn emit_step_sql(step: &Step) -> Result<EmittedSql, EmitError> {
    emit_step_sql_with(step, Dialect::Ansi, None)
}

/// Emits `step`; with `schemas` (one per source) the step is type-checked
/// first and dialect shims are applied where types call for them.
pub fn emit_step_sql_with(
    step: &Step,
    dialect: Dialect,
    schemas: Option<&[&Schema]>,
) -> Result<EmittedSql, EmitError> {
    for src in &step.sources {
        if let SourceRef::Table(name) = src {
            if collides_with_step_relation(name) {
                return Err(EmitError::NameCollision(name.clone()));
            }
        }
    }
    let bound = match schemas {
        Some(s) => Some(bind_step(step, s).map_err(|errors| {
            EmitError::Invalid {
                step: step.id,
                message: errors
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            }
        })?),
        None => None,
    };
    let w = Writer { step, dialect };
    let sql = match step.operation {
        op if op.is_set_op() => {
            let keyword = match op {
                Operation::Except => "EXCEPT",
                Operation::Intersect => "INTERSECT",
                _ => "UNION",
            };
            format!(
                "SELECT * FROM {} {keyword} SELECT * FROM {}",
                relation_name(&step.sources[0]),
                relation_name(&step.sources[1])
            )
        }
        Operation::Join => {
            let outputs = w.outputs(bound.as_ref().map(|b| b.outputs.as_slice()))?;
            let mut sql = format!(
                "SELECT {outputs} FROM {} AS s1",
                relation_name(&step.sources[0])
            );
            match step.predicate() {
                Some(p) => {
                    let on = w.predicate(p, bound.as_ref().and_then(|b| b.predicate.as_ref()))?;
                    sql.push_str(&format!(
                        " JOIN {} AS s2 ON {on}",
                        relation_name(&step.sources[1])
                    ));
                }
                None => sql.push_str(&format!(
                    " CROSS JOIN {} AS s2",
                    relation_name(&step.sources[1])
                )),
            }
            sql
        }
        _ => {
            let outputs = w.outputs(bound.as_ref().map(|b| b.outputs.as_slice()))?;
            let mut sql = format!("SELECT {outputs} FROM {}", relation_name(&step.sources[0]));
            if let Some(p) = step.predicate() {
                let cond = w.predicate(p, bound.as_ref().and_then(|b| b.predicate.as_ref()))?;
                sql.push_str(&format!(" WHERE {cond}"));
            }
            if step.operation == Operation::Aggregate {
                let keys: Vec<(usize, &Expr)> = step
                    .output
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| !o.expr.contains_aggregate())
                    .map(|(i, o)| (i, &o.expr))
                    .collect();
                if !keys.is_empty() {
                    let parts = keys
                        .iter()
                        .map(|(i, e)| {
                            let b = bound.as_ref().map(|b| &b.outputs[*i]);
                            w.clause_expr(e, b)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    sql.push_str(&format!(" GROUP BY {}", parts.join(", ")));
                }
            }
            if let Some(spec) = step.sort_spec() {
                let mut parts = Vec::new();
                for (i, key) in spec.keys.iter().enumerate() {
                    let b = bound.as_ref().map(|b| &b.sort_keys[i].expr);
                    let dir = match key.direction {
                        SortDirection::Asc => "ASC",
                        SortDirection::Desc => "DESC",
                    };
                    parts.push(format!("{} {dir} NULLS LAST", w.clause_expr(&key.expr, b)?));
                }
                for i in 1..=step.output.len() {
                    parts.push(format!("{i} ASC NULLS LAST"));
                }
                sql.push_str(&format!(" ORDER BY {}", parts.join(", ")));
                if let Some(k) = spec.limit {
                    sql.push_str(&format!(" LIMIT {k}"));
                }
            }
            sql
        }
    };
    Ok(EmittedSql {
        step_id: step.id,
        sql,
        references: step.sources.clone(),
    })
}

/// `WITH step_1 AS (...), ... SELECT * FROM step_<terminal>`. With a catalog
/// every step is type-checked and dialect shims are applied.
pub fn emit_plan_sql(
    plan: &Plan,
    dialect: Dialect,
    catalog: Option<&Catalog>,
) -> Result<String, EmitError> {
    let steps = emit_plan_steps(plan, dialect, catalog)?;
    let ctes: Vec<String> = steps
        .iter()
        .map(|e| format!("step_{} AS ({})", e.step_id, e.sql))
        .collect();
    Ok(format!(
        "WITH {} SELECT * FROM step_{}",
        ctes.join(", "),
        plan.terminal_id()
    ))
}

/// Per-step emission for a whole plan, in id order.
pub fn emit_plan_steps(
    plan: &Plan,
    dialect: Dialect,
    catalog: Option<&Catalog>,
) -> Result<Vec<EmittedSql>, EmitError> {
    let Some(catalog) = catalog else {
        return plan
            .steps()
            .iter()
            .map(|s| emit_step_sql_with(s, dialect, None))
            .collect();
    };
    for t in catalog.tables() {
        if collides_with_step_relation(t.name()) {
            return Err(EmitError::NameCollision(t.name().to_string()));
        }
    }
    let report = validate_plan(plan, catalog);
    if let Some(d) = report.errors().next() {
        return Err(EmitError::Invalid {
            step: d.step_id,
            message: format!("{}: {}", d.code, d.message),
        });
    }
    plan.steps()
        .iter()
        .map(|s| {
            let schemas: Vec<&Schema> = s
                .sources
                .iter()
                .map(|src| match src {
                    SourceRef::Table(n) => catalog.get(n).expect("validated").schema(),
                    SourceRef::Step(id) => &report.inferred_schemas[id],
                })
                .collect();
            emit_step_sql_with(s, dialect, Some(&schemas))
        })
        .collect()
}

struct Writer<'a> {
    step: &'a Step,
    dialect: Dialect,
}

impl Writer<'_> {
    fn is_join(&self) -> bool {
        self.step.operation == Operation::Join
    }

    fn outputs(&self, bound: Option<&[BoundExpr]>) -> Result<String, EmitError> {
        let parts = self
            .step
            .output
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let e = self.expr(&o.expr, bound.map(|b| &b[i]), false)?;
                Ok(match &o.alias {
                    Some(a) => format!("{e} AS {}", quote_ident(a)),
                    None => e,
                })
            })
            .collect::<Result<Vec<_>, EmitError>>()?;
        Ok(parts.join(", "))
    }

    /// Expression inside GROUP BY or ORDER BY: column references are
    /// qualified so result-column aliases cannot capture them, and integer
    /// literals are cast so they are not read as column ordinals.
    fn clause_expr(&self, e: &Expr, bound: Option<&BoundExpr>) -> Result<String, EmitError> {
        self.expr(e, bound, true)
    }

    fn column(&self, c: &ColumnRef, qualify: bool) -> String {
        let name = quote_ident(&c.name);
        let position = c
            .qualifier
            .as_ref()
            .and_then(|q| self.step.sources.iter().position(|s| s.matches(q)));
        if self.is_join() {
            return match position {
                Some(i) => format!("s{}.{name}", i + 1),
                None => name,
            };
        }
        match (position, qualify) {
            (Some(i), _) => format!("{}.{name}", relation_name(&self.step.sources[i])),
            (None, true) => format!("{}.{name}", relation_name(&self.step.sources[0])),
            (None, false) => name,
        }
    }

    fn expr(
        &self,
        e: &Expr,
        bound: Option<&BoundExpr>,
        in_clause: bool,
    ) -> Result<String, EmitError> {
        Ok(match e {
            Expr::Column(c) => self.column(c, in_clause),
            Expr::Literal(v) => {
                let v = match bound {
                    Some(BoundExpr::Literal(b)) => b,
                    _ => v,
                };
                let text = literal(v);
                match v {
                    Value::Integer(_) if in_clause => format!("CAST({text} AS INTEGER)"),
                    _ => text,
                }
            }
            Expr::Binary { op, left, right } => {
                let (bl, br) = match bound {
                    Some(BoundExpr::Binary { left, right, .. }) => {
                        (Some(left.as_ref()), Some(right.as_ref()))
                    }
                    _ => (None, None),
                };
                let l = self.expr(left, bl, in_clause)?;
                let r = self.expr(right, br, in_clause)?;
                let dates = matches!(
                    (bl.map(BoundExpr::ty), br.map(BoundExpr::ty)),
                    (Some(ColumnType::Date), Some(ColumnType::Date))
                );
                match op {
                    ArithOp::Sub if dates && self.dialect == Dialect::SqliteCompatible => {
                        format!("CAST(julianday({l}) - julianday({r}) AS INTEGER)")
                    }
                    ArithOp::Div => {
                        let real = match self.dialect {
                            Dialect::Ansi => "DOUBLE PRECISION",
                            Dialect::SqliteCompatible => "REAL",
                        };
                        format!("(CAST({l} AS {real}) / {r})")
                    }
                    _ => format!("({l} {} {r})", op.symbol()),
                }
            }
            Expr::Aggregate { func, arg } => match arg {
                AggArg::Star => format!("{}(*)", func.name()),
                AggArg::Expr(inner) => {
                    let b = match bound {
                        Some(BoundExpr::Aggregate { arg: Some(a), .. }) => Some(a.as_ref()),
                        _ => None,
                    };
                    format!("{}({})", func.name(), self.expr(inner, b, in_clause)?)
                }
            },
        })
    }

    fn predicate(
        &self,
        p: &Predicate,
        bound: Option<&BoundPredicate>,
    ) -> Result<String, EmitError> {
        let nested = |parts: &[Predicate], bparts: Option<&Vec<BoundPredicate>>, sep: &str| {
            let texts = parts
                .iter()
                .enumerate()
                .map(|(i, q)| {
                    let t = self.predicate(q, bparts.map(|b| &b[i]))?;
                    Ok(match q {
                        Predicate::And(_) | Predicate::Or(_) => format!("({t})"),
                        _ => t,
                    })
                })
                .collect::<Result<Vec<_>, EmitError>>()?;
            Ok::<_, EmitError>(texts.join(sep))
        };
        match p {
            Predicate::True => Ok("TRUE".into()),
            Predicate::And(parts) => nested(
                parts,
                match bound {
                    Some(BoundPredicate::And(b)) => Some(b),
                    _ => None,
                },
                " AND ",
            ),
            Predicate::Or(parts) => nested(
                parts,
                match bound {
                    Some(BoundPredicate::Or(b)) => Some(b),
                    _ => None,
                },
                " OR ",
            ),
            Predicate::Compare { op, left, right } => {
                let (bl, br) = match bound {
                    Some(BoundPredicate::Compare { left, right, .. }) => (Some(left), Some(right)),
                    _ => (None, None),
                };
                let symbol = match op {
                    CompareOp::Ne => "<>",
                    other => other.symbol(),
                };
                Ok(format!(
                    "{} {symbol} {}",
                    self.expr(left, bl, false)?,
                    self.expr(right, br, false)?
                ))
            }
        }
    }
}

fn literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Integer(i) if *i < 0 => format!("({i})"),
        Value::Integer(i) => i.to_string(),
        Value::Real(r) if r.is_sign_negative() => format!("({})", format_real(*r)),
        Value::Real(r) => format_real(*r),
        Value::Text(s) => quote_text(s),
        Value::Date(_) => quote_text(&v.to_string()),
    }
}
