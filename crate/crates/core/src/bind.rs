//! Name resolution and typing of step expressions against source schemas.
//!
//! The validator binds against inferred schemas, the engine against the
//! schemas of the tables it actually received, and the SQL emitter uses the
//! bound types to pick dialect shims. All three therefore agree on what a step
//! means.

use std::collections::HashSet;

use crate::plan::{
    AggArg, AggFunc, ArithOp, ColumnRef, CompareOp, Expr, Operation, Predicate, SortDirection,
    SourceRef, Step,
};
use crate::table::{is_identifier, parse_date, Column, ColumnType, Schema, Value};
use crate::validate::DiagnosticCode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindError {
    pub code: DiagnosticCode,
    pub message: String,
}

impl BindError {
    fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        BindError {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for BindError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    /// Column `index` of source `source` (0 = left, 1 = right for joins).
    Column {
        source: usize,
        index: usize,
        ty: ColumnType,
    },
    Literal(Value),
    Binary {
        op: ArithOp,
        left: Box<BoundExpr>,
        right: Box<BoundExpr>,
        ty: ColumnType,
    },
    Aggregate {
        func: AggFunc,
        arg: Option<Box<BoundExpr>>,
        ty: ColumnType,
    },
}

impl BoundExpr {
    pub fn ty(&self) -> ColumnType {
        match self {
            BoundExpr::Column { ty, .. }
            | BoundExpr::Binary { ty, .. }
            | BoundExpr::Aggregate { ty, .. } => *ty,
            BoundExpr::Literal(v) => v.column_type().unwrap_or(ColumnType::Text),
        }
    }

    pub fn is_aggregate(&self) -> bool {
        match self {
            BoundExpr::Aggregate { .. } => true,
            BoundExpr::Binary { left, right, .. } => left.is_aggregate() || right.is_aggregate(),
            _ => false,
        }
    }

    /// Sources whose columns this expression reads.
    pub fn sources_used(&self, out: &mut HashSet<usize>) {
        match self {
            BoundExpr::Column { source, .. } => {
                out.insert(*source);
            }
            BoundExpr::Literal(_) => {}
            BoundExpr::Binary { left, right, .. } => {
                left.sources_used(out);
                right.sources_used(out);
            }
            BoundExpr::Aggregate { arg, .. } => {
                if let Some(a) = arg {
                    a.sources_used(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundPredicate {
    Compare {
        op: CompareOp,
        left: BoundExpr,
        right: BoundExpr,
    },
    And(Vec<BoundPredicate>),
    Or(Vec<BoundPredicate>),
    True,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSortKey {
    pub expr: BoundExpr,
    pub direction: SortDirection,
}

/// A step with every reference resolved and every expression typed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStep {
    pub operation: Operation,
    pub predicate: Option<BoundPredicate>,
    pub sort_keys: Vec<BoundSortKey>,
    pub limit: Option<u64>,
    pub outputs: Vec<BoundExpr>,
    /// For Aggregate steps: positions of the non-aggregate outputs (the group keys).
    pub group_keys: Vec<usize>,
    pub schema: Schema,
    pub warnings: Vec<BindError>,
}

impl BoundStep {
    pub fn is_global_aggregate(&self) -> bool {
        self.operation == Operation::Aggregate && self.group_keys.is_empty()
    }
}

struct Scope<'a> {
    sources: &'a [SourceRef],
    schemas: &'a [&'a Schema],
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Row,
    /// Top level of an Aggregate-step output: aggregate calls allowed,
    /// bare columns are not.
    Grouped,
}

impl Scope<'_> {
    fn resolve(&self, c: &ColumnRef) -> Result<BoundExpr, BindError> {
        let candidates: Vec<usize> = match &c.qualifier {
            Some(q) => {
                let hits: Vec<usize> = (0..self.sources.len())
                    .filter(|&i| self.sources[i].matches(q))
                    .collect();
                if hits.is_empty() {
                    let known: Vec<String> = self.sources.iter().map(|s| s.to_string()).collect();
                    return Err(BindError::new(
                        DiagnosticCode::UnknownSource,
                        format!(
                            "`{c}` names source `{q}`, but this step reads [{}]",
                            known.join(", ")
                        ),
                    ));
                }
                if hits.len() > 1 {
                    return Err(BindError::new(
                        DiagnosticCode::AmbiguousColumn,
                        format!("`{c}`: `{q}` appears more than once among the sources"),
                    ));
                }
                hits
            }
            None => (0..self.sources.len()).collect(),
        };
        let found: Vec<(usize, usize)> = candidates
            .iter()
            .filter_map(|&s| self.schemas[s].index_of(&c.name).map(|i| (s, i)))
            .collect();
        match found.as_slice() {
            [] => {
                let available: Vec<String> = candidates
                    .iter()
                    .flat_map(|&s| self.schemas[s].names().map(str::to_string))
                    .collect();
                Err(BindError::new(
                    DiagnosticCode::UnknownColumn,
                    format!("no column `{c}`; available: [{}]", available.join(", ")),
                ))
            }
            [(source, index)] => Ok(BoundExpr::Column {
                source: *source,
                index: *index,
                ty: self.schemas[*source].columns()[*index].ty,
            }),
            _ => Err(BindError::new(
                DiagnosticCode::AmbiguousColumn,
                format!("`{c}` exists in both join sources; qualify it"),
            )),
        }
    }

    fn expr(&self, e: &Expr, mode: Mode) -> Result<BoundExpr, BindError> {
        match e {
            Expr::Column(c) => {
                if mode == Mode::Grouped {
                    return Err(BindError::new(
                        DiagnosticCode::AggregateMisuse,
                        format!("`{c}` is mixed with aggregate calls outside any aggregate"),
                    ));
                }
                self.resolve(c)
            }
            Expr::Literal(v) => Ok(BoundExpr::Literal(v.clone())),
            Expr::Binary { op, left, right } => {
                let l = self.expr(left, mode)?;
                let r = self.expr(right, mode)?;
                binary(*op, l, r)
            }
            Expr::Aggregate { func, arg } => {
                if mode != Mode::Grouped {
                    return Err(BindError::new(
                        DiagnosticCode::AggregateMisuse,
                        format!(
                            "{}(...) is only allowed in Aggregate step outputs",
                            func.name()
                        ),
                    ));
                }
                let arg = match arg {
                    AggArg::Star => None,
                    AggArg::Expr(inner) => Some(Box::new(self.expr(inner, Mode::Row)?)),
                };
                let ty = aggregate_type(*func, arg.as_deref())?;
                Ok(BoundExpr::Aggregate {
                    func: *func,
                    arg,
                    ty,
                })
            }
        }
    }

    fn predicate(&self, p: &Predicate) -> Result<BoundPredicate, BindError> {
        match p {
            Predicate::True => Ok(BoundPredicate::True),
            Predicate::And(parts) => Ok(BoundPredicate::And(
                parts
                    .iter()
                    .map(|q| self.predicate(q))
                    .collect::<Result<_, _>>()?,
            )),
            Predicate::Or(parts) => Ok(BoundPredicate::Or(
                parts
                    .iter()
                    .map(|q| self.predicate(q))
                    .collect::<Result<_, _>>()?,
            )),
            Predicate::Compare { op, left, right } => {
                let l = self.expr(left, Mode::Row)?;
                let r = self.expr(right, Mode::Row)?;
                let (l, r) = coerce_date_literals(l, r)?;
                if !comparable(l.ty(), r.ty()) {
                    return Err(BindError::new(
                        DiagnosticCode::TypeMismatch,
                        format!(
                            "cannot compare {} with {} in `{left} {} {right}`",
                            l.ty(),
                            r.ty(),
                            op.symbol()
                        ),
                    ));
                }
                Ok(BoundPredicate::Compare {
                    op: *op,
                    left: l,
                    right: r,
                })
            }
        }
    }
}

fn comparable(a: ColumnType, b: ColumnType) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

/// A text literal facing a Date expression is read as a date.
fn coerce_date_literals(l: BoundExpr, r: BoundExpr) -> Result<(BoundExpr, BoundExpr), BindError> {
    let coerce = |e: BoundExpr| -> Result<BoundExpr, BindError> {
        match &e {
            BoundExpr::Literal(Value::Text(s)) => match parse_date(s.trim()) {
                Some(d) => Ok(BoundExpr::Literal(Value::Date(d))),
                None => Err(BindError::new(
                    DiagnosticCode::TypeMismatch,
                    format!("\"{s}\" is compared with a Date but is not a YYYY-MM-DD date"),
                )),
            },
            _ => Ok(e),
        }
    };
    match (l.ty(), r.ty()) {
        (ColumnType::Date, ColumnType::Text) if matches!(r, BoundExpr::Literal(_)) => {
            Ok((l, coerce(r)?))
        }
        (ColumnType::Text, ColumnType::Date) if matches!(l, BoundExpr::Literal(_)) => {
            Ok((coerce(l)?, r))
        }
        _ => Ok((l, r)),
    }
}

fn binary(op: ArithOp, l: BoundExpr, r: BoundExpr) -> Result<BoundExpr, BindError> {
    use ColumnType::*;
    let (l, r) = if op == ArithOp::Sub {
        coerce_date_literals(l, r)?
    } else {
        (l, r)
    };
    let ty = match (l.ty(), r.ty(), op) {
        (Integer, Integer, ArithOp::Div) => Real,
        (Integer, Integer, _) => Integer,
        (a, b, _) if a.is_numeric() && b.is_numeric() => Real,
        (Date, Date, ArithOp::Sub) => Integer,
        (a, b, _) => {
            return Err(BindError::new(
                DiagnosticCode::TypeMismatch,
                format!("{a} {} {b} is not defined", op.symbol()),
            ))
        }
    };
    Ok(BoundExpr::Binary {
        op,
        left: Box::new(l),
        right: Box::new(r),
        ty,
    })
}

fn aggregate_type(func: AggFunc, arg: Option<&BoundExpr>) -> Result<ColumnType, BindError> {
    let Some(arg) = arg else {
        return Ok(ColumnType::Integer);
    };
    let ty = arg.ty();
    match func {
        AggFunc::Count => Ok(ColumnType::Integer),
        AggFunc::Min | AggFunc::Max => Ok(ty),
        AggFunc::Sum | AggFunc::Avg if !ty.is_numeric() => Err(BindError::new(
            DiagnosticCode::TypeMismatch,
            format!("{} needs a numeric argument, got {ty}", func.name()),
        )),
        AggFunc::Sum => Ok(ty),
        AggFunc::Avg => Ok(ColumnType::Real),
    }
}

/// Binds `step` against the schemas of its sources (in source order).
/// Returns every error found, not only the first.
pub fn bind_step(step: &Step, schemas: &[&Schema]) -> Result<BoundStep, Vec<BindError>> {
    assert_eq!(schemas.len(), step.sources.len(), "one schema per source");
    let scope = Scope {
        sources: &step.sources,
        schemas,
    };
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    if step.operation.is_set_op() {
        let (left, right) = (schemas[0], schemas[1]);
        let lt: Vec<ColumnType> = left.types().collect();
        let rt: Vec<ColumnType> = right.types().collect();
        if lt != rt {
            let show = |v: &[ColumnType]| v.iter().map(|t| t.name()).collect::<Vec<_>>().join(", ");
            return Err(vec![BindError::new(
                DiagnosticCode::SetOpSchemaMismatch,
                format!(
                    "{} needs matching column types: [{}] vs [{}]",
                    step.operation,
                    show(&lt),
                    show(&rt)
                ),
            )]);
        }
        return Ok(BoundStep {
            operation: step.operation,
            predicate: None,
            sort_keys: Vec::new(),
            limit: None,
            outputs: (0..left.width())
                .map(|i| BoundExpr::Column {
                    source: 0,
                    index: i,
                    ty: lt[i],
                })
                .collect(),
            group_keys: Vec::new(),
            schema: left.clone(),
            warnings,
        });
    }

    let predicate = match step.predicate() {
        Some(p) => match scope.predicate(p) {
            Ok(b) => Some(b),
            Err(e) => {
                errors.push(e);
                None
            }
        },
        None => None,
    };

    let mut sort_keys = Vec::new();
    let mut limit = None;
    if let Some(spec) = step.sort_spec() {
        limit = spec.limit;
        for key in &spec.keys {
            match scope.expr(&key.expr, Mode::Row) {
                Ok(expr) => sort_keys.push(BoundSortKey {
                    expr,
                    direction: key.direction,
                }),
                Err(e) => errors.push(e),
            }
        }
    }

    let mut outputs = Vec::new();
    let mut columns = Vec::new();
    let mut group_keys = Vec::new();
    let mut names_seen = HashSet::new();
    for (pos, out) in step.output.iter().enumerate() {
        let aggregated = out.expr.contains_aggregate();
        let mode = if step.operation == Operation::Aggregate && aggregated {
            Mode::Grouped
        } else {
            Mode::Row
        };
        let bound = match scope.expr(&out.expr, mode) {
            Ok(b) => b,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let Some(name) = out.output_name() else {
            errors.push(BindError::new(
                DiagnosticCode::MissingAlias,
                format!("computed output `{}` needs `as <alias>`", out.expr),
            ));
            continue;
        };
        if !is_identifier(name) {
            errors.push(BindError::new(
                DiagnosticCode::MissingAlias,
                format!("output name `{name}` is not an identifier"),
            ));
            continue;
        }
        if !names_seen.insert(name.to_lowercase()) {
            errors.push(BindError::new(
                DiagnosticCode::DuplicateColumn,
                format!("output column `{name}` appears twice; alias one of them"),
            ));
            continue;
        }
        if step.operation == Operation::Aggregate && !aggregated {
            group_keys.push(pos);
        }
        columns.push(Column::new(name, bound.ty()));
        outputs.push(bound);
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    if step.operation == Operation::Aggregate && group_keys.is_empty() {
        warnings.push(BindError::new(
            DiagnosticCode::ImplicitGlobalAggregate,
            "no grouping columns: the whole input forms one group",
        ));
    }
    let schema = Schema::new(columns).map_err(|e| {
        vec![BindError::new(
            DiagnosticCode::DuplicateColumn,
            e.to_string(),
        )]
    })?;
    Ok(BoundStep {
        operation: step.operation,
        predicate,
        sort_keys,
        limit,
        outputs,
        group_keys,
        schema,
        warnings,
    })
}

/// True when `p` is a conjunction of equalities, each relating an expression
/// over the left source to one over the right.
pub fn is_equi_join(p: &BoundPredicate) -> bool {
    match p {
        BoundPredicate::And(parts) => !parts.is_empty() && parts.iter().all(is_equi_join),
        BoundPredicate::Compare {
            op: CompareOp::Eq,
            left,
            right,
        } => {
            let (mut l, mut r) = (HashSet::new(), HashSet::new());
            left.sources_used(&mut l);
            right.sources_used(&mut r);
            let one = |s: &HashSet<usize>, want: usize| s.len() == 1 && s.contains(&want);
            (one(&l, 0) && one(&r, 1)) || (one(&l, 1) && one(&r, 0))
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{parse_output_expr, parse_predicate, Condition};

    fn schema(cols: &[(&str, ColumnType)]) -> Schema {
        Schema::new(cols.iter().map(|(n, t)| Column::new(*n, *t)).collect()).unwrap()
    }

    fn step(op: Operation, sources: &[&str], cond: Option<&str>, outs: &[&str]) -> Step {
        Step {
            id: 9,
            operation: op,
            sources: sources
                .iter()
                .map(|s| SourceRef::parse(s).unwrap())
                .collect(),
            condition: cond.map(|c| Condition::Predicate(parse_predicate(c).unwrap())),
            output: outs.iter().map(|o| parse_output_expr(o).unwrap()).collect(),
        }
    }

    fn codes(r: Result<BoundStep, Vec<BindError>>) -> Vec<DiagnosticCode> {
        r.err()
            .unwrap_or_default()
            .into_iter()
            .map(|e| e.code)
            .collect()
    }

    #[test]
    fn date_difference_is_integer_days() {
        let s = schema(&[
            ("ProjectID", ColumnType::Integer),
            ("StartDate", ColumnType::Date),
            ("EndDate", ColumnType::Date),
        ]);
        let st = step(
            Operation::Aggregate,
            &["Step1"],
            None,
            &["ProjectID", "(EndDate - StartDate) as Duration"],
        );
        let b = bind_step(&st, &[&s]).unwrap();
        assert_eq!(
            b.schema.types().collect::<Vec<_>>(),
            [ColumnType::Integer; 2]
        );
        assert_eq!(b.group_keys, vec![0, 1]);
    }

    #[test]
    fn join_resolution_rules() {
        let l = schema(&[("ID", ColumnType::Integer), ("Name", ColumnType::Text)]);
        let r = schema(&[("ID", ColumnType::Integer), ("Age", ColumnType::Integer)]);
        let ok = step(
            Operation::Join,
            &["Step1", "Step2"],
            Some("Step1.ID = Step2.ID"),
            &["Name", "Step2.Age"],
        );
        let b = bind_step(&ok, &[&l, &r]).unwrap();
        assert!(is_equi_join(b.predicate.as_ref().unwrap()));
        let amb = step(
            Operation::Join,
            &["Step1", "Step2"],
            Some("ID = 1"),
            &["Name"],
        );
        assert_eq!(
            codes(bind_step(&amb, &[&l, &r])),
            vec![DiagnosticCode::AmbiguousColumn]
        );
        let unk = step(Operation::Join, &["Step1", "Step2"], None, &["Step3.Name"]);
        assert_eq!(
            codes(bind_step(&unk, &[&l, &r])),
            vec![DiagnosticCode::UnknownSource]
        );
        let dup = step(
            Operation::Join,
            &["Step1", "Step2"],
            None,
            &["Step1.ID", "Step2.ID"],
        );
        assert_eq!(
            codes(bind_step(&dup, &[&l, &r])),
            vec![DiagnosticCode::DuplicateColumn]
        );
    }

    #[test]
    fn type_errors() {
        let s = schema(&[
            ("a", ColumnType::Integer),
            ("t", ColumnType::Text),
            ("d", ColumnType::Date),
        ]);
        let bad = step(
            Operation::Scan,
            &["T"],
            Some("t > 1"),
            &["t - a as x", "SUM(a) as s"],
        );
        assert_eq!(
            codes(bind_step(&bad, &[&s])),
            vec![
                DiagnosticCode::TypeMismatch,
                DiagnosticCode::TypeMismatch,
                DiagnosticCode::AggregateMisuse
            ]
        );
        let ok = step(
            Operation::Scan,
            &["T"],
            Some("d >= \"2021-01-01\""),
            &["a / 2 as h"],
        );
        let b = bind_step(&ok, &[&s]).unwrap();
        assert_eq!(b.schema.columns()[0].ty, ColumnType::Real);
        let bad_date = step(Operation::Scan, &["T"], Some("d = \"soon\""), &["a"]);
        assert_eq!(
            codes(bind_step(&bad_date, &[&s])),
            vec![DiagnosticCode::TypeMismatch]
        );
    }

    #[test]
    fn aggregate_rules() {
        let s = schema(&[("g", ColumnType::Text), ("v", ColumnType::Real)]);
        let b = bind_step(
            &step(Operation::Aggregate, &["T"], None, &["AVG(v) as m"]),
            &[&s],
        )
        .unwrap();
        assert!(b.is_global_aggregate());
        assert_eq!(b.warnings[0].code, DiagnosticCode::ImplicitGlobalAggregate);
        let mixed = step(
            Operation::Aggregate,
            &["T"],
            None,
            &["g", "v + SUM(v) as x"],
        );
        assert_eq!(
            codes(bind_step(&mixed, &[&s])),
            vec![DiagnosticCode::AggregateMisuse]
        );
        let text_sum = step(Operation::Aggregate, &["T"], None, &["SUM(g) as x"]);
        assert_eq!(
            codes(bind_step(&text_sum, &[&s])),
            vec![DiagnosticCode::TypeMismatch]
        );
    }

    #[test]
    fn set_op_schemas() {
        let a = schema(&[("x", ColumnType::Integer), ("y", ColumnType::Text)]);
        let b = schema(&[("p", ColumnType::Integer), ("q", ColumnType::Text)]);
        let c = schema(&[
            ("p", ColumnType::Integer),
            ("q", ColumnType::Text),
            ("r", ColumnType::Real),
        ]);
        let u = step(Operation::Union, &["Step1", "Step2"], None, &[]);
        assert_eq!(bind_step(&u, &[&a, &b]).unwrap().schema, a);
        assert_eq!(
            codes(bind_step(&u, &[&a, &c])),
            vec![DiagnosticCode::SetOpSchemaMismatch]
        );
    }

    #[test]
    fn missing_alias_from_hand_built_step() {
        let s = schema(&[("a", ColumnType::Integer)]);
        let mut st = step(Operation::Scan, &["T"], None, &["a"]);
        st.output[0].expr = Expr::binary(
            ArithOp::Add,
            Expr::column("a"),
            Expr::Literal(Value::Integer(1)),
        );
        assert_eq!(
            codes(bind_step(&st, &[&s])),
            vec![DiagnosticCode::MissingAlias]
        );
    }
}
