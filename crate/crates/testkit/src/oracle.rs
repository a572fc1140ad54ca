//! A deliberately naive interpreter for single steps, written straight from
//! the operator definitions: nested loops, linear searches and selection sort.
//! It shares no evaluation code with the engine, only the plan AST.

use std::cmp::Ordering;

use chrono::NaiveDate;
use spage_core::plan::{
    AggArg, AggFunc, ArithOp, CompareOp, Condition, Expr, Operation, Predicate, SortDirection,
    SourceRef, Step,
};
use spage_core::table::{Row, Table, Value};

/// One input relation as the oracle sees it.
pub struct Rel<'a> {
    pub source: SourceRef,
    pub table: &'a Table,
}

fn same_source(a: &SourceRef, b: &SourceRef) -> bool {
    match (a, b) {
        (SourceRef::Table(x), SourceRef::Table(y)) => x.eq_ignore_ascii_case(y),
        (SourceRef::Step(x), SourceRef::Step(y)) => x == y,
        _ => false,
    }
}

fn lookup(rels: &[Rel], rows: &[&Row], qualifier: Option<&SourceRef>, name: &str) -> Value {
    for (k, rel) in rels.iter().enumerate() {
        if qualifier.is_some_and(|q| !same_source(q, &rel.source)) {
            continue;
        }
        for (i, col) in rel.table.schema().columns().iter().enumerate() {
            if col.name.eq_ignore_ascii_case(name) {
                return rows[k][i].clone();
            }
        }
    }
    panic!("oracle: unresolved column {name}")
}

fn as_date(v: &Value) -> Option<NaiveDate> {
    match v {
        Value::Date(d) => Some(*d),
        Value::Text(t) => NaiveDate::parse_from_str(t, "%Y-%m-%d").ok(),
        _ => None,
    }
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Real(r) => Some(*r),
        _ => None,
    }
}

fn arith(op: ArithOp, l: Value, r: Value) -> Value {
    if matches!(l, Value::Null) || matches!(r, Value::Null) {
        return Value::Null;
    }
    if let (Value::Integer(a), Value::Integer(b)) = (&l, &r) {
        return match op {
            ArithOp::Add => Value::Integer(a + b),
            ArithOp::Sub => Value::Integer(a - b),
            ArithOp::Mul => Value::Integer(a * b),
            ArithOp::Div => Value::Real(*a as f64 / *b as f64),
        };
    }
    if let (Some(a), Some(b)) = (num(&l), num(&r)) {
        return Value::Real(match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        });
    }
    let (a, b) = (as_date(&l).unwrap(), as_date(&r).unwrap());
    assert_eq!(op, ArithOp::Sub, "oracle: only date subtraction is defined");
    Value::Integer((a - b).num_days())
}

/// Natural order of two non-null values of compatible types.
fn order(a: &Value, b: &Value) -> Option<Ordering> {
    if let (Some(x), Some(y)) = (num(a), num(b)) {
        if let (Value::Integer(i), Value::Integer(j)) = (a, b) {
            return Some(i.cmp(j));
        }
        return x.partial_cmp(&y);
    }
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
        (Value::Date(_), _) | (_, Value::Date(_)) => Some(as_date(a)?.cmp(&as_date(b)?)),
        _ => None,
    }
}

fn eval(e: &Expr, rels: &[Rel], rows: &[&Row]) -> Value {
    match e {
        Expr::Column(c) => lookup(rels, rows, c.qualifier.as_ref(), &c.name),
        Expr::Literal(v) => v.clone(),
        Expr::Binary { op, left, right } => {
            arith(*op, eval(left, rels, rows), eval(right, rels, rows))
        }
        Expr::Aggregate { .. } => panic!("oracle: aggregate outside a group"),
    }
}

fn holds(p: &Predicate, rels: &[Rel], rows: &[&Row]) -> bool {
    match p {
        Predicate::True => true,
        Predicate::And(ps) => ps.iter().all(|q| holds(q, rels, rows)),
        Predicate::Or(ps) => ps.iter().any(|q| holds(q, rels, rows)),
        Predicate::Compare { op, left, right } => {
            let (l, r) = (eval(left, rels, rows), eval(right, rels, rows));
            if matches!(l, Value::Null) || matches!(r, Value::Null) {
                return false;
            }
            let Some(o) = order(&l, &r) else { return false };
            match op {
                CompareOp::Eq => o == Ordering::Equal,
                CompareOp::Ne => o != Ordering::Equal,
                CompareOp::Lt => o == Ordering::Less,
                CompareOp::Le => o != Ordering::Greater,
                CompareOp::Gt => o == Ordering::Greater,
                CompareOp::Ge => o != Ordering::Less,
            }
        }
    }
}

fn predicate(step: &Step) -> Option<&Predicate> {
    match &step.condition {
        Some(Condition::Predicate(p)) => Some(p),
        _ => None,
    }
}

fn has_aggregate(e: &Expr) -> bool {
    match e {
        Expr::Aggregate { .. } => true,
        Expr::Binary { left, right, .. } => has_aggregate(left) || has_aggregate(right),
        _ => false,
    }
}

/// Values are the same row member: Nulls match each other, numbers by value.
fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Null, _) | (_, Value::Null) => false,
        _ => order(a, b) == Some(Ordering::Equal) && a.column_type() == b.column_type(),
    }
}

fn same_row(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(x, y))
}

fn aggregate(func: AggFunc, arg: &AggArg, rels: &[Rel], group: &[&Row]) -> Value {
    let values: Vec<Value> = match arg {
        AggArg::Star => return Value::Integer(group.len() as i64),
        AggArg::Expr(e) => group
            .iter()
            .map(|r| eval(e, rels, &[*r]))
            .filter(|v| !matches!(v, Value::Null))
            .collect(),
    };
    if func == AggFunc::Count {
        return Value::Integer(values.len() as i64);
    }
    if values.is_empty() {
        return Value::Null;
    }
    let all_int = values.iter().all(|v| matches!(v, Value::Integer(_)));
    match func {
        AggFunc::Sum if all_int => Value::Integer(
            values
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => *i,
                    _ => unreachable!(),
                })
                .sum(),
        ),
        AggFunc::Sum => Value::Real(values.iter().map(|v| num(v).unwrap()).sum()),
        AggFunc::Avg => {
            Value::Real(values.iter().map(|v| num(v).unwrap()).sum::<f64>() / values.len() as f64)
        }
        AggFunc::Min | AggFunc::Max => {
            let want = if func == AggFunc::Min {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            let mut best = values[0].clone();
            for v in &values[1..] {
                if order(v, &best) == Some(want) {
                    best = v.clone();
                }
            }
            best
        }
        AggFunc::Count => unreachable!(),
    }
}

fn eval_group(e: &Expr, rels: &[Rel], group: &[&Row]) -> Value {
    match e {
        Expr::Aggregate { func, arg } => aggregate(*func, arg, rels, group),
        Expr::Binary { op, left, right } => arith(
            *op,
            eval_group(left, rels, group),
            eval_group(right, rels, group),
        ),
        Expr::Literal(v) => v.clone(),
        Expr::Column(_) => eval(e, rels, &[group[0]]),
    }
}

/// Nulls last, then the natural order.
fn nulls_last(a: &Value, b: &Value, dir: SortDirection) -> Ordering {
    match (a, b) {
        (Value::Null, Value::Null) => Ordering::Equal,
        (Value::Null, _) => Ordering::Greater,
        (_, Value::Null) => Ordering::Less,
        _ => {
            let o = order(a, b).expect("oracle: comparable sort values");
            if dir == SortDirection::Desc {
                o.reverse()
            } else {
                o
            }
        }
    }
}

/// The rows `step` must produce over `rels`.
pub fn run_step(step: &Step, rels: &[Rel]) -> Vec<Row> {
    let project = |rows: &[&Row]| -> Row {
        step.output
            .iter()
            .map(|o| eval(&o.expr, rels, rows))
            .collect()
    };
    match step.operation {
        Operation::Scan | Operation::Filter => rels[0]
            .table
            .rows()
            .iter()
            .filter(|r| predicate(step).is_none_or(|p| holds(p, rels, &[*r])))
            .map(|r| project(&[r]))
            .collect(),
        Operation::Join => {
            let mut out = Vec::new();
            for l in rels[0].table.rows() {
                for r in rels[1].table.rows() {
                    if predicate(step).is_none_or(|p| holds(p, rels, &[l, r])) {
                        out.push(project(&[l, r]));
                    }
                }
            }
            out
        }
        Operation::Aggregate => {
            let keys: Vec<&Expr> = step
                .output
                .iter()
                .map(|o| &o.expr)
                .filter(|e| !has_aggregate(e))
                .collect();
            let kept: Vec<&Row> = rels[0]
                .table
                .rows()
                .iter()
                .filter(|r| predicate(step).is_none_or(|p| holds(p, rels, &[*r])))
                .collect();
            let mut groups: Vec<(Row, Vec<&Row>)> = Vec::new();
            if keys.is_empty() {
                groups.push((Vec::new(), kept));
            } else {
                for r in kept {
                    let k: Row = keys.iter().map(|e| eval(e, rels, &[r])).collect();
                    match groups.iter_mut().find(|(g, _)| same_row(g, &k)) {
                        Some((_, members)) => members.push(r),
                        None => groups.push((k, vec![r])),
                    }
                }
            }
            groups
                .into_iter()
                .map(|(key, members)| {
                    let mut key = key.into_iter();
                    step.output
                        .iter()
                        .map(|o| {
                            if has_aggregate(&o.expr) {
                                eval_group(&o.expr, rels, &members)
                            } else {
                                key.next().unwrap()
                            }
                        })
                        .collect()
                })
                .collect()
        }
        Operation::Sort | Operation::TopSort => {
            let Some(Condition::Sort(spec)) = &step.condition else {
                panic!("oracle: sort step without ORDER BY");
            };
            let mut pending: Vec<(Row, Row)> = rels[0]
                .table
                .rows()
                .iter()
                .map(|r| {
                    let keys = spec
                        .keys
                        .iter()
                        .map(|k| eval(&k.expr, rels, &[r]))
                        .collect();
                    (keys, project(&[r]))
                })
                .collect();
            let before = |a: &(Row, Row), b: &(Row, Row)| -> bool {
                for (i, k) in spec.keys.iter().enumerate() {
                    match nulls_last(&a.0[i], &b.0[i], k.direction) {
                        Ordering::Equal => {}
                        o => return o == Ordering::Less,
                    }
                }
                for (x, y) in a.1.iter().zip(&b.1) {
                    match nulls_last(x, y, SortDirection::Asc) {
                        Ordering::Equal => {}
                        o => return o == Ordering::Less,
                    }
                }
                false
            };
            let mut out = Vec::new();
            while !pending.is_empty() {
                let mut best = 0;
                for i in 1..pending.len() {
                    if before(&pending[i], &pending[best]) {
                        best = i;
                    }
                }
                out.push(pending.remove(best).1);
            }
            if let Some(k) = spec.limit {
                out.truncate(k as usize);
            }
            out
        }
        Operation::Except | Operation::Intersect | Operation::Union => {
            let (left, right) = (rels[0].table.rows(), rels[1].table.rows());
            let in_right = |r: &Row| right.iter().any(|x| same_row(x, r));
            let candidates: Vec<&Row> = match step.operation {
                Operation::Except => left.iter().filter(|r| !in_right(r)).collect(),
                Operation::Intersect => left.iter().filter(|r| in_right(r)).collect(),
                _ => left.iter().chain(right).collect(),
            };
            let mut out: Vec<Row> = Vec::new();
            for r in candidates {
                if !out.iter().any(|x| same_row(x, r)) {
                    out.push(r.clone());
                }
            }
            out
        }
    }
}

/// Multiset equality of row lists under row identity.
pub fn same_multiset(a: &[Row], b: &[Row]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    'outer: for r in a {
        for (j, s) in b.iter().enumerate() {
            if !used[j] && same_row(r, s) {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Sequence equality under row identity.
pub fn same_sequence(a: &[Row], b: &[Row]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same_row(x, y))
}
