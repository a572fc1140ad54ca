//! Row-level and group-level evaluation of bound expressions.

use std::cmp::Ordering;

use crate::bind::{BoundExpr, BoundPredicate};
use crate::plan::{AggFunc, ArithOp};
use crate::table::{compare_values, Value};

use super::{ErrorClass, ExecError};

pub(crate) fn runtime(message: impl Into<String>) -> ExecError {
    ExecError::new(ErrorClass::RuntimeError, message)
}

/// Evaluates `e` on one row per source (`rows[0]` left, `rows[1]` right).
pub(crate) fn eval(e: &BoundExpr, rows: &[&[Value]]) -> Result<Value, ExecError> {
    match e {
        BoundExpr::Column { source, index, .. } => Ok(rows[*source][*index].clone()),
        BoundExpr::Literal(v) => Ok(v.clone()),
        BoundExpr::Binary {
            op, left, right, ..
        } => {
            let l = eval(left, rows)?;
            let r = eval(right, rows)?;
            arith(*op, &l, &r)
        }
        BoundExpr::Aggregate { func, .. } => Err(runtime(format!(
            "{} evaluated outside a group",
            func.name()
        ))),
    }
}

/// Evaluates an Aggregate-step output over the rows of one group.
pub(crate) fn eval_grouped(e: &BoundExpr, group: &[&[Value]]) -> Result<Value, ExecError> {
    match e {
        BoundExpr::Literal(v) => Ok(v.clone()),
        BoundExpr::Binary {
            op, left, right, ..
        } => {
            let l = eval_grouped(left, group)?;
            let r = eval_grouped(right, group)?;
            arith(*op, &l, &r)
        }
        BoundExpr::Aggregate { func, arg, .. } => {
            let Some(arg) = arg else {
                return Ok(Value::Integer(group.len() as i64));
            };
            let mut values = Vec::with_capacity(group.len());
            for row in group {
                let v = eval(arg, &[row])?;
                if !v.is_null() {
                    values.push(v);
                }
            }
            aggregate(*func, &values)
        }
        BoundExpr::Column { .. } => Err(runtime("bare column inside an aggregate expression")),
    }
}

pub(crate) fn eval_predicate(p: &BoundPredicate, rows: &[&[Value]]) -> Result<bool, ExecError> {
    match p {
        BoundPredicate::True => Ok(true),
        BoundPredicate::Compare { op, left, right } => {
            let l = eval(left, rows)?;
            let r = eval(right, rows)?;
            Ok(compare_values(&l, &r).is_some_and(|o| op.holds(o)))
        }
        BoundPredicate::And(parts) => {
            for q in parts {
                if !eval_predicate(q, rows)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        BoundPredicate::Or(parts) => {
            for q in parts {
                if eval_predicate(q, rows)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn finite(r: f64) -> Result<Value, ExecError> {
    if r.is_finite() {
        Ok(Value::Real(r))
    } else {
        Err(runtime("real arithmetic overflowed"))
    }
}

pub(crate) fn arith(op: ArithOp, l: &Value, r: &Value) -> Result<Value, ExecError> {
    use Value::*;
    if l.is_null() || r.is_null() {
        return Ok(Null);
    }
    let overflow = || runtime(format!("integer overflow in {l} {} {r}", op.symbol()));
    match (l, r) {
        (Integer(a), Integer(b)) => match op {
            ArithOp::Add => a.checked_add(*b).map(Integer).ok_or_else(overflow),
            ArithOp::Sub => a.checked_sub(*b).map(Integer).ok_or_else(overflow),
            ArithOp::Mul => a.checked_mul(*b).map(Integer).ok_or_else(overflow),
            ArithOp::Div => {
                if *b == 0 {
                    Err(runtime("division by zero"))
                } else {
                    finite(*a as f64 / *b as f64)
                }
            }
        },
        (Integer(_) | Real(_), Integer(_) | Real(_)) => {
            let (a, b) = (as_f64(l), as_f64(r));
            match op {
                ArithOp::Add => finite(a + b),
                ArithOp::Sub => finite(a - b),
                ArithOp::Mul => finite(a * b),
                ArithOp::Div if b == 0.0 => Err(runtime("division by zero")),
                ArithOp::Div => finite(a / b),
            }
        }
        (Date(a), Date(b)) if op == ArithOp::Sub => Ok(Integer((*a - *b).num_days())),
        _ => Err(ExecError::new(
            ErrorClass::TypeError,
            format!("cannot evaluate {l:?} {} {r:?}", op.symbol()),
        )),
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Integer(i) => *i as f64,
        Value::Real(r) => *r,
        _ => unreachable!("numeric value expected"),
    }
}

/// Compensated (Kahan-Babuska-Neumaier) summation, the scheme SQLite uses for
/// SUM and AVG over reals, so both backends round identically.
#[derive(Default)]
struct Kbn {
    sum: f64,
    err: f64,
}

impl Kbn {
    fn add(&mut self, r: f64) {
        let s = self.sum;
        let t = s + r;
        if s.abs() > r.abs() {
            self.err += (s - t) + r;
        } else {
            self.err += (r - t) + s;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        if self.err.is_finite() {
            self.sum + self.err
        } else {
            self.sum
        }
    }
}

enum Sum {
    Int(i64),
    Real(f64),
}

fn sum(values: &[Value]) -> Result<Sum, ExecError> {
    if values.iter().all(|v| matches!(v, Value::Integer(_))) {
        let mut acc: i64 = 0;
        for v in values {
            if let Value::Integer(i) = v {
                acc = acc
                    .checked_add(*i)
                    .ok_or_else(|| runtime("integer overflow in SUM"))?;
            }
        }
        return Ok(Sum::Int(acc));
    }
    let mut k = Kbn::default();
    for v in values {
        match v {
            Value::Integer(i) => k.add(*i as f64),
            Value::Real(r) => k.add(*r),
            other => return Err(runtime(format!("cannot sum {other:?}"))),
        }
    }
    Ok(Sum::Real(k.total()))
}

/// `values` holds the non-null argument values of one group.
fn aggregate(func: AggFunc, values: &[Value]) -> Result<Value, ExecError> {
    match func {
        AggFunc::Count => Ok(Value::Integer(values.len() as i64)),
        _ if values.is_empty() => Ok(Value::Null),
        AggFunc::Sum => match sum(values)? {
            Sum::Int(i) => Ok(Value::Integer(i)),
            Sum::Real(r) => finite(r),
        },
        AggFunc::Avg => {
            let total = match sum(values)? {
                Sum::Int(i) => i as f64,
                Sum::Real(r) => r,
            };
            finite(total / values.len() as f64)
        }
        AggFunc::Min | AggFunc::Max => {
            let want = if func == AggFunc::Min {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            let mut best = &values[0];
            for v in &values[1..] {
                match compare_values(v, best) {
                    Some(o) if o == want => best = v,
                    Some(_) => {}
                    None => {
                        return Err(runtime(format!(
                            "{} over incomparable values {v:?} and {best:?}",
                            func.name()
                        )))
                    }
                }
            }
            Ok(best.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_rules() {
        use Value::*;
        assert_eq!(
            arith(ArithOp::Add, &Integer(2), &Integer(3)).unwrap(),
            Integer(5)
        );
        assert_eq!(
            arith(ArithOp::Div, &Integer(7), &Integer(2)).unwrap(),
            Real(3.5)
        );
        assert_eq!(
            arith(ArithOp::Mul, &Integer(2), &Real(1.5)).unwrap(),
            Real(3.0)
        );
        assert_eq!(arith(ArithOp::Sub, &Null, &Integer(1)).unwrap(), Null);
        let d = |s| Date(crate::table::parse_date(s).unwrap());
        assert_eq!(
            arith(ArithOp::Sub, &d("2021-03-01"), &d("2021-02-01")).unwrap(),
            Integer(28)
        );
        assert_eq!(
            arith(ArithOp::Div, &Integer(1), &Integer(0))
                .unwrap_err()
                .class,
            ErrorClass::RuntimeError
        );
        assert_eq!(
            arith(ArithOp::Add, &Integer(i64::MAX), &Integer(1))
                .unwrap_err()
                .class,
            ErrorClass::RuntimeError
        );
        assert_eq!(
            arith(ArithOp::Add, &d("2021-03-01"), &Integer(1))
                .unwrap_err()
                .class,
            ErrorClass::TypeError
        );
    }

    #[test]
    fn aggregates_over_empty_and_values() {
        assert_eq!(aggregate(AggFunc::Avg, &[]).unwrap(), Value::Null);
        assert_eq!(aggregate(AggFunc::Sum, &[]).unwrap(), Value::Null);
        assert_eq!(aggregate(AggFunc::Count, &[]).unwrap(), Value::Integer(0));
        let durations = [Value::Integer(10), Value::Integer(20)];
        assert_eq!(
            aggregate(AggFunc::Avg, &durations).unwrap(),
            Value::Real(15.0)
        );
        assert_eq!(
            aggregate(AggFunc::Max, &durations).unwrap(),
            Value::Integer(20)
        );
        let texts = [Value::Text("b".into()), Value::Text("a".into())];
        assert_eq!(
            aggregate(AggFunc::Min, &texts).unwrap(),
            Value::Text("a".into())
        );
    }

    #[test]
    fn compensated_sum_recovers_lost_bits() {
        let values = [Value::Real(1e100), Value::Real(1.0), Value::Real(-1e100)];
        assert_eq!(aggregate(AggFunc::Sum, &values).unwrap(), Value::Real(1.0));
    }
}
