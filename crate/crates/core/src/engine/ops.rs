//! The nine operators over bound steps.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use crate::bind::{BoundExpr, BoundPredicate, BoundStep};
use crate::plan::{CompareOp, Operation, SortDirection};
use crate::table::{compare_values, row_key, sort_order, Row, Table, Value, ValueKey};

use super::eval::{eval, eval_grouped, eval_predicate, runtime};
use super::{Deadline, ExecError};

pub(crate) fn run(
    bound: &BoundStep,
    sources: &[&Table],
    deadline: Deadline,
) -> Result<Vec<Row>, ExecError> {
    match bound.operation {
        Operation::Scan | Operation::Filter => select(bound, sources[0], deadline),
        Operation::Aggregate => group(bound, sources[0], deadline),
        Operation::Sort | Operation::TopSort => sort(bound, sources[0], deadline),
        Operation::Join => join(bound, sources[0], sources[1], deadline),
        Operation::Except | Operation::Intersect | Operation::Union => {
            Ok(set_op(bound.operation, sources[0], sources[1]))
        }
    }
}

fn project(outputs: &[BoundExpr], rows: &[&[Value]]) -> Result<Row, ExecError> {
    outputs.iter().map(|e| eval(e, rows)).collect()
}

fn passes(p: &Option<BoundPredicate>, rows: &[&[Value]]) -> Result<bool, ExecError> {
    match p {
        Some(p) => eval_predicate(p, rows),
        None => Ok(true),
    }
}

fn select(bound: &BoundStep, src: &Table, deadline: Deadline) -> Result<Vec<Row>, ExecError> {
    let mut out = Vec::new();
    for row in src.rows() {
        deadline.check()?;
        let rows = [row.as_slice()];
        if passes(&bound.predicate, &rows)? {
            out.push(project(&bound.outputs, &rows)?);
        }
    }
    Ok(out)
}

/// Groups by the non-aggregate outputs, in order of first appearance.
fn group(bound: &BoundStep, src: &Table, deadline: Deadline) -> Result<Vec<Row>, ExecError> {
    let mut index: HashMap<Vec<ValueKey>, usize> = HashMap::new();
    let mut groups: Vec<(Vec<Value>, Vec<&[Value]>)> = Vec::new();
    if bound.group_keys.is_empty() {
        groups.push((Vec::new(), Vec::new()));
    }
    for row in src.rows() {
        deadline.check()?;
        let rows = [row.as_slice()];
        if !passes(&bound.predicate, &rows)? {
            continue;
        }
        let keys: Vec<Value> = bound
            .group_keys
            .iter()
            .map(|&i| eval(&bound.outputs[i], &rows))
            .collect::<Result<_, _>>()?;
        let slot = if bound.group_keys.is_empty() {
            0
        } else {
            match index.entry(row_key(&keys)) {
                Entry::Occupied(e) => *e.get(),
                Entry::Vacant(e) => {
                    groups.push((keys, Vec::new()));
                    *e.insert(groups.len() - 1)
                }
            }
        };
        groups[slot].1.push(row.as_slice());
    }
    let mut out = Vec::with_capacity(groups.len());
    for (keys, members) in groups {
        deadline.check()?;
        let mut keys = keys.into_iter();
        let row = bound
            .outputs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if bound.group_keys.contains(&i) {
                    Ok(keys.next().expect("one key per group column"))
                } else {
                    eval_grouped(e, &members)
                }
            })
            .collect::<Result<Row, _>>()?;
        out.push(row);
    }
    Ok(out)
}

fn key_order(a: &Value, b: &Value, dir: SortDirection) -> Result<Ordering, ExecError> {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ok(Ordering::Equal),
        (true, false) => Ok(Ordering::Greater),
        (false, true) => Ok(Ordering::Less),
        (false, false) => {
            let o = compare_values(a, b)
                .ok_or_else(|| runtime(format!("cannot order {a:?} against {b:?}")))?;
            Ok(match dir {
                SortDirection::Asc => o,
                SortDirection::Desc => o.reverse(),
            })
        }
    }
}

/// Sorts by the keys with Nulls last in either direction; rows whose keys tie
/// are ordered by their projected output (ascending, Nulls last), so the
/// cut made by LIMIT never depends on input order.
fn sort(bound: &BoundStep, src: &Table, deadline: Deadline) -> Result<Vec<Row>, ExecError> {
    let mut entries: Vec<(Vec<Value>, Row)> = Vec::with_capacity(src.row_count());
    for row in src.rows() {
        deadline.check()?;
        let rows = [row.as_slice()];
        let keys = bound
            .sort_keys
            .iter()
            .map(|k| eval(&k.expr, &rows))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push((keys, project(&bound.outputs, &rows)?));
    }
    let failure: Cell<Option<ExecError>> = Cell::new(None);
    entries.sort_by(|(ka, ra), (kb, rb)| {
        let fold = || -> Result<Ordering, ExecError> {
            for (i, key) in bound.sort_keys.iter().enumerate() {
                let o = key_order(&ka[i], &kb[i], key.direction)?;
                if o != Ordering::Equal {
                    return Ok(o);
                }
            }
            for (a, b) in ra.iter().zip(rb) {
                let o = sort_order(a, b)
                    .map_err(|(a, b)| runtime(format!("cannot order {a:?} against {b:?}")))?;
                if o != Ordering::Equal {
                    return Ok(o);
                }
            }
            Ok(Ordering::Equal)
        };
        fold().unwrap_or_else(|e| {
            failure.set(Some(e));
            Ordering::Equal
        })
    });
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let limit = bound
        .limit
        .map_or(usize::MAX, |k| k.min(usize::MAX as u64) as usize);
    Ok(entries.into_iter().take(limit).map(|(_, r)| r).collect())
}

/// A single equality whose sides each read one distinct source and share a
/// type can use a hash table. Returns (left-side expr, right-side expr).
fn hash_keys(p: &Option<BoundPredicate>) -> Option<(&BoundExpr, &BoundExpr)> {
    let Some(BoundPredicate::Compare {
        op: CompareOp::Eq,
        left,
        right,
    }) = p
    else {
        return None;
    };
    if left.ty() != right.ty() {
        return None;
    }
    let used = |e: &BoundExpr| {
        let mut s = HashSet::new();
        e.sources_used(&mut s);
        s
    };
    let (l, r) = (used(left), used(right));
    if l == HashSet::from([0]) && r == HashSet::from([1]) {
        Some((left, right))
    } else if l == HashSet::from([1]) && r == HashSet::from([0]) {
        Some((right, left))
    } else {
        None
    }
}

/// Inner join; pairs are emitted in (left row, right row) order whichever
/// strategy runs.
fn join(
    bound: &BoundStep,
    left: &Table,
    right: &Table,
    deadline: Deadline,
) -> Result<Vec<Row>, ExecError> {
    let mut out = Vec::new();
    if let Some((lk, rk)) = hash_keys(&bound.predicate) {
        let mut buckets: HashMap<ValueKey, Vec<usize>> = HashMap::new();
        for (j, row) in right.rows().iter().enumerate() {
            deadline.check()?;
            let k = eval(rk, &[&[], row.as_slice()])?;
            if !k.is_null() {
                buckets.entry(k.key()).or_default().push(j);
            }
        }
        for lrow in left.rows() {
            deadline.check()?;
            let k = eval(lk, &[lrow.as_slice(), &[]])?;
            if k.is_null() {
                continue;
            }
            for &j in buckets.get(&k.key()).map(Vec::as_slice).unwrap_or_default() {
                let rows = [lrow.as_slice(), right.rows()[j].as_slice()];
                out.push(project(&bound.outputs, &rows)?);
            }
        }
        return Ok(out);
    }
    for lrow in left.rows() {
        for rrow in right.rows() {
            deadline.check()?;
            let rows = [lrow.as_slice(), rrow.as_slice()];
            if passes(&bound.predicate, &rows)? {
                out.push(project(&bound.outputs, &rows)?);
            }
        }
    }
    Ok(out)
}

/// Set semantics over whole rows; the result lists distinct rows in order of
/// first appearance (left before right for Union).
fn set_op(op: Operation, left: &Table, right: &Table) -> Vec<Row> {
    let right_keys: HashSet<Vec<ValueKey>> = right.rows().iter().map(|r| row_key(r)).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in left.rows() {
        let key = row_key(row);
        let keep = match op {
            Operation::Except => !right_keys.contains(&key),
            Operation::Intersect => right_keys.contains(&key),
            _ => true,
        };
        if keep && seen.insert(key) {
            out.push(row.clone());
        }
    }
    if op == Operation::Union {
        for row in right.rows() {
            if seen.insert(row_key(row)) {
                out.push(row.clone());
            }
        }
    }
    out
}
