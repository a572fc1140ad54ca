//! Exhaustive path enumeration over a plan's step dependencies.

use std::collections::BTreeSet;

use spage_core::plan::Plan;

/// Every root-to-sink path, as lists of step ids. Roots read only input
/// tables; sinks are read by no step.
pub fn all_paths(plan: &Plan) -> Vec<Vec<u32>> {
    let readers = |id: u32| -> Vec<u32> {
        plan.steps()
            .iter()
            .filter(|s| s.step_dependencies().any(|d| d == id))
            .map(|s| s.id)
            .collect()
    };
    fn walk(
        id: u32,
        path: &mut Vec<u32>,
        readers: &dyn Fn(u32) -> Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        path.push(id);
        let next = readers(id);
        if next.is_empty() {
            out.push(path.clone());
        }
        for n in next {
            walk(n, path, readers, out);
        }
        path.pop();
    }
    let mut out = Vec::new();
    for root in plan
        .steps()
        .iter()
        .filter(|s| s.step_dependencies().next().is_none())
    {
        walk(root.id, &mut Vec::new(), &readers, &mut out);
    }
    out
}

/// Number of steps on the longest dependency chain.
pub fn longest_path(plan: &Plan) -> usize {
    all_paths(plan).iter().map(Vec::len).max().unwrap_or(0)
}

/// Steps that read only input tables.
pub fn root_count(plan: &Plan) -> usize {
    plan.steps()
        .iter()
        .filter(|s| s.step_dependencies().next().is_none())
        .count()
}

/// `1 - avg(longest path) / avg(step count)` over a corpus.
pub fn reduction(plans: &[Plan]) -> f64 {
    let n = plans.len() as f64;
    let depth: usize = plans.iter().map(longest_path).sum();
    let steps: usize = plans.iter().map(Plan::len).sum();
    1.0 - (depth as f64 / n) / (steps as f64 / n)
}

/// `seeds` plus every step that reads one of them, directly or transitively.
pub fn downstream_closure(plan: &Plan, seeds: impl IntoIterator<Item = u32>) -> BTreeSet<u32> {
    let mut out: BTreeSet<u32> = seeds.into_iter().collect();
    loop {
        let before = out.len();
        for s in plan.steps() {
            if s.step_dependencies().any(|d| out.contains(&d)) {
                out.insert(s.id);
            }
        }
        if out.len() == before {
            return out;
        }
    }
}
