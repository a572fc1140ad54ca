//! Step dependency DAG, wavefront layering and execution-cycle accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::plan::{Operation, Plan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanGraph {
    pub nodes: Vec<u32>,
    pub edges: BTreeSet<(u32, u32)>,
    pub wavefronts: Vec<Vec<u32>>,
    pub depth: usize,
    operations: BTreeMap<u32, Operation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleMode {
    Sequential,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle statistics need at least one plan")]
    EmptyInput,
}

/// Edge `(i, j)` whenever step `j` reads `Step<i>`; wavefronts are Kahn layers.
pub fn build_graph(plan: &Plan) -> PlanGraph {
    let nodes: Vec<u32> = plan.steps().iter().map(|s| s.id).collect();
    let edges: BTreeSet<(u32, u32)> = plan
        .steps()
        .iter()
        .flat_map(|s| s.step_dependencies().map(move |d| (d, s.id)))
        .collect();
    let mut indegree: BTreeMap<u32, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut successors: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(from, to) in &edges {
        *indegree.get_mut(&to).expect("edge target is a node") += 1;
        successors.entry(from).or_default().push(to);
    }
    let mut wavefronts = Vec::new();
    let mut current: Vec<u32> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for n in &current {
            for s in successors.get(n).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(s).expect("successor is a node");
                *d -= 1;
                if *d == 0 {
                    next.push(*s);
                }
            }
        }
        next.sort_unstable();
        wavefronts.push(std::mem::replace(&mut current, next));
    }
    let depth = wavefronts.len();
    PlanGraph {
        nodes,
        edges,
        wavefronts,
        depth,
        operations: plan.steps().iter().map(|s| (s.id, s.operation)).collect(),
    }
}

impl PlanGraph {
    pub fn predecessors(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        self.edges
            .iter()
            .filter(move |(_, to)| *to == id)
            .map(|(from, _)| *from)
    }

    /// Graphviz text; nodes are labelled `Step<id>:<operation>`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph plan {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let op = self.operations.get(n).map(|o| o.name()).unwrap_or("?");
            let _ = writeln!(out, "  s{n} [label=\"Step{n}:{op}\"];");
        }
        for (from, to) in &self.edges {
            let _ = writeln!(out, "  s{from} -> s{to};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn execution_cycles(graph: &PlanGraph, mode: CycleMode) -> usize {
    match mode {
        CycleMode::Sequential => graph.nodes.len(),
        CycleMode::Graph => graph.depth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleStats {
    pub avg_sequential: f64,
    pub avg_graph: f64,
    /// `1 - avg_graph / avg_sequential`.
    pub reduction: f64,
}

pub fn cycle_stats(graphs: &[PlanGraph]) -> Result<CycleStats, GraphError> {
    if graphs.is_empty() {
        return Err(GraphError::EmptyInput);
    }
    let n = graphs.len() as f64;
    let seq: usize = graphs
        .iter()
        .map(|g| execution_cycles(g, CycleMode::Sequential))
        .sum();
    let par: usize = graphs
        .iter()
        .map(|g| execution_cycles(g, CycleMode::Graph))
        .sum();
    let avg_sequential = seq as f64 / n;
    let avg_graph = par as f64 / n;
    Ok(CycleStats {
        avg_sequential,
        avg_graph,
        reduction: 1.0 - avg_graph / avg_sequential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;

    const PETS: &str = r#"{"steps": [
        {"id": 1, "operation": "Scan", "source": ["Has_Pet"], "condition": "Has_Pet = \"Yes\"", "output": ["ID"]},
        {"id": 2, "operation": "Scan", "source": ["Student"], "condition": null, "output": ["ID", "Age"]},
        {"id": 3, "operation": "Join", "source": ["Step1", "Step2"], "condition": "Step1.ID = Step2.ID", "output": ["Step2.Age"]}
    ]}"#;

    fn chain(n: u32) -> Plan {
        let mut steps = vec![
            r#"{"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"]}"#
                .to_string(),
        ];
        for i in 2..=n {
            steps.push(format!(
                r#"{{"id":{i},"operation":"Filter","source":["Step{}"],"condition":null,"output":["a"]}}"#,
                i - 1
            ));
        }
        parse_plan(&format!(r#"{{"steps":[{}]}}"#, steps.join(","))).unwrap()
    }

    #[test]
    fn pet_plan_has_two_wavefronts() {
        let g = build_graph(&parse_plan(PETS).unwrap());
        assert_eq!(g.edges, BTreeSet::from([(1, 3), (2, 3)]));
        assert_eq!(g.wavefronts, vec![vec![1, 2], vec![3]]);
        assert_eq!(execution_cycles(&g, CycleMode::Sequential), 3);
        assert_eq!(execution_cycles(&g, CycleMode::Graph), 2);
        let stats = cycle_stats(&[g]).unwrap();
        assert_eq!((stats.avg_sequential, stats.avg_graph), (3.0, 2.0));
        assert!((stats.reduction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_and_chain() {
        let g = build_graph(&chain(1));
        assert_eq!(g.wavefronts, vec![vec![1]]);
        assert_eq!(g.depth, 1);
        let g = build_graph(&chain(4));
        assert_eq!(g.depth, 4);
        assert_eq!(execution_cycles(&g, CycleMode::Sequential), 4);
        let two = [build_graph(&chain(2)), build_graph(&chain(2))];
        let s = cycle_stats(&two).unwrap();
        assert_eq!(
            (s.avg_sequential, s.avg_graph, s.reduction),
            (2.0, 2.0, 0.0)
        );
        assert_eq!(cycle_stats(&[]), Err(GraphError::EmptyInput));
    }

    #[test]
    fn dot_labels() {
        let dot = build_graph(&parse_plan(PETS).unwrap()).to_dot();
        assert!(dot.contains("s1 [label=\"Step1:Scan\"]"));
        assert!(dot.contains("s3 [label=\"Step3:Join\"]"));
        assert!(dot.contains("s2 -> s3;"));
    }
}
