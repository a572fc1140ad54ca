//! The structured plan IR: steps over nine table operations, the condition and
//! output expression language, and the canonical JSON plan file.

mod display;
mod file;
mod parser;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Value;

pub use file::{parse_plan, parse_step, serialize_plan, serialize_step};
pub use parser::{parse_output_expr, parse_predicate, parse_sort_spec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("syntax error at {line}:{col} in {context}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        context: String,
    },
    #[error("structure error in step {step:?}: {message}")]
    Structure { step: Option<u32>, message: String },
    #[error("step {step} references Step{target}, which is not an earlier step")]
    Reference { step: u32, target: u32 },
    #[error("duplicate step id {0}")]
    DuplicateId(u32),
}

impl PlanError {
    pub(crate) fn structure(step: impl Into<Option<u32>>, message: impl Into<String>) -> Self {
        PlanError::Structure {
            step: step.into(),
            message: message.into(),
        }
    }

    /// Stable short name for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            PlanError::Syntax { .. } => "SyntaxError",
            PlanError::Structure { .. } => "StructureError",
            PlanError::Reference { .. } => "ReferenceError",
            PlanError::DuplicateId(_) => "DuplicateIdError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operation {
    Scan,
    Aggregate,
    Filter,
    Sort,
    TopSort,
    Join,
    Except,
    Intersect,
    Union,
}

impl Operation {
    pub const ALL: [Operation; 9] = [
        Operation::Scan,
        Operation::Aggregate,
        Operation::Filter,
        Operation::Sort,
        Operation::TopSort,
        Operation::Join,
        Operation::Except,
        Operation::Intersect,
        Operation::Union,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operation::Scan => "Scan",
            Operation::Aggregate => "Aggregate",
            Operation::Filter => "Filter",
            Operation::Sort => "Sort",
            Operation::TopSort => "TopSort",
            Operation::Join => "Join",
            Operation::Except => "Except",
            Operation::Intersect => "Intersect",
            Operation::Union => "Union",
        }
    }

    /// Exact-case lookup.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Operation::Join | Operation::Except | Operation::Intersect | Operation::Union => 2,
            _ => 1,
        }
    }

    pub fn is_set_op(self) -> bool {
        matches!(
            self,
            Operation::Except | Operation::Intersect | Operation::Union
        )
    }

    pub fn is_sort(self) -> bool {
        matches!(self, Operation::Sort | Operation::TopSort)
    }

    pub fn description(self) -> &'static str {
        match self {
            Operation::Scan => "Scan all table rows.",
            Operation::Aggregate => "Group and aggregate tuples.",
            Operation::Filter => "Remove non-matching tuples.",
            Operation::Sort => "Sort stream by expression.",
            Operation::TopSort => "Select top-K tuples.",
            Operation::Join => "Logically join two streams.",
            Operation::Except => "Compute set difference.",
            Operation::Intersect => "Compute set intersection.",
            Operation::Union => "Compute set union.",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a step reads from: an input table or an earlier step's result.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SourceRef {
    Table(String),
    Step(u32),
}

impl SourceRef {
    /// `Step<k>` (case-insensitive `step` prefix, k ≥ 1) is a step reference;
    /// any other identifier names an input table.
    pub fn parse(text: &str) -> Option<SourceRef> {
        if let Some(id) = parse_step_token(text) {
            return Some(SourceRef::Step(id));
        }
        crate::table::is_identifier(text).then(|| SourceRef::Table(text.to_string()))
    }

    /// Case-insensitive match for table names.
    pub fn matches(&self, other: &SourceRef) -> bool {
        match (self, other) {
            (SourceRef::Table(a), SourceRef::Table(b)) => a.to_lowercase() == b.to_lowercase(),
            (SourceRef::Step(a), SourceRef::Step(b)) => a == b,
            _ => false,
        }
    }
}

pub(crate) fn parse_step_token(text: &str) -> Option<u32> {
    let prefix = text.get(..4)?;
    if !prefix.eq_ignore_ascii_case("step") {
        return None;
    }
    let digits = &text[4..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRef::Table(name) => f.write_str(name),
            SourceRef::Step(id) => write!(f, "Step{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "COUNT" => Some(AggFunc::Count),
            "SUM" => Some(AggFunc::Sum),
            "AVG" => Some(AggFunc::Avg),
            "MIN" => Some(AggFunc::Min),
            "MAX" => Some(AggFunc::Max),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub qualifier: Option<SourceRef>,
    pub name: String,
}

impl ColumnRef {
    pub fn bare(name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: None,
            name: name.into(),
        }
    }

    pub fn qualified(qualifier: SourceRef, name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: Some(qualifier),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggArg {
    Star,
    Expr(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Value),
    Binary {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Aggregate {
        func: AggFunc,
        arg: AggArg,
    },
}

impl Expr {
    pub fn column(name: impl Into<String>) -> Expr {
        Expr::Column(ColumnRef::bare(name))
    }

    pub fn binary(op: ArithOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn contains_aggregate(&self) -> bool {
        match self {
            Expr::Aggregate { .. } => true,
            Expr::Binary { left, right, .. } => {
                left.contains_aggregate() || right.contains_aggregate()
            }
            _ => false,
        }
    }

    /// True when an aggregate call appears inside another aggregate's argument.
    pub fn has_nested_aggregate(&self) -> bool {
        match self {
            Expr::Aggregate {
                arg: AggArg::Expr(inner),
                ..
            } => inner.contains_aggregate(),
            Expr::Binary { left, right, .. } => {
                left.has_nested_aggregate() || right.has_nested_aggregate()
            }
            _ => false,
        }
    }

    pub fn column_refs(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            Expr::Column(c) => out.push(c),
            Expr::Literal(_) => {}
            Expr::Binary { left, right, .. } => {
                left.collect_refs(out);
                right.collect_refs(out);
            }
            Expr::Aggregate { arg, .. } => {
                if let AggArg::Expr(e) = arg {
                    e.collect_refs(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare {
        op: CompareOp,
        left: Expr,
        right: Expr,
    },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    True,
}

impl Predicate {
    pub fn compare(op: CompareOp, left: Expr, right: Expr) -> Predicate {
        Predicate::Compare { op, left, right }
    }

    /// Conjunction in canonical form: nested conjunctions are spliced in and a
    /// single operand stands alone.
    pub fn and(parts: Vec<Predicate>) -> Predicate {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Predicate::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Predicate::True,
            1 => flat.pop().unwrap(),
            _ => Predicate::And(flat),
        }
    }

    pub fn or(parts: Vec<Predicate>) -> Predicate {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Predicate::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Predicate::True,
            1 => flat.pop().unwrap(),
            _ => Predicate::Or(flat),
        }
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Predicate::Compare { left, right, .. } => vec![left, right],
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().flat_map(|p| p.exprs()).collect(),
            Predicate::True => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub expr: Expr,
    pub direction: SortDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortSpec {
    pub keys: Vec<SortKey>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputColumn {
    pub expr: Expr,
    pub alias: Option<String>,
}

impl OutputColumn {
    pub fn column(name: impl Into<String>) -> Self {
        OutputColumn {
            expr: Expr::column(name),
            alias: None,
        }
    }

    pub fn aliased(expr: Expr, alias: impl Into<String>) -> Self {
        OutputColumn {
            expr,
            alias: Some(alias.into()),
        }
    }

    /// Result column name: the alias, else the referenced column's name.
    pub fn output_name(&self) -> Option<&str> {
        match (&self.alias, &self.expr) {
            (Some(a), _) => Some(a),
            (None, Expr::Column(c)) => Some(&c.name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Predicate(Predicate),
    Sort(SortSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub id: u32,
    pub operation: Operation,
    pub sources: Vec<SourceRef>,
    pub condition: Option<Condition>,
    pub output: Vec<OutputColumn>,
}

impl Step {
    pub fn predicate(&self) -> Option<&Predicate> {
        match &self.condition {
            Some(Condition::Predicate(p)) => Some(p),
            _ => None,
        }
    }

    pub fn sort_spec(&self) -> Option<&SortSpec> {
        match &self.condition {
            Some(Condition::Sort(s)) => Some(s),
            _ => None,
        }
    }

    pub fn step_dependencies(&self) -> impl Iterator<Item = u32> + '_ {
        self.sources.iter().filter_map(|s| match s {
            SourceRef::Step(id) => Some(*id),
            SourceRef::Table(_) => None,
        })
    }

    /// Arity, condition kind and output-shape rules for a single step.
    pub fn check_structure(&self) -> Result<(), PlanError> {
        let id = self.id;
        let op = self.operation;
        if id == 0 {
            return Err(PlanError::structure(None, "step ids start at 1"));
        }
        if self.sources.len() != op.arity() {
            return Err(PlanError::structure(
                id,
                format!(
                    "{op} takes exactly {} source(s), got {}",
                    op.arity(),
                    self.sources.len()
                ),
            ));
        }
        match (&self.condition, op) {
            (Some(Condition::Sort(spec)), Operation::Sort) if spec.limit.is_some() => {
                return Err(PlanError::structure(id, "Sort takes no LIMIT; use TopSort"));
            }
            (Some(Condition::Sort(spec)), Operation::TopSort) if spec.limit.is_none() => {
                return Err(PlanError::structure(id, "TopSort needs a LIMIT"));
            }
            (Some(Condition::Sort(spec)), o) if o.is_sort() => {
                if spec.keys.is_empty() {
                    return Err(PlanError::structure(id, "ORDER BY needs at least one key"));
                }
                if spec.limit == Some(0) {
                    return Err(PlanError::structure(id, "LIMIT must be positive"));
                }
            }
            (_, o) if o.is_sort() => {
                return Err(PlanError::structure(
                    id,
                    format!("{o} needs an ORDER BY condition"),
                ));
            }
            (Some(Condition::Sort(_)), o) => {
                return Err(PlanError::structure(
                    id,
                    format!("{o} takes a predicate condition, not ORDER BY"),
                ));
            }
            (Some(Condition::Predicate(_)), o) if o.is_set_op() => {
                return Err(PlanError::structure(id, format!("{o} takes no condition")));
            }
            _ => {}
        }
        if op.is_set_op() {
            if !self.output.is_empty() {
                return Err(PlanError::structure(
                    id,
                    format!("{op} inherits its schema; output must be empty"),
                ));
            }
        } else if self.output.is_empty() {
            return Err(PlanError::structure(id, "output must not be empty"));
        }
        // Missing aliases are left to the validator (MissingAlias); the text
        // grammar already refuses them.
        for out in &self.output {
            if out.expr.has_nested_aggregate() {
                return Err(PlanError::structure(id, "aggregate calls cannot nest"));
            }
        }
        if let Some(p) = self.predicate() {
            if p.exprs().iter().any(|e| e.contains_aggregate()) {
                return Err(PlanError::structure(
                    id,
                    "conditions cannot contain aggregates",
                ));
            }
        }
        if let Some(s) = self.sort_spec() {
            if s.keys.iter().any(|k| k.expr.contains_aggregate()) {
                return Err(PlanError::structure(
                    id,
                    "sort keys cannot contain aggregates",
                ));
            }
        }
        Ok(())
    }
}

/// Ordered steps with ids `1..=n`, backward-only step references and exactly
/// one terminal step.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    steps: Vec<Step>,
}

impl Plan {
    pub fn new(steps: Vec<Step>) -> Result<Plan, PlanError> {
        if steps.is_empty() {
            return Err(PlanError::structure(None, "a plan needs at least one step"));
        }
        let mut seen = HashSet::new();
        for step in &steps {
            if !seen.insert(step.id) {
                return Err(PlanError::DuplicateId(step.id));
            }
        }
        for (i, step) in steps.iter().enumerate() {
            let expected = i as u32 + 1;
            if step.id != expected {
                return Err(PlanError::structure(
                    step.id,
                    format!("step ids must be consecutive from 1; expected {expected}"),
                ));
            }
        }
        for step in &steps {
            step.check_structure()?;
            for target in step.step_dependencies() {
                if target >= step.id {
                    return Err(PlanError::Reference {
                        step: step.id,
                        target,
                    });
                }
            }
        }
        let referenced: BTreeSet<u32> = steps.iter().flat_map(|s| s.step_dependencies()).collect();
        let terminals: Vec<u32> = steps
            .iter()
            .map(|s| s.id)
            .filter(|id| !referenced.contains(id))
            .collect();
        if terminals.len() != 1 {
            return Err(PlanError::structure(
                None,
                format!(
                    "a plan needs exactly one terminal step, found {} ({:?})",
                    terminals.len(),
                    terminals
                ),
            ));
        }
        Ok(Plan { steps })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, id: u32) -> Option<&Step> {
        id.checked_sub(1).and_then(|i| self.steps.get(i as usize))
    }

    /// The unique step no other step reads from.
    pub fn terminal_id(&self) -> u32 {
        let referenced: BTreeSet<u32> = self
            .steps
            .iter()
            .flat_map(|s| s.step_dependencies())
            .collect();
        self.steps
            .iter()
            .map(|s| s.id)
            .find(|id| !referenced.contains(id))
            .expect("plan invariant: one terminal step")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(id: u32, src: SourceRef, cols: &[&str]) -> Step {
        Step {
            id,
            operation: Operation::Scan,
            sources: vec![src],
            condition: None,
            output: cols.iter().map(|c| OutputColumn::column(*c)).collect(),
        }
    }

    #[test]
    fn source_ref_parsing() {
        assert_eq!(SourceRef::parse("Step3"), Some(SourceRef::Step(3)));
        assert_eq!(SourceRef::parse("step12"), Some(SourceRef::Step(12)));
        assert_eq!(
            SourceRef::parse("Steps"),
            Some(SourceRef::Table("Steps".into()))
        );
        assert_eq!(
            SourceRef::parse("Step0"),
            Some(SourceRef::Table("Step0".into()))
        );
        assert_eq!(SourceRef::parse("a b"), None);
    }

    #[test]
    fn forward_reference_is_rejected() {
        let steps = vec![
            scan(1, SourceRef::Table("T".into()), &["a"]),
            scan(2, SourceRef::Step(3), &["a"]),
            scan(3, SourceRef::Step(1), &["a"]),
        ];
        assert_eq!(
            Plan::new(steps),
            Err(PlanError::Reference { step: 2, target: 3 })
        );
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let steps = vec![
            scan(1, SourceRef::Table("T".into()), &["a"]),
            scan(1, SourceRef::Table("T".into()), &["a"]),
        ];
        assert_eq!(Plan::new(steps), Err(PlanError::DuplicateId(1)));
    }

    #[test]
    fn two_terminals_are_rejected() {
        let steps = vec![
            scan(1, SourceRef::Table("T".into()), &["a"]),
            scan(2, SourceRef::Table("U".into()), &["a"]),
        ];
        assert!(matches!(Plan::new(steps), Err(PlanError::Structure { .. })));
    }

    #[test]
    fn join_needs_two_sources() {
        let mut step = scan(1, SourceRef::Table("T".into()), &["a"]);
        step.operation = Operation::Join;
        assert!(matches!(
            step.check_structure(),
            Err(PlanError::Structure { .. })
        ));
    }

    #[test]
    fn set_ops_need_empty_output() {
        let step = Step {
            id: 1,
            operation: Operation::Union,
            sources: vec![SourceRef::Table("A".into()), SourceRef::Table("B".into())],
            condition: None,
            output: vec![OutputColumn::column("x")],
        };
        assert!(step.check_structure().is_err());
    }

    #[test]
    fn topsort_needs_limit() {
        let step = Step {
            id: 1,
            operation: Operation::TopSort,
            sources: vec![SourceRef::Table("A".into())],
            condition: Some(Condition::Sort(SortSpec {
                keys: vec![SortKey {
                    expr: Expr::column("x"),
                    direction: SortDirection::Desc,
                }],
                limit: None,
            })),
            output: vec![OutputColumn::column("x")],
        };
        assert!(step.check_structure().is_err());
    }

    #[test]
    fn predicate_constructors_flatten() {
        let c = || Predicate::compare(CompareOp::Eq, Expr::column("a"), Expr::column("b"));
        let p = Predicate::and(vec![Predicate::and(vec![c(), c()]), c()]);
        assert_eq!(p, Predicate::And(vec![c(), c(), c()]));
        assert_eq!(Predicate::or(vec![c()]), c());
    }

    #[test]
    fn nine_operations_round_trip_by_name() {
        for op in Operation::ALL {
            assert_eq!(Operation::from_name(op.name()), Some(op));
        }
        assert_eq!(Operation::from_name("scan"), None);
    }
}
