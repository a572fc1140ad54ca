//! Seeded generators for small typed tables and valid plans over them.
//!
//! Value domains are chosen so every backend computes bit-identical results:
//! reals are multiples of 1/4, integers are tiny, divisors are non-zero
//! literals, and dates fall between 1900 and 2100.

use std::collections::{BTreeMap, HashSet};
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spage_core::bind::bind_step;
use spage_core::plan::{
    AggArg, AggFunc, ArithOp, ColumnRef, CompareOp, Condition, Expr, Operation, OutputColumn, Plan,
    Predicate, SortDirection, SortKey, SortSpec, SourceRef, Step,
};
use spage_core::table::{parse_date, Catalog, Column, ColumnType, Schema, Table, Value};

pub type TestRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const MAX_ROWS: usize = 6;
pub const MAX_COLS: usize = 4;

const COLUMN_NAMES: [&str; MAX_COLS] = ["a", "b", "c", "d"];
const TEXTS: [&str; 5] = ["a", "b", "B", "o'k", "x y"];
const DATES: [&str; 5] = [
    "1900-01-01",
    "1999-12-31",
    "2000-02-29",
    "2024-06-15",
    "2100-12-31",
];
const TYPES: [ColumnType; 4] = [
    ColumnType::Integer,
    ColumnType::Real,
    ColumnType::Text,
    ColumnType::Date,
];

pub fn random_value(rng: &mut TestRng, ty: ColumnType) -> Value {
    match ty {
        ColumnType::Integer => Value::Integer(rng.gen_range(-5..=5)),
        ColumnType::Real => Value::Real(rng.gen_range(-12..=12) as f64 / 4.0),
        ColumnType::Text => Value::Text(TEXTS.choose(rng).unwrap().to_string()),
        ColumnType::Date => Value::Date(parse_date(DATES.choose(rng).unwrap()).unwrap()),
    }
}

fn cell(rng: &mut TestRng, ty: ColumnType) -> Value {
    if rng.gen_bool(0.15) {
        Value::Null
    } else {
        random_value(rng, ty)
    }
}

pub fn random_schema(rng: &mut TestRng) -> Schema {
    let width = rng.gen_range(1..=MAX_COLS);
    let columns = COLUMN_NAMES[..width]
        .iter()
        .map(|n| Column::new(*n, *TYPES.choose(rng).unwrap()))
        .collect();
    Schema::new(columns).unwrap()
}

/// A table with `schema` and 0 to 6 random rows.
pub fn table_with_schema(rng: &mut TestRng, name: &str, schema: &Schema) -> Table {
    let rows = (0..rng.gen_range(0..=MAX_ROWS))
        .map(|_| schema.types().map(|t| cell(rng, t)).collect())
        .collect();
    Table::new(name, schema.clone(), rows).unwrap()
}

pub fn random_table(rng: &mut TestRng, name: &str) -> Table {
    let schema = random_schema(rng);
    table_with_schema(rng, name, &schema)
}

/// Tables named `T1..Tn`.
pub fn random_catalog(rng: &mut TestRng, tables: usize) -> Catalog {
    Catalog::from_tables((1..=tables).map(|i| random_table(rng, &format!("T{i}")))).unwrap()
}

/// One input of a step being generated.
#[derive(Debug, Clone)]
pub struct Input {
    pub source: SourceRef,
    pub schema: Schema,
}

impl Input {
    pub fn new(source: SourceRef, schema: &Schema) -> Self {
        Input {
            source,
            schema: schema.clone(),
        }
    }
}

fn fresh_name(taken: &HashSet<String>) -> String {
    (1..)
        .map(|i| format!("x{i}"))
        .find(|n| !taken.contains(n))
        .unwrap()
}

fn literal_for(rng: &mut TestRng, ty: ColumnType) -> Value {
    match ty {
        // Plan text has no date literal; dates are quoted strings.
        ColumnType::Date => Value::Text(DATES.choose(rng).unwrap().to_string()),
        ColumnType::Integer if rng.gen_bool(0.3) => random_value(rng, ColumnType::Real),
        ColumnType::Real if rng.gen_bool(0.3) => random_value(rng, ColumnType::Integer),
        t => random_value(rng, t),
    }
}

fn compatible(a: ColumnType, b: ColumnType) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

/// Column references visible in a step, qualified when `qualify`.
fn columns(inputs: &[Input], qualify: bool) -> Vec<(ColumnRef, ColumnType)> {
    inputs
        .iter()
        .flat_map(|i| {
            i.schema.columns().iter().map(move |c| {
                let r = if qualify {
                    ColumnRef::qualified(i.source.clone(), c.name.clone())
                } else {
                    ColumnRef::bare(c.name.clone())
                };
                (r, c.ty)
            })
        })
        .collect()
}

fn comparison(rng: &mut TestRng, cols: &[(ColumnRef, ColumnType)]) -> Predicate {
    let op = *[
        CompareOp::Eq,
        CompareOp::Ne,
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Gt,
        CompareOp::Ge,
    ]
    .choose(rng)
    .unwrap();
    let (left, lt) = cols.choose(rng).unwrap().clone();
    let peers: Vec<_> = cols
        .iter()
        .filter(|(r, t)| *r != left && compatible(lt, *t))
        .collect();
    let right = if !peers.is_empty() && rng.gen_bool(0.3) {
        Expr::Column(peers.choose(rng).unwrap().0.clone())
    } else {
        Expr::Literal(literal_for(rng, lt))
    };
    if rng.gen_bool(0.2) {
        Predicate::compare(op, right, Expr::Column(left))
    } else {
        Predicate::compare(op, Expr::Column(left), right)
    }
}

pub fn random_predicate(
    rng: &mut TestRng,
    cols: &[(ColumnRef, ColumnType)],
    depth: u32,
) -> Predicate {
    if depth == 0 || rng.gen_bool(0.6) {
        return comparison(rng, cols);
    }
    let parts = (0..rng.gen_range(2..=3))
        .map(|_| random_predicate(rng, cols, depth - 1))
        .collect();
    if rng.gen_bool(0.5) {
        Predicate::and(parts)
    } else {
        Predicate::or(parts)
    }
}

/// A numeric or date expression over `cols`, or `None` when nothing fits.
fn computed(rng: &mut TestRng, cols: &[(ColumnRef, ColumnType)]) -> Option<Expr> {
    let numeric: Vec<_> = cols.iter().filter(|(_, t)| t.is_numeric()).collect();
    let dates: Vec<_> = cols
        .iter()
        .filter(|(_, t)| *t == ColumnType::Date)
        .collect();
    if !dates.is_empty() && (numeric.is_empty() || rng.gen_bool(0.2)) {
        let a = Expr::Column(dates.choose(rng).unwrap().0.clone());
        let b = if rng.gen_bool(0.7) {
            Expr::Column(dates.choose(rng).unwrap().0.clone())
        } else {
            Expr::Literal(Value::Text(DATES.choose(rng).unwrap().to_string()))
        };
        return Some(Expr::binary(ArithOp::Sub, a, b));
    }
    if numeric.is_empty() {
        return None;
    }
    let left = Expr::Column(numeric.choose(rng).unwrap().0.clone());
    let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
        .choose(rng)
        .unwrap();
    let right = if op != ArithOp::Div && rng.gen_bool(0.5) {
        Expr::Column(numeric.choose(rng).unwrap().0.clone())
    } else {
        let v = loop {
            let ty = if rng.gen_bool(0.5) {
                ColumnType::Integer
            } else {
                ColumnType::Real
            };
            let v = random_value(rng, ty);
            if !matches!(v, Value::Integer(0)) && v != Value::Real(0.0) {
                break v;
            }
        };
        Expr::Literal(v)
    };
    Some(Expr::binary(op, left, right))
}

/// A random non-empty subset of `cols` (in order) plus, sometimes, one
/// computed column. Duplicate output names get fresh aliases.
fn projection(rng: &mut TestRng, cols: &[(ColumnRef, ColumnType)]) -> Vec<OutputColumn> {
    let mut taken = HashSet::new();
    let mut out = Vec::new();
    for (r, _) in cols {
        if rng.gen_bool(0.6) {
            let name = r.name.to_lowercase();
            let expr = Expr::Column(r.clone());
            if taken.insert(name) {
                out.push(OutputColumn { expr, alias: None });
            } else {
                let alias = fresh_name(&taken);
                taken.insert(alias.clone());
                out.push(OutputColumn::aliased(expr, alias));
            }
        }
    }
    if out.is_empty() || rng.gen_bool(0.3) {
        if let Some(e) = computed(rng, cols) {
            let alias = fresh_name(&taken);
            taken.insert(alias.clone());
            out.push(OutputColumn::aliased(e, alias));
        }
    }
    if out.is_empty() {
        let (r, _) = cols.choose(rng).unwrap();
        out.push(OutputColumn {
            expr: Expr::Column(r.clone()),
            alias: None,
        });
    }
    out
}

fn aggregation(rng: &mut TestRng, cols: &[(ColumnRef, ColumnType)]) -> Vec<OutputColumn> {
    let mut taken = HashSet::new();
    let mut out = Vec::new();
    let mut keys: Vec<_> = cols.iter().collect();
    keys.shuffle(rng);
    for (r, _) in keys.into_iter().take(rng.gen_range(0..=2)) {
        taken.insert(r.name.to_lowercase());
        out.push(OutputColumn {
            expr: Expr::Column(r.clone()),
            alias: None,
        });
    }
    if rng.gen_bool(0.15) {
        if let Some(e) = computed(rng, cols) {
            let alias = fresh_name(&taken);
            taken.insert(alias.clone());
            out.push(OutputColumn::aliased(e, alias));
        }
    }
    let numeric: Vec<_> = cols.iter().filter(|(_, t)| t.is_numeric()).collect();
    for _ in 0..rng.gen_range(1..=2) {
        let func = *[
            AggFunc::Count,
            AggFunc::Sum,
            AggFunc::Avg,
            AggFunc::Min,
            AggFunc::Max,
        ]
        .choose(rng)
        .unwrap();
        let arg = match func {
            AggFunc::Count if rng.gen_bool(0.5) => AggArg::Star,
            AggFunc::Sum | AggFunc::Avg => match numeric.choose(rng) {
                Some((r, _)) => {
                    let col = Expr::Column(r.clone());
                    if rng.gen_bool(0.2) {
                        AggArg::Expr(Box::new(Expr::binary(
                            ArithOp::Mul,
                            col,
                            Expr::Literal(Value::Integer(2)),
                        )))
                    } else {
                        AggArg::Expr(Box::new(col))
                    }
                }
                None => AggArg::Star,
            },
            _ => AggArg::Expr(Box::new(Expr::Column(cols.choose(rng).unwrap().0.clone()))),
        };
        let func = if arg == AggArg::Star {
            AggFunc::Count
        } else {
            func
        };
        let mut expr = Expr::Aggregate { func, arg };
        if func == AggFunc::Count && rng.gen_bool(0.2) {
            expr = Expr::binary(ArithOp::Add, expr, Expr::Literal(Value::Integer(1)));
        }
        let alias = fresh_name(&taken);
        taken.insert(alias.clone());
        out.push(OutputColumn::aliased(expr, alias));
    }
    out
}

fn sort_spec(rng: &mut TestRng, cols: &[(ColumnRef, ColumnType)], limit: bool) -> SortSpec {
    let keys = (0..rng.gen_range(1..=2))
        .map(|_| {
            let expr = if rng.gen_bool(0.2) {
                computed(rng, cols)
            } else {
                None
            }
            .unwrap_or_else(|| Expr::Column(cols.choose(rng).unwrap().0.clone()));
            SortKey {
                expr,
                direction: if rng.gen_bool(0.5) {
                    SortDirection::Asc
                } else {
                    SortDirection::Desc
                },
            }
        })
        .collect();
    SortSpec {
        keys,
        limit: limit.then(|| rng.gen_range(1..=4)),
    }
}

fn join_condition(rng: &mut TestRng, inputs: &[Input]) -> Option<Condition> {
    let left = columns(&inputs[..1], true);
    let right = columns(&inputs[1..], true);
    let pairs: Vec<_> = left
        .iter()
        .flat_map(|l| right.iter().map(move |r| (l, r)))
        .filter(|(l, r)| compatible(l.1, r.1))
        .collect();
    let roll: f64 = rng.gen();
    if pairs.is_empty() || roll < 0.15 {
        return None;
    }
    let (l, r) = pairs.choose(rng).unwrap();
    let (lx, rx) = (Expr::Column(l.0.clone()), Expr::Column(r.0.clone()));
    let both: Vec<_> = left.iter().chain(&right).cloned().collect();
    let p = if roll < 0.3 {
        Predicate::compare(
            *[CompareOp::Lt, CompareOp::Ge, CompareOp::Ne]
                .choose(rng)
                .unwrap(),
            lx,
            rx,
        )
    } else if roll < 0.4 {
        Predicate::and(vec![
            Predicate::compare(CompareOp::Eq, lx, rx),
            comparison(rng, &both),
        ])
    } else if rng.gen_bool(0.5) {
        Predicate::compare(CompareOp::Eq, lx, rx)
    } else {
        Predicate::compare(CompareOp::Eq, rx, lx)
    };
    Some(Condition::Predicate(p))
}

/// A random, well-typed step of `op` over `inputs`. Set operations expect
/// inputs with identical type lists; joins expect two distinct sources.
pub fn random_step(rng: &mut TestRng, id: u32, op: Operation, inputs: &[Input]) -> Step {
    let sources = inputs.iter().map(|i| i.source.clone()).collect();
    let bare = columns(inputs, op == Operation::Join);
    let (condition, output) = match op {
        Operation::Scan | Operation::Filter => (
            rng.gen_bool(0.7)
                .then(|| Condition::Predicate(random_predicate(rng, &bare, 2))),
            projection(rng, &bare),
        ),
        Operation::Aggregate => (
            rng.gen_bool(0.3)
                .then(|| Condition::Predicate(random_predicate(rng, &bare, 1))),
            aggregation(rng, &bare),
        ),
        Operation::Sort | Operation::TopSort => (
            Some(Condition::Sort(sort_spec(
                rng,
                &bare,
                op == Operation::TopSort,
            ))),
            projection(rng, &bare),
        ),
        Operation::Join => (join_condition(rng, inputs), projection(rng, &bare)),
        Operation::Except | Operation::Intersect | Operation::Union => (None, Vec::new()),
    };
    Step {
        id,
        operation: op,
        sources,
        condition,
        output,
    }
}

#[derive(Debug, Clone)]
pub struct PlanShape {
    pub steps: RangeInclusive<usize>,
    /// Minimum number of steps that read only input tables.
    pub min_roots: usize,
}

impl Default for PlanShape {
    fn default() -> Self {
        PlanShape {
            steps: 1..=6,
            min_roots: 1,
        }
    }
}

struct Builder<'a> {
    catalog: &'a Catalog,
    steps: Vec<Step>,
    schemas: BTreeMap<u32, Schema>,
}

impl Builder<'_> {
    fn input(&self, src: SourceRef) -> Input {
        let schema = match &src {
            SourceRef::Table(n) => self.catalog.get(n).unwrap().schema().clone(),
            SourceRef::Step(id) => self.schemas[id].clone(),
        };
        Input {
            source: src,
            schema,
        }
    }

    fn push(&mut self, rng: &mut TestRng, op: Operation, sources: Vec<SourceRef>) -> u32 {
        let id = self.steps.len() as u32 + 1;
        let inputs: Vec<Input> = sources.into_iter().map(|s| self.input(s)).collect();
        let step = random_step(rng, id, op, &inputs);
        let schemas: Vec<&Schema> = inputs.iter().map(|i| &i.schema).collect();
        let bound = bind_step(&step, &schemas)
            .unwrap_or_else(|e| panic!("generator produced an ill-typed step {step:?}: {e:?}"));
        self.schemas.insert(id, bound.schema);
        self.steps.push(step);
        id
    }

    fn open(&self) -> Vec<u32> {
        let used: HashSet<u32> = self
            .steps
            .iter()
            .flat_map(|s| s.step_dependencies())
            .collect();
        self.steps
            .iter()
            .map(|s| s.id)
            .filter(|id| !used.contains(id))
            .collect()
    }

    fn random_table(&self, rng: &mut TestRng) -> SourceRef {
        let names: Vec<&str> = self.catalog.tables().map(|t| t.name()).collect();
        SourceRef::Table(names.choose(rng).unwrap().to_string())
    }

    fn types(&self, id: u32) -> Vec<ColumnType> {
        self.schemas[&id].types().collect()
    }

    /// Combines two open steps: a set operation when their types line up,
    /// otherwise a join.
    fn merge(&mut self, rng: &mut TestRng, a: u32, b: u32) -> u32 {
        let op = if self.types(a) == self.types(b) && rng.gen_bool(0.6) {
            *[Operation::Except, Operation::Intersect, Operation::Union]
                .choose(rng)
                .unwrap()
        } else {
            Operation::Join
        };
        self.push(rng, op, vec![SourceRef::Step(a), SourceRef::Step(b)])
    }

    /// Two filters of the same step feeding a set operation.
    fn set_triple(&mut self, rng: &mut TestRng, base: u32) {
        let all: Vec<OutputColumn> = self.schemas[&base]
            .names()
            .map(|n| OutputColumn {
                expr: Expr::Column(ColumnRef::bare(n)),
                alias: None,
            })
            .collect();
        let mut sides = Vec::new();
        for _ in 0..2 {
            let id = self.steps.len() as u32 + 1;
            let cols = columns(&[self.input(SourceRef::Step(base))], false);
            let condition = rng
                .gen_bool(0.8)
                .then(|| Condition::Predicate(random_predicate(rng, &cols, 1)));
            self.schemas.insert(id, self.schemas[&base].clone());
            self.steps.push(Step {
                id,
                operation: Operation::Filter,
                sources: vec![SourceRef::Step(base)],
                condition,
                output: all.clone(),
            });
            sides.push(SourceRef::Step(id));
        }
        let op = *[Operation::Except, Operation::Intersect, Operation::Union]
            .choose(rng)
            .unwrap();
        self.push(rng, op, sides);
    }
}

/// A plan that validates cleanly against `catalog`, has a step count in
/// `shape.steps` (raised if `min_roots` needs more) and at least
/// `shape.min_roots` steps that read only input tables.
pub fn random_plan(rng: &mut TestRng, catalog: &Catalog, shape: &PlanShape) -> Plan {
    let roots = shape.min_roots.max(1);
    let target = rng.gen_range(shape.steps.clone()).max(2 * roots - 1);
    let mut b = Builder {
        catalog,
        steps: Vec::new(),
        schemas: BTreeMap::new(),
    };
    for _ in 0..roots {
        let t = b.random_table(rng);
        b.push(rng, Operation::Scan, vec![t]);
    }
    loop {
        let open = b.open();
        let slack = target as i64 - b.steps.len() as i64 - (open.len() as i64 - 1);
        if slack <= 0 {
            break;
        }
        let pick = *open.choose(rng).unwrap();
        let roll: f64 = rng.gen();
        if open.len() >= 2 && roll < 0.2 {
            let mut pair = open.clone();
            pair.shuffle(rng);
            b.merge(rng, pair[0], pair[1]);
        } else if slack >= 2 && roll < 0.35 {
            let t = b.random_table(rng);
            b.push(rng, Operation::Scan, vec![t]);
        } else if slack >= 3 && roll < 0.45 {
            b.set_triple(rng, pick);
        } else if roll < 0.55 {
            let t = b.random_table(rng);
            b.push(rng, Operation::Join, vec![SourceRef::Step(pick), t]);
        } else {
            let op = *[
                Operation::Filter,
                Operation::Aggregate,
                Operation::Sort,
                Operation::TopSort,
            ]
            .choose(rng)
            .unwrap();
            b.push(rng, op, vec![SourceRef::Step(pick)]);
        }
    }
    loop {
        let mut open = b.open();
        if open.len() < 2 {
            break;
        }
        open.shuffle(rng);
        b.merge(rng, open[0], open[1]);
    }
    Plan::new(b.steps).expect("generated plan is structurally valid")
}

/// A one-step plan of a random operation reading only input tables. The
/// catalog holds `A` and `B` with one schema and `C` with another, so set
/// operations and joins both have suitable inputs.
pub fn single_step_case(rng: &mut TestRng) -> (Catalog, Plan) {
    let shared = random_schema(rng);
    let other = random_schema(rng);
    let catalog = Catalog::from_tables([
        table_with_schema(rng, "A", &shared),
        table_with_schema(rng, "B", &shared),
        table_with_schema(rng, "C", &other),
    ])
    .unwrap();
    let op = *Operation::ALL.choose(rng).unwrap();
    let table = |n: &str, s: &Schema| Input::new(SourceRef::Table(n.into()), s);
    let inputs = match op {
        Operation::Except | Operation::Intersect | Operation::Union => {
            vec![table("A", &shared), table("B", &shared)]
        }
        Operation::Join => vec![table("A", &shared), table("C", &other)],
        _ if rng.gen() => vec![table("A", &shared)],
        _ => vec![table("C", &other)],
    };
    let plan = Plan::new(vec![random_step(rng, 1, op, &inputs)]).unwrap();
    (catalog, plan)
}
