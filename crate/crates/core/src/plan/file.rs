//! The JSON plan file:
//!
//! ```json
//! {"steps": [{"id": 1, "operation": "Scan", "source": ["Has_Pet"],
//!             "condition": "Has_Pet = \"Yes\"", "output": ["ID"]}]}
//! ```

use serde::{Deserialize, Serialize};

use super::parser::{output_in, predicate_in, sort_spec_in};
use super::{Condition, Operation, Plan, PlanError, SourceRef, Step};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    steps: Vec<StepDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    id: u32,
    operation: String,
    source: Vec<String>,
    condition: Option<String>,
    output: Vec<String>,
}

pub fn parse_plan(text: &str) -> Result<Plan, PlanError> {
    let doc: PlanDoc = serde_json::from_str(text).map_err(|e| PlanError::Syntax {
        line: e.line(),
        col: e.column(),
        expected: e.to_string(),
        context: "plan document".into(),
    })?;
    let steps = doc
        .steps
        .into_iter()
        .map(step_from_doc)
        .collect::<Result<Vec<_>, _>>()?;
    Plan::new(steps)
}

/// One step object on its own, as embedded in per-step prompts. Only the
/// step's own structure is checked; its step references are not resolved.
pub fn parse_step(text: &str) -> Result<Step, PlanError> {
    let doc: StepDoc = serde_json::from_str(text).map_err(|e| PlanError::Syntax {
        line: e.line(),
        col: e.column(),
        expected: e.to_string(),
        context: "step document".into(),
    })?;
    step_from_doc(doc)
}

fn step_from_doc(doc: StepDoc) -> Result<Step, PlanError> {
    let id = doc.id;
    let operation = Operation::from_name(&doc.operation).ok_or_else(|| {
        PlanError::structure(
            id,
            format!(
                "unknown operation `{}` (expected one of Scan, Aggregate, Filter, Sort, TopSort, Join, Except, Intersect, Union)",
                doc.operation
            ),
        )
    })?;
    let sources = doc
        .source
        .iter()
        .map(|s| {
            SourceRef::parse(s.trim())
                .ok_or_else(|| PlanError::structure(id, format!("invalid source `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let condition = match doc.condition {
        None => None,
        Some(text) => {
            let ctx = format!("step {id} condition");
            Some(if operation.is_sort() {
                Condition::Sort(sort_spec_in(&text, &ctx)?)
            } else {
                Condition::Predicate(predicate_in(&text, &ctx)?)
            })
        }
    };
    let output = doc
        .output
        .iter()
        .enumerate()
        .map(|(i, text)| output_in(text, &format!("step {id} output {}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let step = Step {
        id,
        operation,
        sources,
        condition,
        output,
    };
    step.check_structure()?;
    Ok(step)
}

fn step_doc(s: &Step) -> StepDoc {
    StepDoc {
        id: s.id,
        operation: s.operation.name().to_string(),
        source: s.sources.iter().map(|r| r.to_string()).collect(),
        condition: s.condition.as_ref().map(|c| match c {
            Condition::Predicate(p) => p.to_string(),
            Condition::Sort(spec) => spec.to_string(),
        }),
        output: s.output.iter().map(|o| o.to_string()).collect(),
    }
}

/// Pretty-printed canonical JSON.
pub fn serialize_plan(plan: &Plan) -> String {
    let doc = PlanDoc {
        steps: plan.steps().iter().map(step_doc).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plan serializes")
}

/// Single-line JSON for one step.
pub fn serialize_step(step: &Step) -> String {
    serde_json::to_string(&step_doc(step)).expect("step serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ColumnRef, CompareOp, Expr, OutputColumn, Predicate};
    use crate::table::Value;

    pub(crate) const PET_PLAN: &str = r#"{"steps": [
        {"id": 1, "operation": "Scan", "source": ["Has_Pet"], "condition": "Has_Pet = \"Yes\"", "output": ["ID"]},
        {"id": 2, "operation": "Scan", "source": ["Student"], "condition": null, "output": ["ID", "Age"]},
        {"id": 3, "operation": "Join", "source": ["Step1", "Step2"], "condition": "Step1.ID = Step2.ID", "output": ["Step2.Age"]}
    ]}"#;

    #[test]
    fn pet_plan_parses() {
        let plan = parse_plan(PET_PLAN).unwrap();
        assert_eq!(plan.len(), 3);
        assert_eq!(plan.terminal_id(), 3);
        let s1 = plan.step(1).unwrap();
        assert_eq!(
            s1.predicate(),
            Some(&Predicate::compare(
                CompareOp::Eq,
                Expr::column("Has_Pet"),
                Expr::Literal(Value::Text("Yes".into()))
            ))
        );
        assert_eq!(
            plan.step(3).unwrap().output,
            vec![OutputColumn {
                expr: Expr::Column(ColumnRef::qualified(SourceRef::Step(2), "Age")),
                alias: None
            }]
        );
    }

    #[test]
    fn minimal_plan() {
        let plan = parse_plan(
            r#"{"steps":[{"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"]}]}"#,
        )
        .unwrap();
        assert_eq!(plan.len(), 1);
    }

    #[test]
    fn forward_reference_error() {
        let text = r#"{"steps":[
            {"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"]},
            {"id":2,"operation":"Filter","source":["Step3"],"condition":null,"output":["a"]},
            {"id":3,"operation":"Filter","source":["Step1"],"condition":null,"output":["a"]}]}"#;
        assert_eq!(
            parse_plan(text),
            Err(PlanError::Reference { step: 2, target: 3 })
        );
    }

    #[test]
    fn round_trips() {
        let plan = parse_plan(PET_PLAN).unwrap();
        assert_eq!(parse_plan(&serialize_plan(&plan)).unwrap(), plan);

        let text = r#"{"steps":[
            {"id":1,"operation":"Scan","source":["Projects"],"condition":null,"output":["ProjectID","StartDate","EndDate"]},
            {"id":2,"operation":"Aggregate","source":["Step1"],"condition":null,"output":["ProjectID","(EndDate - StartDate) as Duration"]},
            {"id":3,"operation":"TopSort","source":["Step2"],"condition":"ORDER BY Duration DESC LIMIT 3","output":["ProjectID","Duration"]}]}"#;
        let plan = parse_plan(text).unwrap();
        let again = parse_plan(&serialize_plan(&plan)).unwrap();
        assert_eq!(again, plan);
        for step in plan.steps() {
            let line = serialize_step(step);
            assert!(!line.contains('\n'));
            assert_eq!(&parse_step(&line).unwrap(), step);
        }
    }

    #[test]
    fn structural_errors() {
        let join_one = r#"{"steps":[{"id":1,"operation":"Join","source":["T"],"condition":null,"output":["a"]}]}"#;
        assert!(matches!(
            parse_plan(join_one),
            Err(PlanError::Structure { .. })
        ));
        let bad_op = r#"{"steps":[{"id":1,"operation":"scan","source":["T"],"condition":null,"output":["a"]}]}"#;
        assert!(matches!(
            parse_plan(bad_op),
            Err(PlanError::Structure { .. })
        ));
        let extra = r#"{"steps":[{"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"],"note":1}]}"#;
        assert!(matches!(parse_plan(extra), Err(PlanError::Syntax { .. })));
        let dup = r#"{"steps":[{"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"]},
            {"id":1,"operation":"Scan","source":["T"],"condition":null,"output":["a"]}]}"#;
        assert_eq!(parse_plan(dup), Err(PlanError::DuplicateId(1)));
        assert!(matches!(
            parse_plan("not json"),
            Err(PlanError::Syntax { .. })
        ));
    }

    #[test]
    fn expression_errors_name_their_field() {
        let text = r#"{"steps":[{"id":1,"operation":"Scan","source":["T"],"condition":"a >","output":["a"]}]}"#;
        match parse_plan(text) {
            Err(PlanError::Syntax { context, col, .. }) => {
                assert_eq!(context, "step 1 condition");
                assert_eq!(col, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
