//! Pulling plans and SQL out of free-form model responses.

use thiserror::Error;

use spage_core::plan::{parse_plan, Plan, PlanError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerOutputError {
    #[error("no JSON document found in the planner response")]
    NoJsonFound,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Contents of each fenced block (```` ``` ```` or ```` ```json ````), in order.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// The first complete JSON object or array in `text`, as a slice.
fn first_json(text: &str) -> Option<&str> {
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        let mut stream =
            serde_json::Deserializer::from_str(&text[i..]).into_iter::<serde_json::Value>();
        if let Some(Ok(_)) = stream.next() {
            return Some(&text[i..i + stream.byte_offset()]);
        }
    }
    None
}

/// Finds the first JSON document (fenced blocks first, then the raw text) and
/// parses it as a plan. A bare array is read as the `steps` list.
pub fn parse_planner_output(text: &str) -> Result<Plan, PlannerOutputError> {
    let doc = fenced_blocks(text)
        .into_iter()
        .find_map(first_json)
        .or_else(|| first_json(text))
        .ok_or(PlannerOutputError::NoJsonFound)?;
    if doc.starts_with('[') {
        return Ok(parse_plan(&format!("{{\"steps\": {doc}}}"))?);
    }
    Ok(parse_plan(doc)?)
}

/// The SQL statement in a step-SQL response: the first fenced block if any,
/// trimmed, with a trailing semicolon removed.
pub fn extract_sql(text: &str) -> String {
    let body = fenced_blocks(text).into_iter().next().unwrap_or(text);
    body.trim().trim_end_matches(';').trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = r#"{"steps": [{"id": 1, "operation": "Scan", "source": ["T"], "condition": null, "output": ["a"]}]}"#;

    #[test]
    fn fenced_plan() {
        let text = format!("```json\n{PLAN}\n```");
        assert_eq!(parse_planner_output(&text).unwrap().len(), 1);
    }

    #[test]
    fn prose_then_json_takes_the_first_document() {
        let second = PLAN.replace("\"a\"", "\"b\"");
        let text = format!("Here is the plan {{as requested}}:\n{PLAN}\nor maybe {second}");
        let plan = parse_planner_output(&text).unwrap();
        assert_eq!(plan.steps()[0].output[0].to_string(), "a");
    }

    #[test]
    fn bare_step_array() {
        let steps = &PLAN[10..PLAN.len() - 1];
        assert!(steps.starts_with('['));
        assert_eq!(parse_planner_output(steps).unwrap().len(), 1);
    }

    #[test]
    fn malformed_responses() {
        assert_eq!(
            parse_planner_output("no plan here"),
            Err(PlannerOutputError::NoJsonFound)
        );
        assert_eq!(
            parse_planner_output("```json\n{\"steps\": [\n```"),
            Err(PlannerOutputError::NoJsonFound)
        );
        let bad = r#"{"steps": [{"id": 1, "operation": "Scan", "source": ["T"], "condition": "a >", "output": ["a"]}]}"#;
        assert!(matches!(
            parse_planner_output(bad),
            Err(PlannerOutputError::Plan(PlanError::Syntax { .. }))
        ));
    }

    #[test]
    fn sql_extraction() {
        assert_eq!(extract_sql("```sql\nSELECT 1;\n```"), "SELECT 1");
        assert_eq!(extract_sql("  SELECT 2  "), "SELECT 2");
    }
}
