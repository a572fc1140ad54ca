//! JSON-lines task files and the per-task output files written by
//! `summarize` and read by `eval`.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use spage_core::plan::{parse_plan, Plan};
use spage_core::table::{load_table, parse_json_rows, Catalog, TableFormat};
use spage_core::task::SummarizationTask;

#[derive(Debug, Error)]
pub enum TaskFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: duplicate task id `{id}`")]
    DuplicateId { path: String, id: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    query: String,
    tables: Vec<TableRef>,
    #[serde(default)]
    reference_summary: Option<String>,
    #[serde(default)]
    gold_plan: Option<serde_json::Value>,
}

/// A path relative to the task file, or an inline table
/// `{"name": ..., "columns": [...], "rows": [...]}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TableRef {
    Path(String),
    Inline(serde_json::Map<String, serde_json::Value>),
}

#[derive(Debug, Clone)]
pub struct TaskEntry {
    pub task: SummarizationTask,
    pub gold_plan: Option<Plan>,
}

fn read(path: &Path) -> Result<String, TaskFileError> {
    std::fs::read_to_string(path).map_err(|source| TaskFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_ref(base: &Path, table: TableRef) -> Result<spage_core::table::Table, String> {
    let no_hints = HashMap::new();
    match table {
        TableRef::Path(rel) => {
            let path = base.join(&rel);
            let format = TableFormat::from_path(&path)
                .ok_or_else(|| format!("`{rel}`: expected a .csv or .json table"))?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| format!("`{rel}`: no file name"))?;
            load_table(&path, format, name, &no_hints).map_err(|e| format!("`{rel}`: {e}"))
        }
        TableRef::Inline(mut obj) => {
            let name = match obj.remove("name") {
                Some(serde_json::Value::String(n)) => n,
                _ => return Err("inline table needs a string `name`".into()),
            };
            let body = serde_json::Value::Object(obj).to_string();
            parse_json_rows(&body, &name, &no_hints).map_err(|e| format!("table `{name}`: {e}"))
        }
    }
}

pub fn load_taskfile(path: &Path) -> Result<Vec<TaskEntry>, TaskFileError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let shown = path.display().to_string();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| TaskFileError::Record {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(TaskFileError::DuplicateId {
                path: shown,
                id: record.id,
            });
        }
        let tables = record
            .tables
            .into_iter()
            .map(|t| load_ref(base, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail)?;
        let catalog = Catalog::from_tables(tables).map_err(|e| fail(e.to_string()))?;
        let gold_plan = record
            .gold_plan
            .map(|p| parse_plan(&p.to_string()))
            .transpose()
            .map_err(|e| fail(format!("gold_plan: {e}")))?;
        let task =
            SummarizationTask::new(record.id, record.query, catalog, record.reference_summary)
                .map_err(|e| fail(e.to_string()))?;
        entries.push(TaskEntry { task, gold_plan });
    }
    Ok(entries)
}

/// One line of a `summarize` output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn load_outputs(path: &Path) -> Result<Vec<OutputRecord>, TaskFileError> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TaskFileError::Record {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// `*.json` plan files in a directory, sorted by name.
pub fn plan_files(dir: &Path) -> Result<Vec<PathBuf>, TaskFileError> {
    let io = |source| TaskFileError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}
