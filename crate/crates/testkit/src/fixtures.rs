//! Paths and loaders for the bundled example data under `data/`.

use std::path::PathBuf;

use spage_core::plan::{parse_plan, Plan};
use spage_core::table::{load_catalog, Catalog};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn plan_path(name: &str) -> PathBuf {
    data_dir().join("plans").join(name)
}

pub fn plan(name: &str) -> Plan {
    let path = plan_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_plan(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Catalog from a subdirectory of `data/`, e.g. `toy` or `projects`.
pub fn catalog(dir: &str) -> Catalog {
    load_catalog(&data_dir().join(dir)).unwrap_or_else(|e| panic!("{dir}: {e}"))
}

pub fn toy_taskfile() -> PathBuf {
    data_dir().join("tasks/toy.jsonl")
}
