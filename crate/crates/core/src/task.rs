//! A query-focused summarization instance: a query over a set of tables.

use thiserror::Error;

use crate::table::Catalog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("task `{0}` has an empty query")]
    EmptyQuery(String),
    #[error("task `{0}` has no tables")]
    NoTables(String),
}

#[derive(Debug, Clone)]
pub struct SummarizationTask {
    pub id: String,
    pub query: String,
    pub catalog: Catalog,
    pub reference_summary: Option<String>,
}

impl SummarizationTask {
    pub fn new(
        id: impl Into<String>,
        query: impl Into<String>,
        catalog: Catalog,
        reference_summary: Option<String>,
    ) -> Result<Self, TaskError> {
        let (id, query) = (id.into(), query.into());
        if query.trim().is_empty() {
            return Err(TaskError::EmptyQuery(id));
        }
        if catalog.is_empty() {
            return Err(TaskError::NoTables(id));
        }
        Ok(SummarizationTask {
            id,
            query,
            catalog,
            reference_summary,
        })
    }
}
