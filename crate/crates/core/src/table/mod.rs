//! Typed in-memory relations and the catalog of named input tables.

mod io;
mod linearize;
mod value;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    load_catalog, load_table, parse_csv, parse_json_rows, write_csv, write_json_rows, TableFormat,
};
pub use linearize::linearize;
pub use value::{
    compare_values, format_real, parse_date, parse_integer, parse_real, row_key, sort_order,
    ColumnType, Value, ValueKey,
};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("schema error: {0}")]
    Schema(String),
}

/// Letters, digits and underscores, not starting with a digit.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// Ordered, non-empty column list with case-insensitively unique names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::Schema(
                "a schema needs at least one column".into(),
            ));
        }
        let mut seen = HashSet::new();
        for col in &columns {
            if !is_identifier(&col.name) {
                return Err(TableError::Schema(format!(
                    "column name `{}` is not an identifier",
                    col.name
                )));
            }
            if !seen.insert(col.name.to_lowercase()) {
                return Err(TableError::Schema(format!(
                    "duplicate column name `{}`",
                    col.name
                )));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn types(&self) -> impl Iterator<Item = ColumnType> + '_ {
        self.columns.iter().map(|c| c.ty)
    }

    /// Case-insensitive lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let wanted = name.to_lowercase();
        self.columns
            .iter()
            .position(|c| c.name.to_lowercase() == wanted)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let columns = Vec::<Column>::deserialize(d)?;
        Schema::new(columns).map_err(serde::de::Error::custom)
    }
}

pub type Row = Vec<Value>;

/// Named relation whose rows all match the schema width and column types.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    schema: Schema,
    rows: Vec<Row>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        schema: Schema,
        rows: Vec<Row>,
    ) -> Result<Self, TableError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(TableError::Schema(format!(
                "table name `{name}` is not an identifier"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.width() {
                return Err(TableError::Format(format!(
                    "row {} has {} cells, schema has {}",
                    i + 1,
                    row.len(),
                    schema.width()
                )));
            }
            for (cell, col) in row.iter().zip(schema.columns()) {
                if !cell.conforms_to(col.ty) {
                    return Err(TableError::Type(format!(
                        "row {}: value {:?} does not conform to column `{}` of type {}",
                        i + 1,
                        cell,
                        col.name,
                        col.ty
                    )));
                }
            }
        }
        Ok(Table { name, schema, rows })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn renamed(&self, name: impl Into<String>) -> Result<Table, TableError> {
        Table::new(name, self.schema.clone(), self.rows.clone())
    }
}

/// JSON form: `{"name": .., "columns": [{"name": .., "type": ..}], "rows": [[..]]}`.
#[derive(Serialize, Deserialize)]
struct TableDoc {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<serde_json::Value>>,
}

impl Serialize for Table {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let doc = TableDoc {
            name: self.name.clone(),
            columns: self.schema.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(value_to_json).collect())
                .collect(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = TableDoc::deserialize(d)?;
        let schema = Schema::new(doc.columns).map_err(D::Error::custom)?;
        let mut rows = Vec::with_capacity(doc.rows.len());
        for raw in doc.rows {
            if raw.len() != schema.width() {
                return Err(D::Error::custom("row width does not match columns"));
            }
            let row = raw
                .iter()
                .zip(schema.columns())
                .map(|(v, c)| value_from_json(v, c.ty))
                .collect::<Result<Row, _>>()
                .map_err(D::Error::custom)?;
            rows.push(row);
        }
        Table::new(doc.name, schema, rows).map_err(D::Error::custom)
    }
}

pub(crate) fn value_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Integer(i) => (*i).into(),
        Value::Real(r) => serde_json::Number::from_f64(*r)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        Value::Text(s) => s.clone().into(),
        Value::Date(_) => v.to_string().into(),
    }
}

pub(crate) fn value_from_json(v: &serde_json::Value, ty: ColumnType) -> Result<Value, TableError> {
    let bad = || TableError::Type(format!("JSON value {v} does not fit column type {ty}"));
    match (v, ty) {
        (serde_json::Value::Null, _) => Ok(Value::Null),
        (serde_json::Value::Number(n), ColumnType::Integer) => {
            n.as_i64().map(Value::Integer).ok_or_else(bad)
        }
        (serde_json::Value::Number(n), ColumnType::Real) => {
            n.as_f64().map(Value::Real).ok_or_else(bad)
        }
        (serde_json::Value::String(s), ColumnType::Text) => Ok(Value::Text(s.clone())),
        (serde_json::Value::String(s), ColumnType::Date) => {
            parse_date(s).map(Value::Date).ok_or_else(bad)
        }
        _ => Err(bad()),
    }
}

/// Collection of input tables keyed case-insensitively by name.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Arc<Table>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: Table) -> Result<(), TableError> {
        let key = table.name().to_lowercase();
        if self.tables.contains_key(&key) {
            return Err(TableError::Schema(format!(
                "duplicate table name `{}`",
                table.name()
            )));
        }
        self.tables.insert(key, Arc::new(table));
        Ok(())
    }

    pub fn from_tables(tables: impl IntoIterator<Item = Table>) -> Result<Self, TableError> {
        let mut catalog = Catalog::new();
        for t in tables {
            catalog.insert(t)?;
        }
        Ok(catalog)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Table>> {
        self.tables.get(&name.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Tables in case-insensitive name order.
    pub fn tables(&self) -> impl Iterator<Item = &Arc<Table>> {
        self.tables.values()
    }
}
