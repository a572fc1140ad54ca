//! Executes step SQL on an embedded SQLite database, one materialized
//! relation per step.

use std::sync::Mutex;
use std::time::Instant;

use rusqlite::config::DbConfig;
use rusqlite::types::{Value as SqlValue, ValueRef};
use rusqlite::{params_from_iter, Connection};
use thiserror::Error;

use crate::bind::bind_step;
use crate::engine::{
    resolve_sources, schedule, Deadline, ErrorClass, ExecError, ExecOptions, ExecutionReport,
};
use crate::plan::{Plan, Step};
use crate::table::{parse_date, Catalog, ColumnType, Row, Schema, Table, Value};

use super::emit::{collides_with_step_relation, emit_step_sql_with, quote_ident, Dialect};

#[derive(Debug, Error)]
pub enum SqlError {
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("input table `{0}` collides with a generated step relation name")]
    NameCollision(String),
}

fn declared_type(ty: ColumnType) -> &'static str {
    match ty {
        ColumnType::Integer => "INTEGER",
        ColumnType::Real => "REAL",
        ColumnType::Text | ColumnType::Date => "TEXT",
    }
}

fn to_sql(v: &Value) -> SqlValue {
    match v {
        Value::Null => SqlValue::Null,
        Value::Integer(i) => SqlValue::Integer(*i),
        Value::Real(r) => SqlValue::Real(*r),
        Value::Text(s) => SqlValue::Text(s.clone()),
        Value::Date(_) => SqlValue::Text(v.to_string()),
    }
}

/// Converts a SQLite value into the declared column type.
fn from_sql(v: ValueRef<'_>, ty: ColumnType) -> Option<Value> {
    Some(match (v, ty) {
        (ValueRef::Null, _) => Value::Null,
        (ValueRef::Integer(i), ColumnType::Integer) => Value::Integer(i),
        (ValueRef::Integer(i), ColumnType::Real) => Value::Real(i as f64),
        (ValueRef::Real(r), ColumnType::Real) => Value::Real(r),
        (ValueRef::Real(r), ColumnType::Integer) if r.fract() == 0.0 && r.abs() < 9.0e15 => {
            Value::Integer(r as i64)
        }
        (ValueRef::Text(t), ColumnType::Text) => {
            Value::Text(std::str::from_utf8(t).ok()?.to_string())
        }
        (ValueRef::Text(t), ColumnType::Date) => {
            Value::Date(parse_date(std::str::from_utf8(t).ok()?)?)
        }
        _ => return None,
    })
}

/// An in-memory SQLite database holding the input tables of one catalog.
pub struct SqlDatabase {
    conn: Connection,
}

impl SqlDatabase {
    pub fn load(catalog: &Catalog) -> Result<Self, SqlError> {
        let conn = Connection::open_in_memory()?;
        // An unknown "name" must be an error, not a string literal.
        conn.set_db_config(DbConfig::SQLITE_DBCONFIG_DQS_DML, false)?;
        conn.set_db_config(DbConfig::SQLITE_DBCONFIG_DQS_DDL, false)?;
        for table in catalog.tables() {
            if collides_with_step_relation(table.name()) {
                return Err(SqlError::NameCollision(table.name().to_string()));
            }
            create(&conn, &quote_ident(table.name()), table.schema())?;
            insert_rows(&conn, &quote_ident(table.name()), table)?;
        }
        Ok(SqlDatabase { conn })
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Runs a query and reads its rows as `schema`.
    pub fn query(&self, sql: &str, name: &str, schema: &Schema) -> Result<Table, ExecError> {
        let mut stmt = self.conn.prepare(sql).map_err(classify)?;
        if stmt.column_count() != schema.width() {
            return Err(ExecError::new(
                ErrorClass::SchemaError,
                format!(
                    "query returns {} columns, expected {}",
                    stmt.column_count(),
                    schema.width()
                ),
            ));
        }
        let types: Vec<ColumnType> = schema.types().collect();
        let mut rows = stmt.query([]).map_err(classify)?;
        let mut out: Vec<Row> = Vec::new();
        while let Some(row) = rows.next().map_err(classify)? {
            let mut values = Vec::with_capacity(types.len());
            for (i, ty) in types.iter().enumerate() {
                let raw = row.get_ref(i).map_err(classify)?;
                let v = from_sql(raw, *ty).ok_or_else(|| {
                    ExecError::new(
                        ErrorClass::TypeError,
                        format!(
                            "column {} holds {:?}, expected {ty}",
                            i + 1,
                            raw.data_type()
                        ),
                    )
                })?;
                values.push(v);
            }
            out.push(values);
        }
        Table::new(name, schema.clone(), out)
            .map_err(|e| ExecError::new(ErrorClass::RuntimeError, e.to_string()))
    }

    /// Creates `step_<id>` with the expected schema, fills it from `select`
    /// and reads it back.
    pub fn materialize(
        &self,
        step_id: u32,
        select: &str,
        schema: &Schema,
        deadline: Deadline,
    ) -> Result<Table, ExecError> {
        let relation = format!("step_{step_id}");
        create(&self.conn, &relation, schema).map_err(classify)?;
        self.conn
            .progress_handler(1000, Some(move || deadline.expired()))
            .map_err(classify)?;
        let filled = self
            .conn
            .execute(&format!("INSERT INTO {relation} {select}"), []);
        self.conn
            .progress_handler(0, None::<fn() -> bool>)
            .map_err(classify)?;
        filled.map_err(|e| match deadline.check() {
            Err(timeout) => timeout,
            Ok(()) => classify(e),
        })?;
        self.query(
            &format!("SELECT * FROM {relation}"),
            &format!("Step{step_id}"),
            schema,
        )
    }
}

fn create(conn: &Connection, relation: &str, schema: &Schema) -> Result<(), rusqlite::Error> {
    let columns: Vec<String> = schema
        .columns()
        .iter()
        .map(|c| format!("{} {}", quote_ident(&c.name), declared_type(c.ty)))
        .collect();
    conn.execute(
        &format!("CREATE TABLE {relation} ({})", columns.join(", ")),
        [],
    )?;
    Ok(())
}

fn insert_rows(conn: &Connection, relation: &str, table: &Table) -> Result<(), rusqlite::Error> {
    let marks = vec!["?"; table.schema().width()].join(", ");
    let mut stmt = conn.prepare(&format!("INSERT INTO {relation} VALUES ({marks})"))?;
    for row in table.rows() {
        stmt.execute(params_from_iter(row.iter().map(to_sql)))?;
    }
    Ok(())
}

fn classify(e: rusqlite::Error) -> ExecError {
    let text = e.to_string();
    let class = if text.contains("no such column")
        || text.contains("no such table")
        || text.contains("ambiguous column")
        || text.contains("values were supplied")
    {
        ErrorClass::SchemaError
    } else {
        ErrorClass::RuntimeError
    };
    ExecError::new(class, text)
}

/// Produces the SQL for one step given its source schemas.
pub trait StepSqlSource: Sync {
    fn step_sql(&self, step: &Step, schemas: &[&Schema]) -> Result<String, ExecError>;
}

/// SQL from the deterministic emitter.
pub struct Emitted(pub Dialect);

impl StepSqlSource for Emitted {
    fn step_sql(&self, step: &Step, schemas: &[&Schema]) -> Result<String, ExecError> {
        emit_step_sql_with(step, self.0, Some(schemas))
            .map(|e| e.sql)
            .map_err(|e| ExecError::new(ErrorClass::SchemaError, e.to_string()))
    }
}

impl<F> StepSqlSource for F
where
    F: Fn(&Step, &[&Schema]) -> Result<String, ExecError> + Sync,
{
    fn step_sql(&self, step: &Step, schemas: &[&Schema]) -> Result<String, ExecError> {
        self(step, schemas)
    }
}

/// Runs `plan` on SQLite with the step SQL from `source`. The expected output
/// schema of each step comes from binding it against its inputs, exactly as
/// the native engine does, so both backends fail on the same static errors.
pub fn execute_plan_sql(
    plan: &Plan,
    catalog: &Catalog,
    options: &ExecOptions,
    source: &dyn StepSqlSource,
) -> Result<ExecutionReport, SqlError> {
    let db = Mutex::new(SqlDatabase::load(catalog)?);
    Ok(schedule(plan, options, |step, registry, deadline| {
        let sources = resolve_sources(step, registry, catalog)?;
        let schemas: Vec<&Schema> = sources.iter().map(|t| t.schema()).collect();
        let bound = bind_step(step, &schemas).map_err(|errors| {
            let text: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            let class = match errors[0].code {
                crate::validate::DiagnosticCode::TypeMismatch
                | crate::validate::DiagnosticCode::SetOpSchemaMismatch => ErrorClass::TypeError,
                _ => ErrorClass::SchemaError,
            };
            ExecError::new(class, text.join("; "))
        })?;
        let sql = source.step_sql(step, &schemas)?;
        let started = Instant::now();
        let db = db.lock().unwrap_or_else(|p| p.into_inner());
        if deadline.expired() {
            return Err(ExecError::new(
                ErrorClass::Timeout,
                format!("waited {:?} for the database", started.elapsed()),
            ));
        }
        db.materialize(step.id, &sql, &bound.schema, deadline)
    }))
}
