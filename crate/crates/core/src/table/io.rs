//! CSV and JSON-rows ingestion with per-column type inference, plus writers.

use std::collections::HashMap;
use std::path::Path;

use super::{
    is_identifier, value_to_json, Catalog, Column, ColumnType, Row, Schema, Table, TableError,
    Value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    JsonRows,
}

impl TableFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "json" => Some(TableFormat::JsonRows),
            _ => None,
        }
    }
}

pub fn load_table(
    path: &Path,
    format: TableFormat,
    name: &str,
    hints: &HashMap<String, ColumnType>,
) -> Result<Table, TableError> {
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        TableFormat::Csv => parse_csv(&text, name, hints),
        TableFormat::JsonRows => parse_json_rows(&text, name, hints),
    }
}

/// Loads one table file, or every `.csv`/`.json` file of a directory, into a
/// catalog. Tables are named after their file stems.
pub fn load_catalog(path: &Path) -> Result<Catalog, TableError> {
    let io_err = |source| TableError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(io_err)? {
            let p = entry.map_err(io_err)?.path();
            if p.is_file() && TableFormat::from_path(&p).is_some() {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut catalog = Catalog::new();
    for file in files {
        let format = TableFormat::from_path(&file).ok_or_else(|| {
            TableError::Format(format!("{}: expected a .csv or .json file", file.display()))
        })?;
        let name = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| TableError::Format(format!("{}: bad file name", file.display())))?;
        catalog.insert(load_table(&file, format, name, &HashMap::new())?)?;
    }
    Ok(catalog)
}

pub fn parse_csv(
    text: &str,
    name: &str,
    hints: &HashMap<String, ColumnType>,
) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| TableError::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TableError::Format(e.to_string()))?;
        cells.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }
    build_table(name, header, cells, hints)
}

/// Accepts either an array of row objects (column order from the first
/// object's keys) or `{"columns": [...], "rows": [...]}`.
pub fn parse_json_rows(
    text: &str,
    name: &str,
    hints: &HashMap<String, ColumnType>,
) -> Result<Table, TableError> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| TableError::Format(e.to_string()))?;
    let (columns, rows) = match doc {
        serde_json::Value::Array(rows) => {
            let first = rows.first().and_then(|r| r.as_object()).ok_or_else(|| {
                TableError::Format(
                    "JSON rows without a `columns` list need a leading row object".into(),
                )
            })?;
            (first.keys().cloned().collect::<Vec<_>>(), rows)
        }
        serde_json::Value::Object(mut obj) => {
            let columns = match obj.remove("columns") {
                Some(serde_json::Value::Array(cols)) => cols
                    .into_iter()
                    .map(|c| match c {
                        serde_json::Value::String(s) => Ok(s),
                        other => Err(TableError::Format(format!(
                            "column names must be strings, got {other}"
                        ))),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(TableError::Format("missing `columns` list".into())),
            };
            let rows = match obj.remove("rows") {
                Some(serde_json::Value::Array(rows)) => rows,
                _ => return Err(TableError::Format("missing `rows` list".into())),
            };
            if let Some(extra) = obj.keys().next() {
                return Err(TableError::Format(format!("unexpected key `{extra}`")));
            }
            (columns, rows)
        }
        _ => return Err(TableError::Format("expected a JSON array or object".into())),
    };

    let mut cells = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let obj = row
            .as_object()
            .ok_or_else(|| TableError::Format(format!("row {} is not an object", i + 1)))?;
        if obj.len() != columns.len() {
            return Err(TableError::Format(format!(
                "row {} has {} keys, expected {}",
                i + 1,
                obj.len(),
                columns.len()
            )));
        }
        let mut out = Vec::with_capacity(columns.len());
        for col in &columns {
            let v = obj.get(col).ok_or_else(|| {
                TableError::Format(format!("row {} is missing key `{col}`", i + 1))
            })?;
            out.push(match v {
                serde_json::Value::Null => String::new(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::String(s) => s.clone(),
                other => {
                    return Err(TableError::Format(format!(
                        "row {}: unsupported JSON cell {other}",
                        i + 1
                    )))
                }
            });
        }
        cells.push(out);
    }
    build_table(name, columns, cells, hints)
}

fn build_table(
    name: &str,
    header: Vec<String>,
    cells: Vec<Vec<String>>,
    hints: &HashMap<String, ColumnType>,
) -> Result<Table, TableError> {
    for h in &header {
        if !is_identifier(h) {
            return Err(TableError::Format(format!(
                "header `{h}` is not an identifier (nested or decorated headers are not supported)"
            )));
        }
    }
    for hinted in hints.keys() {
        if !header.iter().any(|h| h.eq_ignore_ascii_case(hinted)) {
            return Err(TableError::Schema(format!(
                "type hint for unknown column `{hinted}`"
            )));
        }
    }
    for (i, row) in cells.iter().enumerate() {
        if row.len() != header.len() {
            return Err(TableError::Format(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
    }

    let mut columns = Vec::with_capacity(header.len());
    for (j, h) in header.iter().enumerate() {
        let hint = hints
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(h))
            .map(|(_, t)| *t);
        let ty = match hint {
            Some(t) => t,
            None => infer_column_type(cells.iter().map(|r| r[j].as_str())),
        };
        columns.push(Column::new(h.clone(), ty));
    }
    let schema = Schema::new(columns)?;

    let mut rows: Vec<Row> = Vec::with_capacity(cells.len());
    for (i, raw) in cells.iter().enumerate() {
        let mut row = Vec::with_capacity(raw.len());
        for (cell, col) in raw.iter().zip(schema.columns()) {
            let v = Value::parse_as(cell, col.ty).ok_or_else(|| {
                TableError::Type(format!(
                    "row {}: `{cell}` is not a valid {} for column `{}`",
                    i + 1,
                    col.ty,
                    col.name
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Table::new(name, schema, rows)
}

/// Narrowest of Integer, Real, Date, Text accepting every non-empty cell.
/// A column with no non-empty cells is Text.
pub(crate) fn infer_column_type<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> ColumnType {
    let non_empty = cells.filter(|c| !c.is_empty());
    if non_empty.clone().next().is_none() {
        return ColumnType::Text;
    }
    [ColumnType::Integer, ColumnType::Real, ColumnType::Date]
        .into_iter()
        .find(|&ty| non_empty.clone().all(|c| Value::parse_as(c, ty).is_some()))
        .unwrap_or(ColumnType::Text)
}

pub fn write_csv(table: &Table) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(table.schema().names())
        .expect("writing to memory");
    for row in table.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// Array of row objects whose keys follow schema order.
pub fn write_json_rows(table: &Table) -> String {
    let rows: Vec<serde_json::Value> = table
        .rows()
        .iter()
        .map(|row| {
            let obj: serde_json::Map<String, serde_json::Value> = table
                .schema()
                .names()
                .zip(row)
                .map(|(n, v)| (n.to_string(), value_to_json(v)))
                .collect();
            serde_json::Value::Object(obj)
        })
        .collect();
    if rows.is_empty() {
        let cols: Vec<&str> = table.schema().names().collect();
        return serde_json::json!({ "columns": cols, "rows": [] }).to_string();
    }
    serde_json::to_string(&rows).expect("table json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_date;

    fn no_hints() -> HashMap<String, ColumnType> {
        HashMap::new()
    }

    #[test]
    fn infers_integer_and_text() {
        let t = parse_csv("id,name\n1,Ann\n2,Bo", "people", &no_hints()).unwrap();
        let types: Vec<_> = t.schema().types().collect();
        assert_eq!(types, vec![ColumnType::Integer, ColumnType::Text]);
        assert_eq!(t.row_count(), 2);
        assert_eq!(t.rows()[1][1], Value::Text("Bo".into()));
    }

    #[test]
    fn hint_forces_date() {
        let hints = HashMap::from([("d".to_string(), ColumnType::Date)]);
        let t = parse_csv("d\n2021-01-02", "t", &hints).unwrap();
        assert_eq!(
            t.rows()[0][0],
            Value::Date(parse_date("2021-01-02").unwrap())
        );
    }

    #[test]
    fn hint_violation_is_a_type_error() {
        let hints = HashMap::from([("d".to_string(), ColumnType::Integer)]);
        assert!(matches!(
            parse_csv("d\nabc", "t", &hints),
            Err(TableError::Type(_))
        ));
    }

    #[test]
    fn mixed_integer_and_decimal_infers_real() {
        // Oracle: try-parse every candidate type over the column by hand.
        let cells = ["1", "1.5"];
        let accepts = |ty| cells.iter().all(|c| Value::parse_as(c, ty).is_some());
        assert!(!accepts(ColumnType::Integer));
        assert!(accepts(ColumnType::Real));
        let t = parse_csv("x\n1\n1.5", "t", &no_hints()).unwrap();
        assert_eq!(t.schema().columns()[0].ty, ColumnType::Real);
        assert_eq!(t.rows()[0][0], Value::Real(1.0));
    }

    #[test]
    fn empty_cells_become_null() {
        let t = parse_csv("a,b\n1,\n,x", "t", &no_hints()).unwrap();
        assert_eq!(t.rows()[0][1], Value::Null);
        assert_eq!(t.rows()[1][0], Value::Null);
        assert_eq!(t.schema().columns()[0].ty, ColumnType::Integer);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            parse_csv("a,b\n1,2,3", "t", &no_hints()),
            Err(TableError::Format(_))
        ));
    }

    #[test]
    fn decorated_headers_are_rejected() {
        assert!(parse_csv("Sales (2020),x\n1,2", "t", &no_hints()).is_err());
        assert!(parse_csv("a,a\n1,2", "t", &no_hints()).is_err());
    }

    #[test]
    fn json_rows_keep_first_object_key_order() {
        let t = parse_json_rows(
            r#"[{"b": "x", "a": 1}, {"b": null, "a": 2}]"#,
            "t",
            &no_hints(),
        )
        .unwrap();
        let names: Vec<_> = t.schema().names().collect();
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(t.rows()[1][0], Value::Null);
    }

    #[test]
    fn json_rows_with_sidecar_columns() {
        let t = parse_json_rows(
            r#"{"columns": ["a", "d"], "rows": [{"d": "2020-01-01", "a": 1.5}]}"#,
            "t",
            &no_hints(),
        )
        .unwrap();
        let types: Vec<_> = t.schema().types().collect();
        assert_eq!(types, vec![ColumnType::Real, ColumnType::Date]);
        assert!(parse_json_rows(r#"[{"a": 1}, {"b": 2}]"#, "t", &no_hints()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_table(
            Path::new("/nonexistent/x.csv"),
            TableFormat::Csv,
            "x",
            &no_hints(),
        )
        .unwrap_err();
        assert!(matches!(err, TableError::Io { .. }));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let text = "a,b,c,d\n1,2.5,x,2020-01-01\n,3.0,\"y, z\",\n";
        let t = parse_csv(text, "t", &no_hints()).unwrap();
        let again = parse_csv(&write_csv(&t), "t", &no_hints()).unwrap();
        assert_eq!(again, t);
        let json_again = parse_json_rows(&write_json_rows(&t), "t", &no_hints()).unwrap();
        assert_eq!(json_again, t);
    }
}
