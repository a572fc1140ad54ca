use std::fmt::Write;
use std::num::NonZeroUsize;

use super::Table;

/// Flattens a table into prompt text, keeping only the first `k_rows` rows:
///
/// ```text
/// table name: <name>
/// col: h1 | h2 | ... | hn
/// row 1: c11 | ... | c1n
/// ```
///
/// Every line ends with `\n`. Nulls render empty; embedded newlines in text
/// cells become spaces so the line count stays `2 + min(k, rows)`.
pub fn linearize(table: &Table, k_rows: NonZeroUsize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "table name: {}", table.name());
    let header: Vec<&str> = table.schema().names().collect();
    let _ = writeln!(out, "col: {}", header.join(" | "));
    for (i, row) in table.rows().iter().take(k_rows.get()).enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|v| v.to_string().replace(['\n', '\r'], " "))
            .collect();
        let _ = writeln!(out, "row {}: {}", i + 1, cells.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, ColumnType, Schema, Value};

    fn k(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    fn has_pet() -> Table {
        let schema = Schema::new(vec![
            Column::new("ID", ColumnType::Integer),
            Column::new("Has_Pet", ColumnType::Text),
        ])
        .unwrap();
        Table::new(
            "Has_Pet",
            schema,
            vec![
                vec![Value::Integer(1), Value::Text("Yes".into())],
                vec![Value::Integer(2), Value::Text("No".into())],
            ],
        )
        .unwrap()
    }

    #[test]
    fn pet_table_golden() {
        assert_eq!(
            linearize(&has_pet(), k(2)),
            "table name: Has_Pet\ncol: ID | Has_Pet\nrow 1: 1 | Yes\nrow 2: 2 | No\n"
        );
    }

    #[test]
    fn empty_table_has_header_only() {
        let t = Table::new("E", has_pet().schema().clone(), vec![]).unwrap();
        assert_eq!(linearize(&t, k(3)), "table name: E\ncol: ID | Has_Pet\n");
    }

    #[test]
    fn truncates_to_k_rows() {
        let schema = Schema::new(vec![Column::new("n", ColumnType::Integer)]).unwrap();
        let rows = (0..100).map(|i| vec![Value::Integer(i)]).collect();
        let t = Table::new("big", schema, rows).unwrap();
        let text = linearize(&t, k(3));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().filter(|l| l.starts_with("row ")).count(), 3);
    }

    #[test]
    fn null_real_and_date_rendering() {
        let schema = Schema::new(vec![
            Column::new("r", ColumnType::Real),
            Column::new("d", ColumnType::Date),
        ])
        .unwrap();
        let t = Table::new(
            "t",
            schema,
            vec![
                vec![
                    Value::Real(15.0),
                    Value::parse_as("2021-03-04", ColumnType::Date).unwrap(),
                ],
                vec![Value::Null, Value::Null],
            ],
        )
        .unwrap();
        assert_eq!(
            linearize(&t, k(5)),
            "table name: t\ncol: r | d\nrow 1: 15.0 | 2021-03-04\nrow 2:  | \n"
        );
    }
}
