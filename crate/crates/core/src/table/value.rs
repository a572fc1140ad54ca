use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Declared type of a table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnType {
    Integer,
    Real,
    Text,
    Date,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Real)
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Integer => "Integer",
            ColumnType::Real => "Real",
            ColumnType::Text => "Text",
            ColumnType::Date => "Date",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "integer" | "int" => Some(ColumnType::Integer),
            "real" | "float" | "double" => Some(ColumnType::Real),
            "text" | "string" => Some(ColumnType::Text),
            "date" => Some(ColumnType::Date),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Date(NaiveDate),
}

impl Value {
    pub fn column_type(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Integer(_) => Some(ColumnType::Integer),
            Value::Real(_) => Some(ColumnType::Real),
            Value::Text(_) => Some(ColumnType::Text),
            Value::Date(_) => Some(ColumnType::Date),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn conforms_to(&self, ty: ColumnType) -> bool {
        match self.column_type() {
            None => true,
            Some(t) => t == ty,
        }
    }

    /// Parses `text` as a value of type `ty`. Empty text is `Null`.
    pub fn parse_as(text: &str, ty: ColumnType) -> Option<Value> {
        if text.is_empty() {
            return Some(Value::Null);
        }
        match ty {
            ColumnType::Integer => parse_integer(text.trim()).map(Value::Integer),
            ColumnType::Real => parse_real(text.trim()).map(Value::Real),
            ColumnType::Date => parse_date(text.trim()).map(Value::Date),
            ColumnType::Text => Some(Value::Text(text.to_string())),
        }
    }

    /// Hashable identity used for grouping and duplicate elimination.
    /// Integer and Real keep separate identities since a column holds a single type.
    pub fn key(&self) -> ValueKey {
        match self {
            Value::Null => ValueKey::Null,
            Value::Integer(i) => ValueKey::Integer(*i),
            Value::Real(r) => {
                let r = if *r == 0.0 { 0.0 } else { *r };
                ValueKey::Real(r.to_bits())
            }
            Value::Text(s) => ValueKey::Text(s.clone()),
            Value::Date(d) => ValueKey::Date(d.num_days_from_ce()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => Ok(()),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => f.write_str(&format_real(*r)),
            Value::Text(s) => f.write_str(s),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKey {
    Null,
    Integer(i64),
    Real(u64),
    Text(String),
    Date(i32),
}

/// Row identity: a row of keys.
pub fn row_key(row: &[Value]) -> Vec<ValueKey> {
    row.iter().map(Value::key).collect()
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

/// Shortest round-trip decimal; integral reals keep a trailing `.0`.
pub fn format_real(r: f64) -> String {
    format!("{r:?}")
}

pub fn parse_integer(text: &str) -> Option<i64> {
    let digits = text.strip_prefix(['-', '+']).unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

pub fn parse_real(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['-', '+']).unwrap_or(text);
    let mut saw_digit = false;
    for b in body.bytes() {
        match b {
            b'0'..=b'9' => saw_digit = true,
            b'.' | b'e' | b'E' | b'+' | b'-' => {}
            _ => return None,
        }
    }
    if !saw_digit || !body.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        return None;
    }
    text.parse::<f64>().ok().filter(|r| r.is_finite())
}

/// Strict ISO-8601 calendar date `YYYY-MM-DD`.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let b = text.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let digits_ok = b
        .iter()
        .enumerate()
        .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !digits_ok {
        return None;
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
}

/// Orders two values. `None` means incomparable: a Null operand, or operands of
/// different kinds. Integers widen to reals when compared with reals.
pub fn compare_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => Some(x.cmp(y)),
        (Value::Integer(x), Value::Real(y)) => (*x as f64).partial_cmp(y),
        (Value::Real(x), Value::Integer(y)) => x.partial_cmp(&(*y as f64)),
        (Value::Real(x), Value::Real(y)) => x.partial_cmp(y),
        (Value::Text(x), Value::Text(y)) => Some(x.chars().cmp(y.chars())),
        (Value::Date(x), Value::Date(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

/// Total order used for sorting: Null after every non-null value, in either
/// direction. Errors on two non-null values of different kinds.
pub fn sort_order(a: &Value, b: &Value) -> Result<Ordering, (Value, Value)> {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ok(Ordering::Equal),
        (true, false) => Ok(Ordering::Greater),
        (false, true) => Ok(Ordering::Less),
        (false, false) => compare_values(a, b).ok_or_else(|| (a.clone(), b.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> Value {
        Value::Date(parse_date(s).unwrap())
    }

    #[test]
    fn numeric_widening() {
        assert_eq!(
            compare_values(&Value::Integer(2), &Value::Real(2.0)),
            Some(Ordering::Equal)
        );
        assert_eq!(
            compare_values(&Value::Real(2.5), &Value::Integer(2)),
            Some(Ordering::Greater)
        );
    }

    #[test]
    fn null_and_cross_kind_are_incomparable() {
        assert_eq!(compare_values(&Value::Null, &Value::Integer(5)), None);
        assert_eq!(compare_values(&Value::Null, &Value::Null), None);
        assert_eq!(
            compare_values(&Value::Text("1".into()), &Value::Integer(1)),
            None
        );
    }

    #[test]
    fn dates_compare_chronologically() {
        let text_as_date = Value::parse_as("2021-02-01", ColumnType::Date).unwrap();
        assert_eq!(
            compare_values(&text_as_date, &date("2021-01-31")),
            Some(Ordering::Greater)
        );
    }

    #[test]
    fn text_compares_by_codepoint() {
        let a = Value::Text("Z".into());
        let b = Value::Text("a".into());
        assert_eq!(compare_values(&a, &b), Some(Ordering::Less));
        let e = Value::Text("é".into());
        assert_eq!(compare_values(&b, &e), Some(Ordering::Less));
    }

    #[test]
    fn date_text_round_trip() {
        let d = date("1999-12-31");
        assert_eq!(d.to_string(), "1999-12-31");
        assert!(parse_date("1999-2-3").is_none());
        assert!(parse_date("1999-02-30").is_none());
    }

    #[test]
    fn real_parsing_rejects_words() {
        assert_eq!(parse_real("1.5"), Some(1.5));
        assert_eq!(parse_real(".5"), Some(0.5));
        assert_eq!(parse_real("1e3"), Some(1000.0));
        assert!(parse_real("inf").is_none());
        assert!(parse_real("NaN").is_none());
        assert!(parse_real("e5").is_none());
        assert!(parse_real("").is_none());
    }

    #[test]
    fn real_formatting_keeps_fraction() {
        assert_eq!(format_real(15.0), "15.0");
        assert_eq!(format_real(0.1), "0.1");
        assert_eq!(parse_real(&format_real(1e-7)), Some(1e-7));
        assert_eq!(parse_real(&format_real(1e20)), Some(1e20));
    }

    #[test]
    fn sort_order_puts_null_last() {
        assert_eq!(
            sort_order(&Value::Null, &Value::Integer(1)),
            Ok(Ordering::Greater)
        );
        assert!(sort_order(&Value::Text("a".into()), &Value::Integer(1)).is_err());
    }

    #[test]
    fn signed_zero_shares_a_key() {
        assert_eq!(Value::Real(-0.0).key(), Value::Real(0.0).key());
    }
}
