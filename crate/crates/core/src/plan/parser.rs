//! Recursive-descent parser for conditions, output expressions and sort specs.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := literal | ref | agg | '(' expr ')'
//! ref    := [ident '.'] ident
//! agg    := FN '(' (expr | '*') ')'
//! pred   := conj ('OR' conj)*
//! conj   := atom ('AND' atom)*
//! atom   := 'TRUE' | expr OPCMP expr | '(' pred ')'
//! output := expr ['AS' ident]
//! sort   := 'ORDER' 'BY' expr ['ASC'|'DESC'] (',' expr ['ASC'|'DESC'])* ['LIMIT' int]
//! ```
//!
//! `*`/`/` bind tighter than `+`/`-`, comparisons tighter than AND, AND tighter
//! than OR. Keywords are case-insensitive.

use crate::table::{parse_integer, parse_real, Value};

use super::{
    AggArg, AggFunc, ArithOp, ColumnRef, CompareOp, Expr, OutputColumn, PlanError, Predicate,
    SortDirection, SortKey, SortSpec, SourceRef,
};

const KEYWORDS: [&str; 9] = [
    "AND", "OR", "AS", "ORDER", "BY", "ASC", "DESC", "LIMIT", "TRUE",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    Dot,
    Cmp(CompareOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

#[derive(Debug)]
struct Failure {
    offset: usize,
    expected: String,
}

type PResult<T> = Result<T, Failure>;

fn fail<T>(offset: usize, expected: impl Into<String>) -> PResult<T> {
    Err(Failure {
        offset,
        expected: expected.into(),
    })
}

fn lex(src: &str) -> PResult<Vec<(Tok, usize)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let at = |i: usize| chars.get(i).map(|&(_, c)| c);
    let off = |i: usize| chars.get(i).map(|&(o, _)| o).unwrap_or(src.len());
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while at(j).is_some_and(|c| c.is_alphanumeric() || c == '_') {
                j += 1;
            }
            out.push((Tok::Ident(src[start..off(j)].to_string()), start));
            i = j;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && at(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while at(j).is_some_and(|c| c.is_ascii_digit()) {
                j += 1;
            }
            if at(j) == Some('.') {
                j += 1;
                while at(j).is_some_and(|c| c.is_ascii_digit()) {
                    j += 1;
                }
            }
            if matches!(at(j), Some('e' | 'E')) {
                let mut k = j + 1;
                if matches!(at(k), Some('+' | '-')) {
                    k += 1;
                }
                if at(k).is_some_and(|c| c.is_ascii_digit()) {
                    while at(k).is_some_and(|c| c.is_ascii_digit()) {
                        k += 1;
                    }
                    j = k;
                }
            }
            if at(j).is_some_and(|c| c.is_alphanumeric() || c == '_') {
                return fail(off(j), "a separator after the number");
            }
            out.push((Tok::Number(src[start..off(j)].to_string()), start));
            i = j;
            continue;
        }
        // String literals: "..." with backslash escapes, '...' with '' doubling,
        // typographic ``...'' and “...”.
        if c == '"' || c == '\'' || c == '“' || (c == '`' && at(i + 1) == Some('`')) {
            let (mut j, close): (usize, &[char]) = match c {
                '"' => (i + 1, &['"']),
                '\'' => (i + 1, &['\'']),
                '“' => (i + 1, &['”']),
                _ => (i + 2, &['\'', '\'']),
            };
            let mut text = String::new();
            loop {
                let Some(ch) = at(j) else {
                    return fail(start, "a closing quote for the string literal");
                };
                if close.len() == 2 {
                    if ch == '\'' && at(j + 1) == Some('\'') {
                        j += 2;
                        break;
                    }
                } else if ch == close[0] {
                    if c == '\'' && at(j + 1) == Some('\'') {
                        text.push('\'');
                        j += 2;
                        continue;
                    }
                    j += 1;
                    break;
                }
                if c == '"' && ch == '\\' {
                    match at(j + 1) {
                        Some(e @ ('"' | '\\')) => {
                            text.push(e);
                            j += 2;
                            continue;
                        }
                        _ => return fail(off(j), "`\\\"` or `\\\\` escape"),
                    }
                }
                text.push(ch);
                j += 1;
            }
            out.push((Tok::Str(text), start));
            i = j;
            continue;
        }
        let two = |n: char| at(i + 1) == Some(n);
        let (tok, len) = match c {
            '+' => (Tok::Plus, 1),
            '-' => (Tok::Minus, 1),
            '*' => (Tok::Star, 1),
            '/' => (Tok::Slash, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            ',' => (Tok::Comma, 1),
            '.' => (Tok::Dot, 1),
            '=' if two('=') => (Tok::Cmp(CompareOp::Eq), 2),
            '=' => (Tok::Cmp(CompareOp::Eq), 1),
            '!' if two('=') => (Tok::Cmp(CompareOp::Ne), 2),
            '<' if two('>') => (Tok::Cmp(CompareOp::Ne), 2),
            '<' if two('=') => (Tok::Cmp(CompareOp::Le), 2),
            '<' => (Tok::Cmp(CompareOp::Lt), 1),
            '>' if two('=') => (Tok::Cmp(CompareOp::Ge), 2),
            '>' => (Tok::Cmp(CompareOp::Gt), 1),
            _ => return fail(start, format!("a token, found `{c}`")),
        };
        out.push((tok, start));
        i += len;
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

const MAX_NESTING: usize = 64;

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            tokens: lex(src)?,
            pos: 0,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            fail(
                self.offset(),
                format!("{what}, found {}", self.peek().describe()),
            )
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.peek().is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            fail(
                self.offset(),
                format!("`{kw}`, found {}", self.peek().describe()),
            )
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            t => fail(
                self.offset(),
                format!("end of input, found {}", t.describe()),
            ),
        }
    }

    fn identifier(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            t => fail(self.offset(), format!("{what}, found {}", t.describe())),
        }
    }

    fn nest(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return fail(
                self.offset(),
                format!("at most {MAX_NESTING} levels of nesting"),
            );
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.nest()?;
        let result = self.expr_inner();
        self.depth -= 1;
        result
    }

    fn expr_inner(&mut self) -> PResult<Expr> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.term()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.factor()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let start = self.offset();
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                number_literal(&text, false, start)
            }
            Tok::Minus => match self.peek_at(1).clone() {
                Tok::Number(text) => {
                    self.bump();
                    self.bump();
                    number_literal(&text, true, start)
                }
                _ => fail(start, "an expression (unary minus applies to numbers only)"),
            },
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Value::Text(s)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if is_keyword(&name) => {
                fail(start, format!("an expression, found keyword `{name}`"))
            }
            Tok::Ident(name) => {
                if let (Some(func), Tok::LParen) = (AggFunc::from_name(&name), self.peek_at(1)) {
                    self.bump();
                    self.bump();
                    let arg = if *self.peek() == Tok::Star {
                        if func != AggFunc::Count {
                            return fail(
                                self.offset(),
                                format!(
                                    "an expression; only COUNT accepts `*`, not {}",
                                    func.name()
                                ),
                            );
                        }
                        self.bump();
                        AggArg::Star
                    } else {
                        let arg_start = self.offset();
                        let inner = self.expr()?;
                        if inner.contains_aggregate() {
                            return fail(
                                arg_start,
                                "a non-aggregate argument (aggregates cannot nest)",
                            );
                        }
                        AggArg::Expr(Box::new(inner))
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Aggregate { func, arg });
                }
                self.bump();
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let column = self.identifier("a column name after `.`")?;
                    let qualifier = SourceRef::parse(&name).expect("lexed identifier");
                    return Ok(Expr::Column(ColumnRef::qualified(qualifier, column)));
                }
                Ok(Expr::Column(ColumnRef::bare(name)))
            }
            t => fail(start, format!("an expression, found {}", t.describe())),
        }
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        self.nest()?;
        let result = self.predicate_inner();
        self.depth -= 1;
        result
    }

    fn predicate_inner(&mut self) -> PResult<Predicate> {
        let mut parts = vec![self.conjunction()?];
        while self.peek().is_keyword("OR") {
            self.bump();
            parts.push(self.conjunction()?);
        }
        Ok(Predicate::or(parts))
    }

    fn conjunction(&mut self) -> PResult<Predicate> {
        let mut parts = vec![self.atom()?];
        while self.peek().is_keyword("AND") {
            self.bump();
            parts.push(self.atom()?);
        }
        Ok(Predicate::and(parts))
    }

    fn atom(&mut self) -> PResult<Predicate> {
        if self.peek().is_keyword("TRUE") {
            self.bump();
            return Ok(Predicate::True);
        }
        let saved = self.pos;
        let saved_depth = self.depth;
        let as_comparison = self.comparison();
        if as_comparison.is_ok() || self.tokens[saved].0 != Tok::LParen {
            return as_comparison;
        }
        let first_failure = as_comparison.unwrap_err();
        self.pos = saved;
        self.depth = saved_depth;
        self.bump();
        let grouped = self.predicate().and_then(|p| {
            self.expect(Tok::RParen, "`)`")?;
            Ok(p)
        });
        match grouped {
            Ok(p) => Ok(p),
            Err(e) if e.offset >= first_failure.offset => Err(e),
            Err(_) => Err(first_failure),
        }
    }

    fn comparison(&mut self) -> PResult<Predicate> {
        let left = self.expr()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            t => {
                return fail(
                    self.offset(),
                    format!("a comparison operator, found {}", t.describe()),
                )
            }
        };
        self.bump();
        let right = self.expr()?;
        Ok(Predicate::compare(op, left, right))
    }

    fn output(&mut self) -> PResult<OutputColumn> {
        let start = self.offset();
        let expr = self.expr()?;
        let alias = if self.peek().is_keyword("AS") {
            self.bump();
            Some(self.identifier("an alias after AS")?)
        } else {
            None
        };
        self.expect_eof()?;
        if alias.is_none() && !matches!(expr, Expr::Column(_)) {
            return fail(
                self.offset().max(start),
                "`AS <alias>` (computed output columns need an alias)",
            );
        }
        Ok(OutputColumn { expr, alias })
    }

    fn sort_spec(&mut self) -> PResult<SortSpec> {
        self.expect_keyword("ORDER")?;
        self.expect_keyword("BY")?;
        let mut keys = Vec::new();
        loop {
            let start = self.offset();
            let expr = self.expr()?;
            if expr.contains_aggregate() {
                return fail(start, "a sort key without aggregates");
            }
            let direction = if self.peek().is_keyword("ASC") {
                self.bump();
                SortDirection::Asc
            } else if self.peek().is_keyword("DESC") {
                self.bump();
                SortDirection::Desc
            } else {
                SortDirection::Asc
            };
            keys.push(SortKey { expr, direction });
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        let limit = if self.peek().is_keyword("LIMIT") {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Tok::Number(n) => match n.parse::<u64>() {
                    Ok(k) if k > 0 => Some(k),
                    _ => return fail(at, "a positive integer LIMIT"),
                },
                t => {
                    return fail(
                        at,
                        format!("a positive integer LIMIT, found {}", t.describe()),
                    )
                }
            }
        } else {
            None
        };
        self.expect_eof()?;
        Ok(SortSpec { keys, limit })
    }
}

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn number_literal(text: &str, negative: bool, offset: usize) -> PResult<Expr> {
    let signed = if negative {
        format!("-{text}")
    } else {
        text.to_string()
    };
    let is_integer = text.bytes().all(|b| b.is_ascii_digit());
    let value = if is_integer {
        parse_integer(&signed).map(Value::Integer)
    } else {
        parse_real(&signed).map(Value::Real)
    };
    match value {
        Some(v) => Ok(Expr::Literal(v)),
        None => fail(offset, format!("a representable number, found `{signed}`")),
    }
}

fn to_plan_error(src: &str, failure: Failure, context: &str) -> PlanError {
    let upto = &src[..failure.offset.min(src.len())];
    let line = upto.matches('\n').count() + 1;
    let col = upto.rsplit('\n').next().unwrap_or("").chars().count() + 1;
    PlanError::Syntax {
        line,
        col,
        expected: failure.expected,
        context: context.to_string(),
    }
}

fn run<T>(
    src: &str,
    context: &str,
    f: impl FnOnce(&mut Parser) -> PResult<T>,
) -> Result<T, PlanError> {
    let mut parser = Parser::new(src).map_err(|e| to_plan_error(src, e, context))?;
    f(&mut parser).map_err(|e| to_plan_error(src, e, context))
}

pub(crate) fn predicate_in(src: &str, context: &str) -> Result<Predicate, PlanError> {
    run(src, context, |p| {
        let start = p.offset();
        let pred = p.predicate()?;
        p.expect_eof()?;
        if pred.exprs().iter().any(|e| e.contains_aggregate()) {
            return fail(start, "a condition without aggregate calls");
        }
        Ok(pred)
    })
}

pub(crate) fn output_in(src: &str, context: &str) -> Result<OutputColumn, PlanError> {
    run(src, context, Parser::output)
}

pub(crate) fn sort_spec_in(src: &str, context: &str) -> Result<SortSpec, PlanError> {
    run(src, context, Parser::sort_spec)
}

pub fn parse_predicate(text: &str) -> Result<Predicate, PlanError> {
    predicate_in(text, "condition")
}

pub fn parse_output_expr(text: &str) -> Result<OutputColumn, PlanError> {
    output_in(text, "output")
}

pub fn parse_sort_spec(text: &str) -> Result<SortSpec, PlanError> {
    sort_spec_in(text, "sort condition")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str) -> Expr {
        Expr::column(name)
    }

    fn int(i: i64) -> Expr {
        Expr::Literal(Value::Integer(i))
    }

    #[test]
    fn age_over_forty() {
        assert_eq!(
            parse_predicate("Age > 40").unwrap(),
            Predicate::compare(CompareOp::Gt, col("Age"), int(40))
        );
    }

    #[test]
    fn qualified_join_condition() {
        assert_eq!(
            parse_predicate("Step1.DeptID = Step2.DeptCode").unwrap(),
            Predicate::compare(
                CompareOp::Eq,
                Expr::Column(ColumnRef::qualified(SourceRef::Step(1), "DeptID")),
                Expr::Column(ColumnRef::qualified(SourceRef::Step(2), "DeptCode")),
            )
        );
    }

    #[test]
    fn quote_styles_normalize() {
        let expected = Predicate::compare(
            CompareOp::Eq,
            col("Location"),
            Expr::Literal(Value::Text("London".into())),
        );
        for src in [
            "Location=\"London\"",
            "Location=``London''",
            "Location = 'London'",
            "Location = “London”",
        ] {
            assert_eq!(parse_predicate(src).unwrap(), expected, "{src}");
        }
        assert_eq!(
            parse_predicate(r#"a = "say \"hi\"""#).unwrap(),
            Predicate::compare(
                CompareOp::Eq,
                col("a"),
                Expr::Literal(Value::Text("say \"hi\"".into()))
            )
        );
    }

    #[test]
    fn aggregate_output_needs_alias() {
        // Hand-built AST oracle.
        let avg = Expr::Aggregate {
            func: AggFunc::Avg,
            arg: AggArg::Expr(Box::new(col("Duration"))),
        };
        assert!(matches!(
            parse_output_expr("AVG(Duration)"),
            Err(PlanError::Syntax { .. })
        ));
        assert_eq!(
            parse_output_expr("AVG(Duration) as avg_d").unwrap(),
            OutputColumn::aliased(avg, "avg_d")
        );
    }

    #[test]
    fn arithmetic_precedence() {
        let e = parse_output_expr("a + b * 2 - c as x").unwrap().expr;
        let expected = Expr::binary(
            ArithOp::Sub,
            Expr::binary(
                ArithOp::Add,
                col("a"),
                Expr::binary(ArithOp::Mul, col("b"), int(2)),
            ),
            col("c"),
        );
        assert_eq!(e, expected);
        let e = parse_output_expr("(EndDate - StartDate) as Duration").unwrap();
        assert_eq!(
            e,
            OutputColumn::aliased(
                Expr::binary(ArithOp::Sub, col("EndDate"), col("StartDate")),
                "Duration"
            )
        );
    }

    #[test]
    fn boolean_precedence() {
        let p = parse_predicate("a = 1 OR b = 2 AND c = 3").unwrap();
        let c = |n: &str, v| Predicate::compare(CompareOp::Eq, col(n), int(v));
        assert_eq!(
            p,
            Predicate::Or(vec![c("a", 1), Predicate::And(vec![c("b", 2), c("c", 3)])])
        );
        let p = parse_predicate("(a = 1 OR b = 2) AND c = 3").unwrap();
        assert_eq!(
            p,
            Predicate::And(vec![Predicate::Or(vec![c("a", 1), c("b", 2)]), c("c", 3)])
        );
        let p = parse_predicate("(a + 1) * 2 > 3").unwrap();
        assert!(matches!(p, Predicate::Compare { .. }));
    }

    #[test]
    fn negative_literals_and_binary_minus() {
        let e = parse_output_expr("a - -5 as x").unwrap().expr;
        assert_eq!(e, Expr::binary(ArithOp::Sub, col("a"), int(-5)));
        let e = parse_output_expr("a-5 as x").unwrap().expr;
        assert_eq!(e, Expr::binary(ArithOp::Sub, col("a"), int(5)));
        assert!(parse_output_expr("-a as x").is_err());
    }

    #[test]
    fn sort_specs() {
        let s = parse_sort_spec("ORDER BY Age DESC LIMIT 3").unwrap();
        assert_eq!(
            s,
            SortSpec {
                keys: vec![SortKey {
                    expr: col("Age"),
                    direction: SortDirection::Desc
                }],
                limit: Some(3)
            }
        );
        let s = parse_sort_spec("order by a, b desc").unwrap();
        assert_eq!(s.keys.len(), 2);
        assert_eq!(s.keys[0].direction, SortDirection::Asc);
        assert!(parse_sort_spec("ORDER BY a LIMIT 0").is_err());
        assert!(parse_sort_spec("a DESC").is_err());
        assert!(parse_sort_spec("ORDER BY COUNT(*)").is_err());
    }

    #[test]
    fn errors_carry_positions() {
        match parse_predicate("Age >") {
            Err(PlanError::Syntax { line, col, .. }) => {
                assert_eq!((line, col), (1, 6));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_predicate("a = 1 AND") {
            Err(PlanError::Syntax { col, .. }) => assert_eq!(col, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_aggregates_in_conditions_and_nesting() {
        assert!(parse_predicate("COUNT(*) > 1").is_err());
        assert!(parse_output_expr("SUM(MAX(a)) as s").is_err());
        assert!(parse_output_expr("SUM(*) as s").is_err());
        assert!(parse_output_expr("COUNT(*) as n").is_ok());
    }

    #[test]
    fn keywords_are_not_identifiers() {
        assert!(parse_predicate("AND = 1").is_err());
        assert!(parse_output_expr("a as ORDER").is_err());
    }

    #[test]
    fn count_as_column_name() {
        let out = parse_output_expr("Count").unwrap();
        assert_eq!(out, OutputColumn::column("Count"));
    }

    #[test]
    fn exponent_and_overflowing_literals() {
        assert_eq!(
            parse_output_expr("1e3 as x").unwrap().expr,
            Expr::Literal(Value::Real(1000.0))
        );
        assert_eq!(
            parse_output_expr("-9223372036854775808 as x").unwrap().expr,
            Expr::Literal(Value::Integer(i64::MIN))
        );
        assert!(parse_output_expr("9223372036854775808 as x").is_err());
    }
}
