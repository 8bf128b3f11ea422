//! Textual filter expressions.
//!
//! ```text
//! expr  := or
//! or    := and ("or" and)*
//! and   := unary ("and" unary)*
//! unary := "not" unary | "(" expr ")" | "true" | "false" | atom
//! atom  := field op value | field "in" "(" value ("," value)* ")"
//! op    := "=" | "!=" | "<" | "<=" | ">" | ">="
//! ```
//!
//! Fields and values are checked while parsing, so a parsed spec can always
//! be evaluated. `Display` prints a canonical form that parses back to the
//! same tree.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::ElementKind;
use crate::answers::AnswerOption;
use crate::orchestrator::Profession;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown attribute `{0}`")]
    UnknownField(String),
    #[error("`{field}` does not accept `{value}`")]
    BadValue { field: String, value: String },
    #[error("operator `{op}` cannot be used with `{field}`")]
    BadOperator { field: String, op: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    QuestionKind,
    QuestionLoc,
    QuestionCase,
    AnswerOption,
    AnswerConfidence,
    AnswerDifficulty,
    AnswerDuration,
    AnswerDurationQuartile,
    AnswerExplanationChars,
    AnswerExplanationQuartile,
    AnswerOrder,
    AnswerConsensus,
    WorkerProfession,
    WorkerScore,
    WorkerYoe,
    WorkerYoeQuartile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Number,
    Kind,
    Text,
    Option,
    Bool,
    Profession,
}

impl Field {
    pub const ALL: [Field; 16] = [
        Field::QuestionKind,
        Field::QuestionLoc,
        Field::QuestionCase,
        Field::AnswerOption,
        Field::AnswerConfidence,
        Field::AnswerDifficulty,
        Field::AnswerDuration,
        Field::AnswerDurationQuartile,
        Field::AnswerExplanationChars,
        Field::AnswerExplanationQuartile,
        Field::AnswerOrder,
        Field::AnswerConsensus,
        Field::WorkerProfession,
        Field::WorkerScore,
        Field::WorkerYoe,
        Field::WorkerYoeQuartile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::QuestionKind => "question.kind",
            Field::QuestionLoc => "question.loc",
            Field::QuestionCase => "question.case",
            Field::AnswerOption => "answer.option",
            Field::AnswerConfidence => "answer.confidence",
            Field::AnswerDifficulty => "answer.difficulty",
            Field::AnswerDuration => "answer.duration",
            Field::AnswerDurationQuartile => "answer.duration_quartile",
            Field::AnswerExplanationChars => "answer.explanation_chars",
            Field::AnswerExplanationQuartile => "answer.explanation_quartile",
            Field::AnswerOrder => "answer.order",
            Field::AnswerConsensus => "answer.consensus",
            Field::WorkerProfession => "worker.profession",
            Field::WorkerScore => "worker.score",
            Field::WorkerYoe => "worker.yoe",
            Field::WorkerYoeQuartile => "worker.yoe_quartile",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        let name = name.to_ascii_lowercase();
        let alias = match name.as_str() {
            "question.covered_lines" => "question.loc",
            "worker.years_of_experience" => "worker.yoe",
            "answer.order_in_hit" => "answer.order",
            other => other,
        };
        Field::ALL.into_iter().find(|f| f.name() == alias)
    }

    pub fn kind(self) -> FieldType {
        match self {
            Field::QuestionKind => FieldType::Kind,
            Field::QuestionCase => FieldType::Text,
            Field::AnswerOption => FieldType::Option,
            Field::AnswerConsensus => FieldType::Bool,
            Field::WorkerProfession => FieldType::Profession,
            _ => FieldType::Number,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::In => "in",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, Op::Lt | Op::Le | Op::Gt | Op::Ge)
    }
}

/// A literal, already normalized for its field.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Sym(String),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Sym(s) if is_bare_word(s) => f.write_str(s),
            Value::Sym(s) => write!(f, "\"{s}\""),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

fn is_bare_word(s: &str) -> bool {
    let reserved = ["and", "or", "not", "in", "true", "false"];
    s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
        && !reserved.iter().any(|r| s.eq_ignore_ascii_case(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub field: Field,
    pub op: Op,
    /// One value, or several for `in`.
    pub values: Vec<Value>,
}

impl Atom {
    pub fn new(field: Field, op: Op, values: Vec<Value>) -> Result<Atom, SpecError> {
        let bad_op = || SpecError::BadOperator {
            field: field.name().into(),
            op: op.symbol().into(),
        };
        if op.is_ordering() && field.kind() != FieldType::Number {
            return Err(bad_op());
        }
        if values.is_empty() || (op != Op::In && values.len() != 1) {
            return Err(bad_op());
        }
        let values = values
            .into_iter()
            .map(|v| normalize(field, v))
            .collect::<Result<_, _>>()?;
        Ok(Atom { field, op, values })
    }
}

fn normalize(field: Field, v: Value) -> Result<Value, SpecError> {
    let bad = |v: &Value| SpecError::BadValue {
        field: field.name().into(),
        value: v.to_string(),
    };
    let sym = |v: &Value| match v {
        Value::Sym(s) => Some(s.clone()),
        Value::Num(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
    };
    match field.kind() {
        FieldType::Number => match v {
            Value::Num(_) => Ok(v),
            _ => Err(bad(&v)),
        },
        FieldType::Bool => match v {
            Value::Bool(_) => Ok(v),
            _ => Err(bad(&v)),
        },
        FieldType::Text => Ok(Value::Sym(sym(&v).unwrap_or_default())),
        FieldType::Kind => sym(&v)
            .and_then(|s| ElementKind::parse(&s))
            .map(|k| Value::Sym(k.as_str().to_ascii_lowercase()))
            .ok_or_else(|| bad(&v)),
        FieldType::Option => sym(&v)
            .and_then(|s| AnswerOption::from_str(&s).ok())
            .map(|o| Value::Sym(o.as_str().to_ascii_lowercase()))
            .ok_or_else(|| bad(&v)),
        FieldType::Profession => sym(&v)
            .and_then(|s| Profession::from_str(&s).ok())
            .map(|p| Value::Sym(p.as_str().to_string()))
            .ok_or_else(|| bad(&v)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    True,
    False,
    Atom(Atom),
    Not(Box<FilterSpec>),
    And(Vec<FilterSpec>),
    Or(Vec<FilterSpec>),
}

impl FilterSpec {
    pub fn parse(text: &str) -> Result<FilterSpec, SpecError> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens, pos: 0, len: text.len() };
        let spec = p.or()?;
        match p.peek() {
            None => Ok(spec),
            Some((off, t)) => Err(SpecError::Syntax {
                offset: off,
                message: format!("unexpected `{t}`"),
            }),
        }
    }

    pub fn and(a: FilterSpec, b: FilterSpec) -> FilterSpec {
        FilterSpec::And(vec![a, b])
    }

    pub fn or(a: FilterSpec, b: FilterSpec) -> FilterSpec {
        FilterSpec::Or(vec![a, b])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: FilterSpec) -> FilterSpec {
        FilterSpec::Not(Box::new(a))
    }

    /// Every attribute the filter reads.
    pub fn fields(&self) -> Vec<Field> {
        let mut out = Vec::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields(&self, out: &mut Vec<Field>) {
        match self {
            FilterSpec::True | FilterSpec::False => {}
            FilterSpec::Atom(a) => {
                if !out.contains(&a.field) {
                    out.push(a.field);
                }
            }
            FilterSpec::Not(s) => s.collect_fields(out),
            FilterSpec::And(v) | FilterSpec::Or(v) => v.iter().for_each(|s| s.collect_fields(out)),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterSpec::parse(s)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.field.name(), self.op.symbol())?;
        if self.op == Op::In {
            let vals: Vec<String> = self.values.iter().map(Value::to_string).collect();
            write!(f, "({})", vals.join(", "))
        } else {
            write!(f, "{}", self.values[0])
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::True => f.write_str("true"),
            FilterSpec::False => f.write_str("false"),
            FilterSpec::Atom(a) => write!(f, "{a}"),
            FilterSpec::Not(inner) => match **inner {
                FilterSpec::And(_) | FilterSpec::Or(_) => write!(f, "not ({inner})"),
                _ => write!(f, "not {inner}"),
            },
            FilterSpec::And(items) => join(f, items, " and ", false),
            FilterSpec::Or(items) => join(f, items, " or ", true),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, items: &[FilterSpec], sep: &str, in_or: bool) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        let bare = match item {
            FilterSpec::And(_) => in_or,
            FilterSpec::Or(_) => false,
            _ => true,
        };
        if bare {
            write!(f, "{item}")?;
        } else {
            write!(f, "({item})")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Op(Op),
    Word(String),
    Num(f64),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::Comma => f.write_str(","),
            Tok::Op(o) => f.write_str(o.symbol()),
            Tok::Word(w) => f.write_str(w),
            Tok::Num(n) => write!(f, "{n}"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, SpecError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '=' => {
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
                Tok::Op(Op::Eq)
            }
            '!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                Tok::Op(Op::Ne)
            }
            '<' | '>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                i += if eq { 2 } else { 1 };
                Tok::Op(match (c, eq) {
                    ('<', false) => Op::Lt,
                    ('<', true) => Op::Le,
                    ('>', false) => Op::Gt,
                    _ => Op::Ge,
                })
            }
            '"' | '\'' => {
                let end = text[i + 1..].find(c).ok_or(SpecError::Syntax {
                    offset: i,
                    message: "unterminated string".into(),
                })?;
                let s = text[i + 1..i + 1 + end].to_string();
                i += end + 2;
                Tok::Word(s)
            }
            c if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let n: f64 = text[start..i].parse().map_err(|_| SpecError::Syntax {
                    offset: start,
                    message: format!("bad number `{}`", &text[start..i]),
                })?;
                // Percent signs are decoration: `score = 100%`.
                if bytes.get(i) == Some(&b'%') {
                    i += 1;
                }
                Tok::Num(n)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.' | b'-')) {
                    i += 1;
                }
                Tok::Word(text[start..i].to_string())
            }
            other => {
                return Err(SpecError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Tok)> {
        self.tokens.get(self.pos).map(|(o, t)| (*o, t))
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.len, |(o, _)| o)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SpecError> {
        Err(SpecError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if let Some((_, Tok::Word(w))) = self.peek() {
            if w.eq_ignore_ascii_case(kw) {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SpecError> {
        match self.peek() {
            Some((_, t)) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            Some((_, t)) => self.err(format!("expected `{tok}`, found `{t}`")),
            None => self.err(format!("expected `{tok}`, found end of input")),
        }
    }

    fn or(&mut self) -> Result<FilterSpec, SpecError> {
        let mut items = vec![self.and()?];
        while self.keyword("or") {
            items.push(self.and()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { FilterSpec::Or(items) })
    }

    fn and(&mut self) -> Result<FilterSpec, SpecError> {
        let mut items = vec![self.unary()?];
        while self.keyword("and") {
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { FilterSpec::And(items) })
    }

    fn unary(&mut self) -> Result<FilterSpec, SpecError> {
        if self.keyword("not") {
            return Ok(FilterSpec::Not(Box::new(self.unary()?)));
        }
        if self.keyword("true") {
            return Ok(FilterSpec::True);
        }
        if self.keyword("false") {
            return Ok(FilterSpec::False);
        }
        match self.peek() {
            Some((_, Tok::LParen)) => {
                self.pos += 1;
                let inner = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some((_, Tok::Word(_))) => self.atom(),
            Some((_, t)) => self.err(format!("unexpected `{t}`")),
            None => self.err("unexpected end of input"),
        }
    }

    fn atom(&mut self) -> Result<FilterSpec, SpecError> {
        let Some((_, Tok::Word(name))) = self.peek() else {
            return self.err("expected an attribute");
        };
        let field = Field::from_name(name).ok_or_else(|| SpecError::UnknownField(name.clone()))?;
        self.pos += 1;
        let op = if self.keyword("in") {
            Op::In
        } else {
            match self.peek() {
                Some((_, Tok::Op(op))) => {
                    let op = *op;
                    self.pos += 1;
                    op
                }
                _ => return self.err(format!("expected an operator after `{}`", field.name())),
            }
        };
        let values = if op == Op::In {
            self.expect(Tok::LParen)?;
            let mut vals = vec![self.value()?];
            while self.peek().is_some_and(|(_, t)| *t == Tok::Comma) {
                self.pos += 1;
                vals.push(self.value()?);
            }
            self.expect(Tok::RParen)?;
            vals
        } else {
            vec![self.value()?]
        };
        Atom::new(field, op, values).map(FilterSpec::Atom)
    }

    fn value(&mut self) -> Result<Value, SpecError> {
        let v = match self.peek() {
            Some((_, Tok::Num(n))) => Value::Num(*n),
            Some((_, Tok::Word(w))) if w.eq_ignore_ascii_case("true") => Value::Bool(true),
            Some((_, Tok::Word(w))) if w.eq_ignore_ascii_case("false") => Value::Bool(false),
            Some((_, Tok::Word(w))) => Value::Sym(w.clone()),
            _ => return self.err("expected a value"),
        };
        self.pos += 1;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(text: &str) -> String {
        FilterSpec::parse(text).unwrap().to_string()
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(
            rt("NOT(question.kind=CONDITIONAL AND question.covered_lines>3)"),
            "not (question.kind = conditional and question.loc > 3)"
        );
        assert_eq!(rt("worker.score = 100%"), "worker.score = 100");
        assert_eq!(
            rt("not worker.profession in (Undergraduate_student, 'graduate student')"),
            "not worker.profession in (undergraduate, graduate)"
        );
    }

    #[test]
    fn precedence() {
        let s = FilterSpec::parse("answer.order = 1 and answer.confidence > 2 or answer.option = yes").unwrap();
        assert!(matches!(&s, FilterSpec::Or(v) if matches!(v[0], FilterSpec::And(_))));
        assert_eq!(s.to_string(), "answer.order = 1 and answer.confidence > 2 or answer.option = yes");
        let s = FilterSpec::parse("answer.order = 1 and (answer.confidence > 2 or answer.option = yes)").unwrap();
        assert_eq!(s.to_string(), "answer.order = 1 and (answer.confidence > 2 or answer.option = yes)");
    }

    #[test]
    fn errors() {
        assert_eq!(
            FilterSpec::parse("worker.height > 3"),
            Err(SpecError::UnknownField("worker.height".into()))
        );
        assert!(matches!(
            FilterSpec::parse("worker.profession > hobbyist"),
            Err(SpecError::BadOperator { .. })
        ));
        assert!(matches!(
            FilterSpec::parse("question.kind = lambda"),
            Err(SpecError::BadValue { .. })
        ));
        assert!(matches!(FilterSpec::parse("(true"), Err(SpecError::Syntax { .. })));
        assert!(matches!(FilterSpec::parse("true true"), Err(SpecError::Syntax { .. })));
        assert!(matches!(FilterSpec::parse(""), Err(SpecError::Syntax { .. })));
    }
}
