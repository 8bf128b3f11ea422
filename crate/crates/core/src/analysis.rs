//! Structural extraction of code elements from a single Java method.
//!
//! This is deliberately not a Java parser. A small lexer feeds a recognizer
//! that understands statements, blocks and the control keywords, which is all
//! the extraction rules need. Anything outside that subset (lambdas, method
//! references, anonymous classes, labels, local classes, synchronized blocks,
//! try-with-resources) is rejected with the offending line.
//!
//! Extraction rules:
//!
//! * CONDITIONAL: one element per `if` statement, spanning the `if` line
//!   through the last line of its final `else`/`else if` branch. A `switch` is
//!   one conditional. A statement containing the ternary operator yields one
//!   conditional spanning that statement.
//! * LOOP: one element per `for`/`while`/`do`, header through closing line.
//! * METHOD_CALL: one element per statement (simple statement, `return`, or
//!   the header of an `if`/loop/`switch`) that invokes at least one method or
//!   constructor. The span is the line of the first invocation and the name
//!   is its qualified callee text. `throw` statements and `catch` blocks are
//!   ignored.
//! * VARIABLE: one element per declared parameter or local. Shadowed or
//!   re-declared names in sibling blocks are separate elements. Fields and
//!   catch parameters are not variables. A statement contributes its lines to
//!   a variable's span when the variable occurs in it, except that in a
//!   statement that also calls a method only the variables it defines
//!   (declares, assigns, increments) are credited; the remaining operands are
//!   what the method-call question already asks about.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugCase, LineNo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ElementKind {
    Loop,
    Conditional,
    MethodCall,
    Variable,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Loop,
        ElementKind::Conditional,
        ElementKind::MethodCall,
        ElementKind::Variable,
    ];

    /// Tie-break rank used when two elements start on the same line.
    pub fn rank(self) -> u8 {
        match self {
            ElementKind::Loop => 0,
            ElementKind::Conditional => 1,
            ElementKind::MethodCall => 2,
            ElementKind::Variable => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Loop => "LOOP",
            ElementKind::Conditional => "CONDITIONAL",
            ElementKind::MethodCall => "METHOD_CALL",
            ElementKind::Variable => "VARIABLE",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_uppercase().replace([' ', '-'], "_").as_str() {
            "LOOP" => Some(ElementKind::Loop),
            "CONDITIONAL" => Some(ElementKind::Conditional),
            "METHOD_CALL" | "CALL" | "METHODCALL" => Some(ElementKind::MethodCall),
            "VARIABLE" => Some(ElementKind::Variable),
            _ => None,
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeElement {
    pub element_id: String,
    pub kind: ElementKind,
    /// Callee text or variable name; empty for loops and conditionals.
    pub name: String,
    pub span: BTreeSet<LineNo>,
}

impl CodeElement {
    pub fn min_line(&self) -> LineNo {
        *self.span.iter().next().expect("spans are never empty")
    }

    pub fn max_line(&self) -> LineNo {
        *self.span.iter().next_back().expect("spans are never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("line {line}: unsupported construct: {construct}")]
    Unsupported { line: LineNo, construct: String },
    #[error("line {line}: {message}")]
    Syntax { line: LineNo, message: String },
}

/// Extracts the elements of a bug case. Element ids are `<case_id>-E<nn>`.
pub fn extract_elements(case: &BugCase) -> Result<Vec<CodeElement>, AnalysisError> {
    extract_from_lines(&case.case_id, &case.source_text())
}

/// Extracts elements from numbered source lines. A leading method signature
/// is optional; without one, free lower-case identifiers are treated as
/// variables declared outside the snippet.
pub fn extract_from_lines(
    id_prefix: &str,
    lines: &[(LineNo, &str)],
) -> Result<Vec<CodeElement>, AnalysisError> {
    let tokens = lex(lines)?;
    let mut parser = Parser::new(&tokens);
    parser.run()?;
    Ok(parser.finish(id_prefix))
}

/// Executable lines of `case` not covered by any element span.
pub fn uncovered_lines(case: &BugCase, elements: &[CodeElement]) -> BTreeSet<LineNo> {
    let covered: BTreeSet<LineNo> = elements.iter().flat_map(|e| e.span.iter().copied()).collect();
    case.executable_lines()
        .difference(&covered)
        .copied()
        .collect()
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Literal,
    Punct,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    text: String,
    line: LineNo,
}

const PUNCT: [&str; 27] = [
    ">>>=", "<<=", ">>=", "...", "->", "::", "++", "--", "==", "!=", "<=", ">=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", "@", "?", ":", ".",
];

fn lex(lines: &[(LineNo, &str)]) -> Result<Vec<Token>, AnalysisError> {
    let mut tokens = Vec::new();
    let mut in_block_comment = false;
    for &(line, text) in lines {
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if in_block_comment {
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    in_block_comment = false;
                    i += 2;
                } else {
                    i += 1;
                }
                continue;
            }
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            } else if c == '/' && chars.get(i + 1) == Some(&'*') {
                in_block_comment = true;
                i += 2;
            } else if c == '"' || c == '\'' {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != c {
                    if chars[i] == '\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(AnalysisError::Syntax {
                        line,
                        message: "unterminated literal".into(),
                    });
                }
                i += 1;
                tokens.push(Token {
                    kind: TokKind::Literal,
                    text: chars[start..i].iter().collect(),
                    line,
                });
            } else if c.is_alphabetic() || c == '_' || c == '$' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokKind::Ident,
                    text: chars[start..i].iter().collect(),
                    line,
                });
            } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokKind::Literal,
                    text: chars[start..i].iter().collect(),
                    line,
                });
            } else {
                let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
                let op = PUNCT
                    .iter()
                    .find(|p| rest.starts_with(**p))
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| c.to_string());
                i += op.chars().count();
                tokens.push(Token {
                    kind: TokKind::Punct,
                    text: op,
                    line,
                });
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Recognizer

const KEYWORDS: &[&str] = &[
    "abstract", "assert", "break", "case", "catch", "class", "const", "continue", "default", "do",
    "else", "enum", "extends", "final", "finally", "for", "goto", "if", "implements", "import",
    "instanceof", "interface", "native", "new", "package", "private", "protected", "public",
    "return", "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "volatile", "while", "true", "false", "null",
];

const PRIMITIVES: &[&str] = &[
    "boolean", "byte", "char", "short", "int", "long", "float", "double", "void", "var",
];

const MODIFIERS: &[&str] = &[
    "public", "protected", "private", "static", "final", "abstract", "native", "strictfp",
    "synchronized", "transient", "volatile",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn is_primitive(s: &str) -> bool {
    PRIMITIVES.contains(&s)
}

struct Variable {
    name: String,
    lines: BTreeSet<LineNo>,
}

struct Raw {
    kind: ElementKind,
    name: String,
    span: BTreeSet<LineNo>,
}

enum Slot {
    Element(Raw),
    Variable(usize),
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    scopes: Vec<Vec<(String, usize)>>,
    vars: Vec<Variable>,
    slots: Vec<Slot>,
    implicit_vars: bool,
}

fn range(from: LineNo, to: LineNo) -> BTreeSet<LineNo> {
    (from..=to).collect()
}

impl<'t> Parser<'t> {
    fn new(toks: &'t [Token]) -> Self {
        Parser {
            toks,
            pos: 0,
            scopes: vec![Vec::new()],
            vars: Vec::new(),
            slots: Vec::new(),
            implicit_vars: false,
        }
    }

    fn finish(self, id_prefix: &str) -> Vec<CodeElement> {
        let Parser { slots, vars, .. } = self;
        let mut raws: Vec<Raw> = slots
            .into_iter()
            .filter_map(|slot| match slot {
                Slot::Element(raw) if !raw.span.is_empty() => Some(raw),
                Slot::Element(_) => None,
                Slot::Variable(idx) => Some(Raw {
                    kind: ElementKind::Variable,
                    name: vars[idx].name.clone(),
                    span: vars[idx].lines.clone(),
                }),
            })
            .filter(|raw| !raw.span.is_empty())
            .collect();
        // Stable: equal keys keep discovery order.
        raws.sort_by_key(|r| (*r.span.iter().next().unwrap(), r.kind.rank()));
        let mut seen = BTreeSet::new();
        raws.retain(|r| seen.insert((r.kind, r.name.clone(), r.span.clone())));
        raws.into_iter()
            .enumerate()
            .map(|(i, r)| CodeElement {
                element_id: format!("{id_prefix}-E{:02}", i + 1),
                kind: r.kind,
                name: r.name,
                span: r.span,
            })
            .collect()
    }

    // -- token helpers --

    fn tok(&self, i: usize) -> Option<&'t Token> {
        self.toks.get(i)
    }

    fn text(&self, i: usize) -> &'t str {
        self.toks.get(i).map(|t| t.text.as_str()).unwrap_or("")
    }

    fn is(&self, i: usize, s: &str) -> bool {
        self.toks.get(i).is_some_and(|t| t.text == s && t.kind != TokKind::Literal)
    }

    fn is_ident(&self, i: usize) -> bool {
        self.toks
            .get(i)
            .is_some_and(|t| t.kind == TokKind::Ident && !is_keyword(&t.text) && !is_primitive(&t.text))
    }

    fn line(&self, i: usize) -> LineNo {
        self.toks
            .get(i)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(0)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn syntax(&self, i: usize, message: impl Into<String>) -> AnalysisError {
        AnalysisError::Syntax {
            line: self.line(i),
            message: message.into(),
        }
    }

    fn unsupported(&self, i: usize, construct: &str) -> AnalysisError {
        AnalysisError::Unsupported {
            line: self.line(i),
            construct: construct.to_string(),
        }
    }

    fn expect(&mut self, s: &str) -> Result<usize, AnalysisError> {
        if self.is(self.pos, s) {
            self.pos += 1;
            Ok(self.pos - 1)
        } else {
            Err(self.syntax(self.pos, format!("expected `{s}`, found `{}`", self.text(self.pos))))
        }
    }

    /// Index of the token closing the bracket opened at `open`.
    fn matching(&self, open: usize) -> Result<usize, AnalysisError> {
        let (o, c) = match self.text(open) {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            "{" => ("{", "}"),
            other => return Err(self.syntax(open, format!("`{other}` is not a bracket"))),
        };
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            if self.is(i, o) {
                depth += 1;
            } else if self.is(i, c) {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
        }
        Err(self.syntax(open, format!("unbalanced `{o}`")))
    }

    // -- scopes --

    fn push_scope(&mut self) {
        self.scopes.push(Vec::new());
    }

    fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn declare(&mut self, name: &str) -> usize {
        let idx = self.vars.len();
        self.vars.push(Variable {
            name: name.to_string(),
            lines: BTreeSet::new(),
        });
        self.slots.push(Slot::Variable(idx));
        self.scopes
            .last_mut()
            .expect("scope stack never empty")
            .push((name.to_string(), idx));
        idx
    }

    fn resolve(&mut self, name: &str) -> Option<usize> {
        for scope in self.scopes.iter().rev() {
            if let Some((_, idx)) = scope.iter().rev().find(|(n, _)| n == name) {
                return Some(*idx);
            }
        }
        if self.implicit_vars && name.starts_with(|c: char| c.is_lowercase()) {
            let idx = self.vars.len();
            self.vars.push(Variable {
                name: name.to_string(),
                lines: BTreeSet::new(),
            });
            self.slots.push(Slot::Variable(idx));
            self.scopes[0].push((name.to_string(), idx));
            return Some(idx);
        }
        None
    }

    fn reserve(&mut self, kind: ElementKind) -> usize {
        self.slots.push(Slot::Element(Raw {
            kind,
            name: String::new(),
            span: BTreeSet::new(),
        }));
        self.slots.len() - 1
    }

    fn fill(&mut self, slot: usize, span: BTreeSet<LineNo>) {
        if let Slot::Element(raw) = &mut self.slots[slot] {
            raw.span = span;
        }
    }

    fn push_element(&mut self, kind: ElementKind, name: String, span: BTreeSet<LineNo>) {
        self.slots.push(Slot::Element(Raw { kind, name, span }));
    }

    // -- top level --

    fn run(&mut self) -> Result<(), AnalysisError> {
        if self.toks.is_empty() {
            return Ok(());
        }
        if let Some((params_open, body_open)) = self.method_header()? {
            self.parameters(params_open)?;
            self.pos = body_open + 1;
            self.push_scope();
            // The listing may omit the method's final closing brace.
            self.block_body(true)?;
            self.pop_scope();
            if !self.at_end() {
                return Err(self.syntax(self.pos, "tokens after the end of the method"));
            }
        } else {
            self.implicit_vars = true;
            while !self.at_end() {
                self.statement()?;
            }
        }
        Ok(())
    }

    /// Recognizes `modifiers [<T>] Type name(params) [throws ...] {`.
    fn method_header(&self) -> Result<Option<(usize, usize)>, AnalysisError> {
        let mut i = 0;
        while self.is(i, "@") {
            i += 2;
            if self.is(i, "(") {
                i = self.matching(i)? + 1;
            }
        }
        while MODIFIERS.contains(&self.text(i)) {
            i += 1;
        }
        if self.is(i, "<") {
            i = match self.skip_generic(i) {
                Some(end) => end,
                None => return Ok(None),
            };
        }
        let Some(after_type) = self.skip_type(i) else {
            return Ok(None);
        };
        if !self.is_ident(after_type) || !self.is(after_type + 1, "(") {
            return Ok(None);
        }
        let open = after_type + 1;
        let close = self.matching(open)?;
        let mut j = close + 1;
        if self.is(j, "throws") {
            j += 1;
            while !self.is(j, "{") {
                if j >= self.toks.len() || !(self.is_ident(j) || self.is(j, ",") || self.is(j, ".")) {
                    return Ok(None);
                }
                j += 1;
            }
        }
        if self.is(j, "{") {
            Ok(Some((open, j)))
        } else {
            Ok(None)
        }
    }

    fn parameters(&mut self, open: usize) -> Result<(), AnalysisError> {
        let close = self.matching(open)?;
        let mut angle = 0i32;
        let mut last_ident: Option<usize> = None;
        for i in open + 1..=close {
            let t = self.text(i);
            match t {
                "<" => angle += 1,
                ">" => angle -= 1,
                "," | ")" if angle == 0 => {
                    if let Some(name_idx) = last_ident.take() {
                        let name = self.text(name_idx).to_string();
                        let var = self.declare(&name);
                        let line = self.line(name_idx);
                        self.vars[var].lines.insert(line);
                    }
                }
                _ if self.is_ident(i) && angle == 0 => last_ident = Some(i),
                _ => {}
            }
        }
        Ok(())
    }

    /// Skips a balanced `<...>` containing only type tokens. Returns the index after it.
    fn skip_generic(&self, open: usize) -> Option<usize> {
        let mut depth = 0i32;
        let mut i = open;
        loop {
            let t = self.tok(i)?;
            match t.text.as_str() {
                "<" => depth += 1,
                ">" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i + 1);
                    }
                }
                "?" | "," | "." | "[" | "]" | "&" | "extends" | "super" => {}
                _ if t.kind == TokKind::Ident && (!is_keyword(&t.text) || is_primitive(&t.text)) => {}
                _ => return None,
            }
            i += 1;
        }
    }

    /// Skips `Name(.Name)*[<...>]([])*`. Returns the index after the type.
    fn skip_type(&self, start: usize) -> Option<usize> {
        let t = self.tok(start)?;
        if t.kind != TokKind::Ident || (is_keyword(&t.text) && !is_primitive(&t.text)) {
            return None;
        }
        let mut i = start + 1;
        while self.is(i, ".") && self.is_ident(i + 1) {
            i += 2;
        }
        if self.is(i, "<") {
            i = self.skip_generic(i)?;
        }
        while self.is(i, "[") && self.is(i + 1, "]") {
            i += 2;
        }
        Some(i)
    }

    // -- statements --

    /// Parses statements up to and including the closing `}`. Returns its line.
    fn block_body(&mut self, allow_eof: bool) -> Result<LineNo, AnalysisError> {
        loop {
            if self.at_end() {
                if allow_eof {
                    return Ok(self.line(self.toks.len().saturating_sub(1)));
                }
                return Err(self.syntax(self.pos, "missing `}`"));
            }
            if self.is(self.pos, "}") {
                self.pos += 1;
                return Ok(self.line(self.pos - 1));
            }
            self.statement()?;
        }
    }

    /// Parses one statement. Returns the line of its last token.
    fn statement(&mut self) -> Result<LineNo, AnalysisError> {
        let p = self.pos;
        match self.text(p) {
            "{" => {
                self.pos += 1;
                self.push_scope();
                let end = self.block_body(false)?;
                self.pop_scope();
                Ok(end)
            }
            ";" => {
                self.pos += 1;
                Ok(self.line(p))
            }
            "if" => self.if_statement(),
            "while" => self.while_statement(),
            "do" => self.do_statement(),
            "for" => self.for_statement(),
            "switch" => self.switch_statement(),
            "try" => self.try_statement(),
            "throw" => {
                let end = self.statement_end(p)?;
                self.pos = end + 1;
                Ok(self.line(end))
            }
            "synchronized" => Err(self.unsupported(p, "synchronized block")),
            "class" | "interface" | "enum" => Err(self.unsupported(p, "local type declaration")),
            "else" | "catch" | "finally" | "case" | "default" => {
                Err(self.syntax(p, format!("unexpected `{}`", self.text(p))))
            }
            "}" => Err(self.syntax(p, "unexpected `}`")),
            _ if self.is_ident(p) && self.is(p + 1, ":") => Err(self.unsupported(p, "labeled statement")),
            _ => {
                let end = self.statement_end(p)?;
                let is_return = self.is(p, "return") || self.is(p, "break") || self.is(p, "continue");
                let decl = if is_return { None } else { Some((p, end)) };
                self.unit(p, end + 1, decl)?;
                self.pos = end + 1;
                Ok(self.line(end))
            }
        }
    }

    /// Finds the terminating `;` of a simple statement starting at `start`.
    fn statement_end(&self, start: usize) -> Result<usize, AnalysisError> {
        let mut depth = 0i32;
        let mut i = start;
        while i < self.toks.len() {
            let t = self.text(i);
            match t {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "{" => {
                    if self.is(i.wrapping_sub(1), ")") && i > start {
                        return Err(self.unsupported(i, "anonymous class"));
                    }
                    depth += 1;
                }
                "}" => {
                    if depth == 0 {
                        return Err(self.syntax(i, "missing `;`"));
                    }
                    depth -= 1;
                }
                ";" if depth == 0 => return Ok(i),
                _ => {}
            }
            i += 1;
        }
        Err(self.syntax(start, "missing `;`"))
    }

    /// Consumes `kw ( ... )` and processes it as a header unit.
    fn header(&mut self, decl_in_parens: bool) -> Result<(), AnalysisError> {
        let kw = self.pos;
        let open = kw + 1;
        if !self.is(open, "(") {
            return Err(self.syntax(open, format!("expected `(` after `{}`", self.text(kw))));
        }
        let close = self.matching(open)?;
        let decl = if decl_in_parens {
            // for-init runs up to the first `;` (classic) or `:` (enhanced).
            let mut end = open + 1;
            let mut depth = 0i32;
            while end < close {
                match self.text(end) {
                    "(" | "[" => depth += 1,
                    ")" | "]" => depth -= 1,
                    ";" | ":" if depth == 0 => break,
                    _ => {}
                }
                end += 1;
            }
            Some((open + 1, end))
        } else {
            None
        };
        self.unit(kw, close + 1, decl)?;
        self.pos = close + 1;
        Ok(())
    }

    fn if_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let start = self.line(self.pos);
        let slot = self.reserve(ElementKind::Conditional);
        self.header(false)?;
        let mut end = self.statement()?;
        while self.is(self.pos, "else") {
            self.pos += 1;
            if self.is(self.pos, "if") {
                self.header(false)?;
            }
            end = self.statement()?;
        }
        self.fill(slot, range(start, end));
        Ok(end)
    }

    fn while_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let start = self.line(self.pos);
        let slot = self.reserve(ElementKind::Loop);
        self.header(false)?;
        let end = self.statement()?;
        self.fill(slot, range(start, end));
        Ok(end)
    }

    fn do_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let start = self.line(self.pos);
        let slot = self.reserve(ElementKind::Loop);
        self.pos += 1;
        self.statement()?;
        if !self.is(self.pos, "while") {
            return Err(self.syntax(self.pos, "expected `while` after `do` body"));
        }
        self.header(false)?;
        let semi = self.expect(";")?;
        let end = self.line(semi);
        self.fill(slot, range(start, end));
        Ok(end)
    }

    fn for_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let start = self.line(self.pos);
        let slot = self.reserve(ElementKind::Loop);
        self.push_scope();
        self.header(true)?;
        let end = self.statement()?;
        self.pop_scope();
        self.fill(slot, range(start, end));
        Ok(end)
    }

    fn switch_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let start = self.line(self.pos);
        let slot = self.reserve(ElementKind::Conditional);
        self.header(false)?;
        self.expect("{")?;
        self.push_scope();
        let end = loop {
            if self.at_end() {
                return Err(self.syntax(self.pos, "missing `}` of switch"));
            }
            match self.text(self.pos) {
                "}" => {
                    self.pos += 1;
                    break self.line(self.pos - 1);
                }
                "case" | "default" => {
                    let mut i = self.pos + 1;
                    while i < self.toks.len() && !self.is(i, ":") {
                        if self.is(i, "->") {
                            return Err(self.unsupported(i, "arrow switch label"));
                        }
                        i += 1;
                    }
                    self.pos = i + 1;
                }
                _ => {
                    self.statement()?;
                }
            }
        };
        self.pop_scope();
        self.fill(slot, range(start, end));
        Ok(end)
    }

    fn try_statement(&mut self) -> Result<LineNo, AnalysisError> {
        let kw = self.pos;
        self.pos += 1;
        if self.is(self.pos, "(") {
            return Err(self.unsupported(kw, "try-with-resources"));
        }
        if !self.is(self.pos, "{") {
            return Err(self.syntax(self.pos, "expected `{` after `try`"));
        }
        let mut end = self.statement()?;
        while self.is(self.pos, "catch") {
            // Catch clauses produce no elements and no variable occurrences.
            let open = self.pos + 1;
            if !self.is(open, "(") {
                return Err(self.syntax(open, "expected `(` after `catch`"));
            }
            let close = self.matching(open)?;
            if !self.is(close + 1, "{") {
                return Err(self.syntax(close + 1, "expected catch block"));
            }
            let block_end = self.matching(close + 1)?;
            end = self.line(block_end);
            self.pos = block_end + 1;
        }
        if self.is(self.pos, "finally") {
            self.pos += 1;
            end = self.statement()?;
        }
        Ok(end)
    }

    // -- statement units --

    /// Declarator name indices if `[start, end)` is a local declaration.
    fn declaration(&self, start: usize, end: usize) -> Vec<usize> {
        let mut i = start;
        while self.is(i, "final") || self.is(i, "@") {
            i += if self.is(i, "@") { 2 } else { 1 };
        }
        let Some(after) = self.skip_type(i) else {
            return Vec::new();
        };
        if after >= end || !self.is_ident(after) {
            return Vec::new();
        }
        let next = self.text(after + 1);
        if !(after + 1 >= end || matches!(next, "=" | ";" | "," | "[" | ":")) {
            return Vec::new();
        }
        let mut names = vec![after];
        let mut depth = 0i32;
        let mut j = after + 1;
        while j < end {
            match self.text(j) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "," if depth == 0 && self.is_ident(j + 1) => names.push(j + 1),
                ":" if depth == 0 => break,
                _ => {}
            }
            j += 1;
        }
        names
    }

    fn is_definition(&self, i: usize, end: usize) -> bool {
        if self.is(i.wrapping_sub(1), "++") || self.is(i.wrapping_sub(1), "--") {
            return true;
        }
        let mut next = i + 1;
        while self.is(next, "[") && next < end {
            match self.matching(next) {
                Ok(close) => next = close + 1,
                Err(_) => return false,
            }
        }
        let t = self.text(next);
        ASSIGN_OPS.contains(&t) || (next == i + 1 && (t == "++" || t == "--"))
    }

    /// Processes the tokens `[start, end)` as one statement unit.
    fn unit(
        &mut self,
        start: usize,
        end: usize,
        decl: Option<(usize, usize)>,
    ) -> Result<(), AnalysisError> {
        for i in start..end {
            match self.text(i) {
                "->" => return Err(self.unsupported(i, "lambda expression")),
                "::" => return Err(self.unsupported(i, "method reference")),
                _ => {}
            }
        }

        let declared: Vec<usize> = decl.map(|(s, e)| self.declaration(s, e)).unwrap_or_default();
        let mut declared_vars = Vec::new();
        for &idx in &declared {
            let name = self.text(idx).to_string();
            declared_vars.push((idx, self.declare(&name)));
        }

        // Calls.
        let mut first_call: Option<(usize, String)> = None;
        let mut type_tokens = BTreeSet::new();
        let mut i = start;
        while i < end {
            if self.is(i, "new") {
                let mut j = i + 1;
                let mut name = String::from("new ");
                while self.is_ident(j) || (is_primitive(self.text(j)) && self.tok(j).is_some()) {
                    type_tokens.insert(j);
                    name.push_str(self.text(j));
                    if self.is(j + 1, ".") && self.is_ident(j + 2) {
                        name.push('.');
                        j += 2;
                    } else {
                        j += 1;
                        break;
                    }
                }
                if self.is(j, "<") {
                    j = self.skip_generic(j).unwrap_or(j + 1);
                }
                if self.is(j, "(") {
                    let close = self.matching(j)?;
                    if self.is(close + 1, "{") {
                        return Err(self.unsupported(close + 1, "anonymous class"));
                    }
                }
                if first_call.is_none() && name.len() > 4 {
                    first_call = Some((i, name));
                }
                i = j;
                continue;
            }
            let callable = self.is_ident(i) || self.is(i, "this") || self.is(i, "super");
            if callable && self.is(i + 1, "(") && !self.is(i.wrapping_sub(1), "new") && first_call.is_none() {
                let mut name = self.text(i).to_string();
                let mut j = i;
                while j >= start + 2
                    && self.is(j - 1, ".")
                    && (self.is_ident(j - 2) || self.is(j - 2, "this"))
                {
                    name = format!("{}.{}", self.text(j - 2), name);
                    j -= 2;
                }
                first_call = Some((i, name));
            }
            i += 1;
        }
        let has_call = first_call.is_some();
        if let Some((idx, name)) = first_call {
            self.push_element(ElementKind::MethodCall, name, [self.line(idx)].into_iter().collect());
        }

        // Ternary operator: a `?` that is not a generic wildcard.
        let has_colon = (start..end).any(|i| self.is(i, ":"));
        let ternary = has_colon
            && (start..end).any(|i| self.is(i, "?") && !self.is(i.wrapping_sub(1), "<"));
        let lines = range(self.line(start), self.line(end - 1));
        if ternary {
            self.push_element(ElementKind::Conditional, String::new(), lines.clone());
        }

        // Variables.
        for i in start..end {
            if !self.is_ident(i) || type_tokens.contains(&i) {
                continue;
            }
            if self.is(i.wrapping_sub(1), ".") || self.is(i + 1, "(") {
                continue;
            }
            let var = match declared_vars.iter().find(|(idx, _)| *idx == i) {
                Some((_, var)) => Some((*var, true)),
                None => {
                    let name = self.text(i).to_string();
                    // A type name or an unresolvable identifier is skipped.
                    if self.is_ident(i + 1) {
                        continue;
                    }
                    self.resolve(&name).map(|v| (v, self.is_definition(i, end)))
                }
            };
            if let Some((var, defined)) = var {
                if !has_call || defined {
                    self.vars[var].lines.extend(lines.iter().copied());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn snippet(text: &str) -> Vec<CodeElement> {
        let lines: Vec<(LineNo, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as LineNo + 1, l))
            .collect();
        extract_from_lines("T", &lines).unwrap()
    }

    fn summary(elements: &[CodeElement]) -> Vec<(ElementKind, String, Vec<LineNo>)> {
        elements
            .iter()
            .map(|e| (e.kind, e.name.clone(), e.span.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn single_loop_snippet() {
        let els = snippet("while(p<n){p++;}");
        assert_eq!(
            summary(&els),
            vec![
                (ElementKind::Loop, String::new(), vec![1]),
                (ElementKind::Variable, "p".into(), vec![1]),
                (ElementKind::Variable, "n".into(), vec![1]),
            ]
        );
    }

    #[test]
    fn j1_has_ten_elements() {
        let corpus = Corpus::reference();
        let els = extract_elements(corpus.case("J1").unwrap()).unwrap();
        let count = |k| els.iter().filter(|e| e.kind == k).count();
        assert_eq!(els.len(), 10);
        assert_eq!(count(ElementKind::Conditional), 4);
        assert_eq!(count(ElementKind::MethodCall), 2);
        assert_eq!(count(ElementKind::Variable), 4);
        let calls: Vec<&str> = els
            .iter()
            .filter(|e| e.kind == ElementKind::MethodCall)
            .map(|e| e.name.as_str())
            .collect();
        assert_eq!(calls, vec!["FieldUtils.safeMultiply", "forOffsetMillis"]);
    }

    #[test]
    fn j2_counts_constructor_call() {
        let corpus = Corpus::reference();
        let els = extract_elements(corpus.case("J2").unwrap()).unwrap();
        assert_eq!(els.len(), 6);
        assert!(els.iter().any(|e| e.name == "new Color" && e.span == [119].into_iter().collect()));
        let g = els.iter().find(|e| e.name == "g").unwrap();
        assert_eq!(g.span, [117, 118].into_iter().collect());
    }

    #[test]
    fn if_else_chain_is_one_conditional() {
        let els = snippet(
            "int f(int a) {\n  if (a > 0) {\n    a = 1;\n  } else if (a < 0) {\n    a = 2;\n  } else {\n    a = 3;\n  }\n  return a;\n}",
        );
        let conds: Vec<_> = els.iter().filter(|e| e.kind == ElementKind::Conditional).collect();
        assert_eq!(conds.len(), 1);
        assert_eq!(conds[0].min_line(), 2);
        assert_eq!(conds[0].max_line(), 8);
    }

    #[test]
    fn call_statement_credits_only_defined_variables() {
        let els = snippet("void f(int a, int b) {\n  int c = g(a, b);\n  h(c);\n}");
        let span = |n: &str| {
            els.iter()
                .find(|e| e.kind == ElementKind::Variable && e.name == n)
                .unwrap()
                .span
                .iter()
                .copied()
                .collect::<Vec<_>>()
        };
        assert_eq!(span("a"), vec![1]);
        assert_eq!(span("c"), vec![2]);
        assert_eq!(els.iter().filter(|e| e.kind == ElementKind::MethodCall).count(), 2);
    }

    #[test]
    fn throw_and_catch_are_ignored() {
        let els = snippet(
            "void f(int a) {\n  try {\n    a = g(a);\n  } catch (Exception ex) {\n    log(ex);\n  }\n  throw new IllegalStateException(a);\n}",
        );
        assert!(els.iter().all(|e| e.name != "log" && e.name != "ex"));
        assert!(els.iter().all(|e| !e.name.starts_with("new ")));
    }

    #[test]
    fn sibling_scopes_yield_distinct_variables() {
        let els = snippet("void f() {\n  if (x()) {\n    int s = 1;\n  }\n  if (y()) {\n    int s = 2;\n  }\n}");
        assert_eq!(els.iter().filter(|e| e.name == "s").count(), 2);
    }

    #[test]
    fn generics_are_not_ternaries() {
        let els = snippet("Class<?>[] f(Object o) {\n  Class<?>[] r = new Class[1];\n  return r;\n}");
        assert!(els.iter().all(|e| e.kind != ElementKind::Conditional));
        let els = snippet("int f(int a) {\n  int b = a > 0 ? a : -a;\n  return b;\n}");
        assert_eq!(els.iter().filter(|e| e.kind == ElementKind::Conditional).count(), 1);
    }

    #[test]
    fn unsupported_constructs_name_the_line() {
        let lines = [(10, "void f() {"), (11, "  run(() -> go());"), (12, "}")];
        assert_eq!(
            extract_from_lines("T", &lines),
            Err(AnalysisError::Unsupported {
                line: 11,
                construct: "lambda expression".into()
            })
        );
        let lines = [(1, "void f() {"), (2, "  outer: g();"), (3, "}")];
        assert!(matches!(
            extract_from_lines("T", &lines),
            Err(AnalysisError::Unsupported { line: 2, .. })
        ));
        let lines = [(1, "void f() {"), (2, "  Object o = new Object() {"), (3, "  };"), (4, "}")];
        assert!(matches!(
            extract_from_lines("T", &lines),
            Err(AnalysisError::Unsupported { line: 2, .. })
        ));
    }

    #[test]
    fn loops_span_header_to_close() {
        let els = snippet("void f(int n) {\n  for (int i = 0; i < n; i++) {\n    g(i);\n  }\n  do {\n    n--;\n  } while (n > 0);\n}");
        let loops: Vec<_> = els.iter().filter(|e| e.kind == ElementKind::Loop).collect();
        assert_eq!(loops.len(), 2);
        assert_eq!((loops[0].min_line(), loops[0].max_line()), (2, 4));
        assert_eq!((loops[1].min_line(), loops[1].max_line()), (5, 7));
    }

    #[test]
    fn switch_is_one_conditional() {
        let els = snippet("int f(int k) {\n  switch (k) {\n    case 1:\n      return 2;\n    default:\n      return 3;\n  }\n}");
        let conds: Vec<_> = els.iter().filter(|e| e.kind == ElementKind::Conditional).collect();
        assert_eq!(conds.len(), 1);
        assert_eq!((conds[0].min_line(), conds[0].max_line()), (2, 7));
    }

    #[test]
    fn every_reference_case_is_covered_and_deterministic() {
        let corpus = Corpus::reference();
        for case in &corpus.cases {
            let a = extract_elements(case).unwrap();
            let b = extract_elements(case).unwrap();
            assert_eq!(a, b);
            assert!(uncovered_lines(case, &a).is_empty(), "{}: {:?}", case.case_id, uncovered_lines(case, &a));
            for e in &a {
                assert!(e.span.iter().all(|l| case.has_line(*l)));
                if e.kind == ElementKind::MethodCall {
                    assert_eq!(e.span.len(), 1);
                }
                if matches!(e.kind, ElementKind::Loop | ElementKind::Conditional) {
                    assert_eq!(e.max_line() - e.min_line() + 1, e.span.len() as LineNo);
                }
            }
        }
    }
}
