//! Bug cases: the failing method, its failing test and the fault ground truth.
//!
//! A corpus file is a JSON document with a top-level `cases` array. Each case
//! lists its source lines verbatim with their absolute line numbers and an
//! `executable` flag; comment-only, blank and brace-only lines are kept but
//! flagged non-executable.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Line numbers as printed next to the method listing.
pub type LineNo = u32;

/// Lines of code per reference case, keyed by case id.
pub const REFERENCE_LOC: [(&str, usize); 8] = [
    ("J1", 23),
    ("J2", 7),
    ("J3", 23),
    ("J4", 78),
    ("J5", 7),
    ("J6", 28),
    ("J7", 12),
    ("J8", 33),
];

const REFERENCE_CORPUS: &str = include_str!("../data/reference_corpus.json");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("case {case_id}: {rule}")]
    Validation { case_id: String, rule: String },
}

impl CorpusError {
    fn invalid(case_id: &str, rule: impl Into<String>) -> Self {
        CorpusError::Validation {
            case_id: case_id.to_string(),
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub line: LineNo,
    pub text: String,
    pub executable: bool,
}

/// A caller or callee shown next to the method for inter-procedural context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMethod {
    pub name: String,
    pub source: Vec<String>,
    /// Lines of the failing method that relate to this context method.
    #[serde(default)]
    pub highlight_lines: Vec<LineNo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugCase {
    pub case_id: String,
    pub project: String,
    pub defects4j_bug_id: String,
    pub loc: usize,
    pub failure_message: String,
    pub failing_test: String,
    pub fault_lines: BTreeSet<LineNo>,
    pub source: Vec<SourceLine>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_methods: Vec<ContextMethod>,
}

impl BugCase {
    pub fn first_line(&self) -> LineNo {
        self.source.first().map(|l| l.line).unwrap_or(0)
    }

    pub fn last_line(&self) -> LineNo {
        self.source.last().map(|l| l.line).unwrap_or(0)
    }

    pub fn has_line(&self, line: LineNo) -> bool {
        !self.source.is_empty() && line >= self.first_line() && line <= self.last_line()
    }

    pub fn line_text(&self, line: LineNo) -> Option<&str> {
        let idx = line.checked_sub(self.first_line())? as usize;
        self.source.get(idx).map(|l| l.text.as_str())
    }

    pub fn executable_lines(&self) -> BTreeSet<LineNo> {
        self.source
            .iter()
            .filter(|l| l.executable)
            .map(|l| l.line)
            .collect()
    }

    pub fn lines(&self) -> impl Iterator<Item = LineNo> + '_ {
        self.source.iter().map(|l| l.line)
    }

    /// The method text with line breaks, used by the structural extractor.
    pub fn source_text(&self) -> Vec<(LineNo, &str)> {
        self.source.iter().map(|l| (l.line, l.text.as_str())).collect()
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let id = self.case_id.as_str();
        if id.trim().is_empty() {
            return Err(CorpusError::invalid(id, "case_id must not be empty"));
        }
        if self.source.is_empty() {
            return Err(CorpusError::invalid(id, "source must not be empty"));
        }
        if self.loc != self.source.len() {
            return Err(CorpusError::invalid(
                id,
                format!(
                    "loc is {} but the source lists {} lines",
                    self.loc,
                    self.source.len()
                ),
            ));
        }
        if let Some((_, expected)) = REFERENCE_LOC.iter().find(|(rid, _)| *rid == id) {
            if self.loc != *expected {
                return Err(CorpusError::invalid(
                    id,
                    format!("loc {} contradicts the reference LOC {}", self.loc, expected),
                ));
            }
        }
        if self.source[0].line == 0 {
            return Err(CorpusError::invalid(id, "line numbers must be positive"));
        }
        for pair in self.source.windows(2) {
            if pair[1].line != pair[0].line + 1 {
                return Err(CorpusError::invalid(
                    id,
                    format!(
                        "line numbers must be strictly increasing and contiguous ({} followed by {})",
                        pair[0].line, pair[1].line
                    ),
                ));
            }
        }
        if self.fault_lines.is_empty() {
            return Err(CorpusError::invalid(id, "fault_lines must not be empty"));
        }
        if let Some(missing) = self.fault_lines.iter().find(|l| !self.has_line(**l)) {
            return Err(CorpusError::invalid(
                id,
                format!("fault line {missing} is not a source line"),
            ));
        }
        for ctx in &self.context_methods {
            if let Some(bad) = ctx.highlight_lines.iter().find(|l| !self.has_line(**l)) {
                return Err(CorpusError::invalid(
                    id,
                    format!("context method {} highlights unknown line {bad}", ctx.name),
                ));
            }
        }
        Ok(())
    }
}

/// Fault lines of a validated case. For missing-code faults these are the
/// failure-exposing lines recorded in the corpus, not the fix site.
pub fn fault_ground_truth(case: &BugCase) -> BTreeSet<LineNo> {
    case.fault_lines.clone()
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    #[serde(default = "default_format_version")]
    format_version: u32,
    cases: Vec<BugCase>,
}

fn default_format_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub cases: Vec<BugCase>,
    /// Hex SHA-256 of the canonical (compact, field-ordered) serialization.
    pub checksum: String,
}

impl Corpus {
    pub fn new(cases: Vec<BugCase>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for case in &cases {
            case.validate()?;
            if !seen.insert(case.case_id.clone()) {
                return Err(CorpusError::invalid(&case.case_id, "duplicate case_id"));
            }
        }
        let checksum = checksum_of(&cases);
        Ok(Corpus { cases, checksum })
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = serde_json::from_str(text).map_err(|e| CorpusError::Format {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Corpus::new(file.cases)
    }

    /// The eight bundled reference cases.
    pub fn reference() -> Self {
        Corpus::parse(REFERENCE_CORPUS).expect("bundled reference corpus is valid")
    }

    pub fn case(&self, case_id: &str) -> Option<&BugCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn total_loc(&self) -> usize {
        self.cases.iter().map(|c| c.loc).sum()
    }

    pub fn to_json_pretty(&self) -> String {
        let file = CorpusFile {
            format_version: 1,
            cases: self.cases.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("corpus serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_json_pretty())?;
        Ok(())
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)?;
    Corpus::parse(&text)
}

fn checksum_of(cases: &[BugCase]) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        cases: &'a [BugCase],
    }
    let bytes = serde_json::to_vec(&Canonical { cases }).expect("corpus serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_case() -> BugCase {
        BugCase {
            case_id: "T1".into(),
            project: "toy".into(),
            defects4j_bug_id: "-".into(),
            loc: 3,
            failure_message: "boom".into(),
            failing_test: "assertEquals(1, f(0));".into(),
            fault_lines: [2].into_iter().collect(),
            source: vec![
                SourceLine {
                    line: 1,
                    text: "int f(int a) {".into(),
                    executable: true,
                },
                SourceLine {
                    line: 2,
                    text: "    return a;".into(),
                    executable: true,
                },
                SourceLine {
                    line: 3,
                    text: "}".into(),
                    executable: false,
                },
            ],
            context_methods: vec![],
        }
    }

    #[test]
    fn reference_corpus_shape() {
        let corpus = Corpus::reference();
        assert_eq!(corpus.cases.len(), 8);
        assert_eq!(corpus.total_loc(), 211);
        let faults: usize = corpus.cases.iter().map(|c| c.fault_lines.len()).sum();
        assert_eq!(faults, 10);
        for case in &corpus.cases {
            let expected = if case.case_id == "J4" || case.case_id == "J5" { 2 } else { 1 };
            assert_eq!(case.fault_lines.len(), expected, "{}", case.case_id);
        }
        assert_eq!(corpus.case("J1").unwrap().first_line(), 2427);
    }

    #[test]
    fn ground_truth_passthrough() {
        let corpus = Corpus::reference();
        assert_eq!(fault_ground_truth(corpus.case("J4").unwrap()).len(), 2);
        assert_eq!(fault_ground_truth(corpus.case("J6").unwrap()).len(), 1);
        assert_eq!(
            fault_ground_truth(&tiny_case()),
            [2].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn minimal_single_case() {
        let corpus = Corpus::new(vec![tiny_case()]).unwrap();
        assert_eq!(corpus.cases.len(), 1);
        assert_eq!(corpus.checksum.len(), 64);
    }

    #[test]
    fn rejects_wrong_reference_loc() {
        let mut corpus = Corpus::reference();
        let j2 = corpus.cases.iter_mut().find(|c| c.case_id == "J2").unwrap();
        j2.loc = 8;
        let text = corpus.to_json_pretty();
        match Corpus::parse(&text) {
            Err(CorpusError::Validation { case_id, .. }) => assert_eq!(case_id, "J2"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_gaps_duplicates_and_unknown_fault_lines() {
        let mut gap = tiny_case();
        gap.source[2].line = 5;
        assert!(matches!(Corpus::new(vec![gap]), Err(CorpusError::Validation { .. })));

        let mut bad_fault = tiny_case();
        bad_fault.fault_lines = [9].into_iter().collect();
        assert!(Corpus::new(vec![bad_fault]).is_err());

        let mut empty_fault = tiny_case();
        empty_fault.fault_lines.clear();
        assert!(Corpus::new(vec![empty_fault]).is_err());

        assert!(Corpus::new(vec![tiny_case(), tiny_case()]).is_err());
    }

    #[test]
    fn format_error_reports_position() {
        let err = Corpus::parse("{\n  \"cases\": [ {\"case_id\": 3 } ]\n}").unwrap_err();
        match err {
            CorpusError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_and_reload_is_identity() {
        let corpus = Corpus::reference();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        corpus.save(&path).unwrap();
        let again = load_corpus(&path).unwrap();
        assert_eq!(again, corpus);
    }
}
