//! Template questions instantiated over code elements.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::analysis::{extract_elements, AnalysisError, CodeElement, ElementKind};
use crate::corpus::{BugCase, Corpus, LineNo};

// The wording is part of the experimental method and must not be edited.
const LOOP_TEMPLATE: &str =
    "Is there any issue with the loop between lines {x} and {y} that might be related to the failure?";
const CONDITIONAL_TEMPLATE: &str =
    "Is there any issue with the conditional between lines {x} and {y} that might be related to the failure?";
const CALL_TEMPLATE: &str =
    "Is there any issue with the method invocation {M} at line {x} that might be related to the failure?";
const VARIABLE_TEMPLATE: &str =
    "Is there any issue with the definition or the use of variable {M} that might be related to the failure?";

pub fn template(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Loop => LOOP_TEMPLATE,
        ElementKind::Conditional => CONDITIONAL_TEMPLATE,
        ElementKind::MethodCall => CALL_TEMPLATE,
        ElementKind::Variable => VARIABLE_TEMPLATE,
    }
}

pub fn render(element: &CodeElement) -> String {
    template(element.kind)
        .replace("{x}", &element.min_line().to_string())
        .replace("{y}", &element.max_line().to_string())
        .replace("{M}", &element.name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub case_id: String,
    pub element: CodeElement,
    pub text: String,
    pub covered_lines: BTreeSet<LineNo>,
    pub covers_fault: bool,
}

impl Question {
    pub fn kind(&self) -> ElementKind {
        self.element.kind
    }

    pub fn min_line(&self) -> LineNo {
        self.element.min_line()
    }

    pub fn max_line(&self) -> LineNo {
        self.element.max_line()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub case_id: String,
    pub questions: Vec<Question>,
}

impl QuestionSet {
    pub fn fault_covering(&self) -> usize {
        self.questions.iter().filter(|q| q.covers_fault).count()
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// One question per element, flagged against the case's own ground truth.
pub fn generate_questions(case: &BugCase) -> Result<QuestionSet, AnalysisError> {
    let elements = extract_elements(case)?;
    let questions = elements
        .into_iter()
        .enumerate()
        .map(|(i, element)| Question {
            question_id: format!("{}-Q{:02}", case.case_id, i + 1),
            case_id: case.case_id.clone(),
            text: render(&element),
            covered_lines: element.span.clone(),
            covers_fault: false,
            element,
        })
        .collect();
    let qs = QuestionSet {
        case_id: case.case_id.clone(),
        questions,
    };
    Ok(mark_fault_covering(qs, &case.fault_lines))
}

pub fn mark_fault_covering(mut qs: QuestionSet, truth: &BTreeSet<LineNo>) -> QuestionSet {
    for q in &mut qs.questions {
        q.covers_fault = !q.covered_lines.is_disjoint(truth);
    }
    qs
}

pub fn generate_all(corpus: &Corpus) -> Result<Vec<QuestionSet>, AnalysisError> {
    corpus.cases.iter().map(generate_questions).collect()
}
