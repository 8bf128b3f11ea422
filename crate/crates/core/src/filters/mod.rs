//! Subcrowd filters over answers, their questions and their workers.
//!
//! A [`FilterContext`] joins every answer of a dataset with the attributes
//! filters can test. Quartiles and consensus cells are computed once over
//! the whole dataset, so a filter means the same thing whichever subset it
//! is applied to.

mod builtins;
mod expr;

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

pub use builtins::{builtin, builtin_filters, BuiltinFilter, SUMMARY_ROWS};
pub use expr::{Atom, Field, FieldType, FilterSpec, Op, SpecError, Value};

use crate::aggregation::{aggregate, fraction_percent, AggregationConfig, AggregationError, AggregationReport, GroundTruth, LineScope};
use crate::analysis::ElementKind;
use crate::answers::{AnswerOption, AnswerRecord, Dataset};
use crate::orchestrator::Profession;
use crate::stats::{consensus_cells, ConsensusCells, Quartile, QuartileCuts};

/// Attribute values of one answer as seen by filters.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerFacts {
    pub kind: Option<ElementKind>,
    pub loc: Option<usize>,
    pub case_id: String,
    pub option: AnswerOption,
    pub confidence: u8,
    pub difficulty: Option<u8>,
    pub duration: f64,
    pub duration_quartile: Quartile,
    pub explanation_chars: usize,
    pub explanation_quartile: Quartile,
    pub order: u8,
    pub consensus: bool,
    pub profession: Option<Profession>,
    pub score: Option<u32>,
    pub yoe: Option<f64>,
    pub yoe_quartile: Option<Quartile>,
}

enum Scalar<'a> {
    Num(f64),
    Sym(&'a str),
    Bool(bool),
    Missing,
}

impl AnswerFacts {
    fn get(&self, field: Field) -> Scalar<'_> {
        let num = |v: Option<f64>| v.map_or(Scalar::Missing, Scalar::Num);
        match field {
            Field::QuestionKind => self.kind.map_or(Scalar::Missing, |k| Scalar::Sym(kind_symbol(k))),
            Field::QuestionLoc => num(self.loc.map(|v| v as f64)),
            Field::QuestionCase => Scalar::Sym(&self.case_id),
            Field::AnswerOption => Scalar::Sym(option_symbol(self.option)),
            Field::AnswerConfidence => Scalar::Num(self.confidence as f64),
            Field::AnswerDifficulty => num(self.difficulty.map(f64::from)),
            Field::AnswerDuration => Scalar::Num(self.duration),
            Field::AnswerDurationQuartile => Scalar::Num(self.duration_quartile.number() as f64),
            Field::AnswerExplanationChars => Scalar::Num(self.explanation_chars as f64),
            Field::AnswerExplanationQuartile => Scalar::Num(self.explanation_quartile.number() as f64),
            Field::AnswerOrder => Scalar::Num(self.order as f64),
            Field::AnswerConsensus => Scalar::Bool(self.consensus),
            Field::WorkerProfession => self.profession.map_or(Scalar::Missing, |p| Scalar::Sym(p.as_str())),
            Field::WorkerScore => num(self.score.map(f64::from)),
            Field::WorkerYoe => num(self.yoe),
            Field::WorkerYoeQuartile => num(self.yoe_quartile.map(|q| q.number() as f64)),
        }
    }

    /// Atoms over a missing attribute are false, whatever the operator.
    pub fn satisfies(&self, atom: &Atom) -> bool {
        let value = self.get(atom.field);
        let eq = |v: &Value| match (&value, v) {
            (Scalar::Num(a), Value::Num(b)) => a == b,
            (Scalar::Sym(a), Value::Sym(b)) => a.eq_ignore_ascii_case(b),
            (Scalar::Bool(a), Value::Bool(b)) => a == b,
            _ => false,
        };
        if matches!(value, Scalar::Missing) {
            return false;
        }
        match atom.op {
            Op::Eq => eq(&atom.values[0]),
            Op::Ne => !eq(&atom.values[0]),
            Op::In => atom.values.iter().any(eq),
            Op::Lt | Op::Le | Op::Gt | Op::Ge => {
                let (Scalar::Num(a), Value::Num(b)) = (&value, &atom.values[0]) else {
                    return false;
                };
                match atom.op {
                    Op::Lt => a < b,
                    Op::Le => a <= b,
                    Op::Gt => a > b,
                    _ => a >= b,
                }
            }
        }
    }

    pub fn matches(&self, spec: &FilterSpec) -> bool {
        match spec {
            FilterSpec::True => true,
            FilterSpec::False => false,
            FilterSpec::Atom(a) => self.satisfies(a),
            FilterSpec::Not(s) => !self.matches(s),
            FilterSpec::And(v) => v.iter().all(|s| self.matches(s)),
            FilterSpec::Or(v) => v.iter().any(|s| self.matches(s)),
        }
    }
}

fn kind_symbol(k: ElementKind) -> &'static str {
    match k {
        ElementKind::Loop => "loop",
        ElementKind::Conditional => "conditional",
        ElementKind::MethodCall => "method_call",
        ElementKind::Variable => "variable",
    }
}

fn option_symbol(o: AnswerOption) -> &'static str {
    match o {
        AnswerOption::Yes => "yes",
        AnswerOption::No => "no",
        AnswerOption::Idk => "idk",
    }
}

pub struct FilterContext<'a> {
    pub dataset: &'a Dataset,
    pub facts: Vec<AnswerFacts>,
    pub duration_cuts: Option<QuartileCuts>,
    pub explanation_cuts: Option<QuartileCuts>,
    pub yoe_cuts: Option<QuartileCuts>,
    pub consensus: ConsensusCells,
}

impl<'a> FilterContext<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        let answers = &dataset.answers;
        let questions: HashMap<&str, (ElementKind, usize)> = dataset
            .questions()
            .map(|q| (q.question_id.as_str(), (q.kind(), q.covered_lines.len())))
            .collect();
        let durations: Vec<f64> = answers.iter().map(|a| a.duration_seconds).collect();
        let explanations: Vec<f64> = answers.iter().map(|a| a.explanation_chars as f64).collect();
        let yoes: Vec<f64> = dataset.workers.values().map(|w| w.years_of_experience).collect();
        let duration_cuts = QuartileCuts::from_values(&durations);
        let explanation_cuts = QuartileCuts::from_values(&explanations);
        let yoe_cuts = QuartileCuts::from_values(&yoes);
        let consensus = consensus_cells(answers.iter().filter_map(|a| a.difficulty.map(|d| (a.confidence, d))));

        let facts = answers
            .iter()
            .map(|a| {
                let q = questions.get(a.question_id.as_str());
                let w = dataset.workers.get(&a.worker_id);
                AnswerFacts {
                    kind: q.map(|q| q.0),
                    loc: q.map(|q| q.1),
                    case_id: a.case_id.clone(),
                    option: a.option,
                    confidence: a.confidence,
                    difficulty: a.difficulty,
                    duration: a.duration_seconds,
                    duration_quartile: duration_cuts.map_or(Quartile::Q1, |c| c.label(a.duration_seconds)),
                    explanation_chars: a.explanation_chars,
                    explanation_quartile: explanation_cuts.map_or(Quartile::Q1, |c| c.label(a.explanation_chars as f64)),
                    order: a.order_in_hit,
                    consensus: a.difficulty.is_some_and(|d| consensus.contains(a.confidence, d)),
                    profession: w.map(|w| w.profession),
                    score: w.map(|w| w.score_percent),
                    yoe: w.map(|w| w.years_of_experience),
                    yoe_quartile: w.and_then(|w| yoe_cuts.map(|c| c.label(w.years_of_experience))),
                }
            })
            .collect();
        FilterContext {
            dataset,
            facts,
            duration_cuts,
            explanation_cuts,
            yoe_cuts,
            consensus,
        }
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.facts.len()).collect()
    }

    /// Indices among `within` whose answers satisfy `spec`.
    pub fn select(&self, spec: &FilterSpec, within: &[usize]) -> Vec<usize> {
        within
            .iter()
            .copied()
            .filter(|&i| self.facts[i].matches(spec))
            .collect()
    }

    pub fn records(&self, indices: &[usize]) -> Vec<AnswerRecord> {
        indices.iter().map(|&i| self.dataset.answers[i].clone()).collect()
    }
}

/// The answers of the dataset that satisfy `spec`.
pub fn apply_filter(ctx: &FilterContext<'_>, spec: &FilterSpec) -> Vec<AnswerRecord> {
    ctx.records(&ctx.select(spec, &ctx.all()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubcrowdResult {
    pub label: String,
    pub filter: String,
    pub answers: usize,
    pub workers: usize,
    pub faults_located: usize,
    pub report: AggregationReport,
}

impl SubcrowdResult {
    pub fn precision(&self) -> Option<f64> {
        self.report.classification.micro_precision()
    }

    pub fn recall(&self) -> Option<f64> {
        self.report.classification.micro_recall()
    }

    pub fn lines_to_inspect(&self) -> usize {
        self.report.lines.lines_to_inspect()
    }

    /// "79%, 64%" from micro precision and recall.
    pub fn precision_recall(&self) -> String {
        pair(self.precision(), self.recall())
    }

    pub fn macro_precision_recall(&self) -> String {
        let c = &self.report.classification;
        pair(c.macro_precision(), c.macro_recall())
    }
}

fn pair(p: Option<f64>, r: Option<f64>) -> String {
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{}%", fraction_percent(v)));
    format!("{}, {}", f(p), f(r))
}

/// Filters the answers, then aggregates what is left. An empty subcrowd
/// yields an empty report rather than an error.
pub fn subcrowd_report(
    ctx: &FilterContext<'_>,
    truth: &GroundTruth,
    label: &str,
    spec: &FilterSpec,
    cfg: AggregationConfig,
) -> Result<SubcrowdResult, AggregationError> {
    let kept = apply_filter(ctx, spec);
    let workers: BTreeSet<&str> = kept.iter().map(|a| a.worker_id.as_str()).collect();
    let report = aggregate(truth, &kept, cfg, None, LineScope::LocatedCases)?;
    Ok(SubcrowdResult {
        label: label.to_string(),
        filter: spec.to_string(),
        answers: kept.len(),
        workers: workers.len(),
        faults_located: report.faults_located(),
        report,
    })
}

pub const SUBCROWD_HEADER: &str =
    "subcrowd,filter,precision_recall,macro_precision_recall,lines_to_inspect,workers,answers,faults_located";

/// Rows sorted by precision, then by number of workers, both descending.
pub fn subcrowd_table(results: &[SubcrowdResult]) -> String {
    let mut sorted: Vec<&SubcrowdResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        let p = |r: &SubcrowdResult| r.precision().unwrap_or(-1.0);
        p(b).total_cmp(&p(a)).then(b.workers.cmp(&a.workers))
    });
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(SUBCROWD_HEADER.split(',')).expect("in-memory write");
    for r in sorted {
        wtr.write_record([
            r.label.clone(),
            r.filter.clone(),
            r.precision_recall(),
            r.macro_precision_recall(),
            r.lines_to_inspect().to_string(),
            r.workers.to_string(),
            r.answers.to_string(),
            r.faults_located.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Answers of each worker's first HIT, for comparing workers on equal footing.
pub fn first_hit_answers(dataset: &Dataset) -> Vec<&AnswerRecord> {
    let mut first: HashMap<&str, (&chrono::DateTime<chrono::Utc>, &str)> = HashMap::new();
    for a in &dataset.answers {
        let e = first.entry(&a.worker_id).or_insert((&a.submitted_at, &a.hit_id));
        if a.submitted_at < *e.0 {
            *e = (&a.submitted_at, &a.hit_id);
        }
    }
    dataset
        .answers
        .iter()
        .filter(|a| first.get(a.worker_id.as_str()).is_some_and(|(_, h)| *h == a.hit_id))
        .collect()
}
