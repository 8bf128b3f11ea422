//! From replicated answers to fault predictions.
//!
//! Answers are tallied per question (IDK counted apart), a mechanism turns
//! tallies into predicted questions, and the predictions are scored at the
//! question level and the line level. Sweeps over the threshold, over the
//! number of answers per question and over cut times build on the same
//! pieces.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{AnswerOption, AnswerRecord};
use crate::corpus::{Corpus, LineNo};
use crate::questions::QuestionSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("question {question_id} has {available} answers, {needed} needed")]
    InsufficientAnswers {
        question_id: String,
        needed: usize,
        available: usize,
    },
    #[error("answer for unknown question {0}")]
    UnknownQuestion(String),
    #[error("no case {0} in the corpus")]
    UnknownCase(String),
    #[error("invalid threshold n={n} for {mechanism}: {reason}")]
    InvalidThreshold {
        mechanism: Mechanism,
        n: usize,
        reason: &'static str,
    },
    #[error("unknown mechanism `{0}` (expected AM1, AM2 or AM3)")]
    UnknownMechanism(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    /// At least n more YES than NO answers: yes - no > n.
    #[serde(rename = "AM1")]
    Am1,
    /// More than n YES answers: yes > n.
    #[serde(rename = "AM2")]
    Am2,
    /// Among the n questions of the case with most YES answers, ties included.
    #[serde(rename = "AM3")]
    Am3,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Am1, Mechanism::Am2, Mechanism::Am3];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Am1 => "AM1",
            Mechanism::Am2 => "AM2",
            Mechanism::Am3 => "AM3",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = AggregationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('.', "").as_str() {
            "AM1" | "1" => Ok(Mechanism::Am1),
            "AM2" | "2" => Ok(Mechanism::Am2),
            "AM3" | "3" => Ok(Mechanism::Am3),
            _ => Err(AggregationError::UnknownMechanism(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub mechanism: Mechanism,
    pub n: usize,
}

impl AggregationConfig {
    pub fn new(mechanism: Mechanism, n: usize) -> Self {
        AggregationConfig { mechanism, n }
    }

    /// The thresholds that located every fault with the fewest false positives
    /// on the reference data.
    pub fn preferred(mechanism: Mechanism) -> Self {
        let n = match mechanism {
            Mechanism::Am1 => 0,
            Mechanism::Am2 => 5,
            Mechanism::Am3 => 2,
        };
        AggregationConfig { mechanism, n }
    }

    /// `replication` bounds n for the threshold mechanisms when known.
    pub fn validate(&self, replication: Option<usize>) -> Result<(), AggregationError> {
        let invalid = |reason| AggregationError::InvalidThreshold {
            mechanism: self.mechanism,
            n: self.n,
            reason,
        };
        match self.mechanism {
            Mechanism::Am3 if self.n == 0 => Err(invalid("top-n needs n >= 1")),
            Mechanism::Am1 | Mechanism::Am2 if replication.is_some_and(|k| self.n > k) => {
                Err(invalid("n exceeds the replication factor"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AggregationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(n={})", self.mechanism, self.n)
    }
}

/// What the scorer needs to know about the benchmark: every question's
/// covered lines and the printed lines and fault lines of every case.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub cases: Vec<CaseTruth>,
    index: HashMap<String, (usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseTruth {
    pub case_id: String,
    pub lines: Vec<LineNo>,
    pub fault_lines: BTreeSet<LineNo>,
    pub questions: Vec<QuestionTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTruth {
    pub question_id: String,
    pub covered_lines: BTreeSet<LineNo>,
    pub covers_fault: bool,
}

impl GroundTruth {
    pub fn new(corpus: &Corpus, question_sets: &[QuestionSet]) -> Result<Self, AggregationError> {
        let cases = question_sets
            .iter()
            .map(|qs| {
                let case = corpus
                    .case(&qs.case_id)
                    .ok_or_else(|| AggregationError::UnknownCase(qs.case_id.clone()))?;
                Ok(CaseTruth {
                    case_id: qs.case_id.clone(),
                    lines: case.lines().collect(),
                    fault_lines: crate::corpus::fault_ground_truth(case),
                    questions: qs
                        .questions
                        .iter()
                        .map(|q| QuestionTruth {
                            question_id: q.question_id.clone(),
                            covered_lines: q.covered_lines.clone(),
                            covers_fault: q.covers_fault,
                        })
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_cases(cases))
    }

    pub fn from_cases(cases: Vec<CaseTruth>) -> Self {
        let index = cases
            .iter()
            .enumerate()
            .flat_map(|(c, case)| {
                case.questions
                    .iter()
                    .enumerate()
                    .map(move |(q, qt)| (qt.question_id.clone(), (c, q)))
            })
            .collect();
        GroundTruth { cases, index }
    }

    pub fn question(&self, question_id: &str) -> Option<(&CaseTruth, &QuestionTruth)> {
        self.index
            .get(question_id)
            .map(|&(c, q)| (&self.cases[c], &self.cases[c].questions[q]))
    }

    pub fn question_count(&self) -> usize {
        self.index.len()
    }

    pub fn fault_covering_count(&self) -> usize {
        self.cases
            .iter()
            .flat_map(|c| &c.questions)
            .filter(|q| q.covers_fault)
            .count()
    }

    pub fn total_lines(&self) -> usize {
        self.cases.iter().map(|c| c.lines.len()).sum()
    }

    pub fn largest_case(&self) -> usize {
        self.cases.iter().map(|c| c.questions.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub question_id: String,
    pub case_id: String,
    pub yes: usize,
    pub no: usize,
    pub idk: usize,
}

impl Tally {
    pub fn total(&self) -> usize {
        self.yes + self.no + self.idk
    }
}

/// Answers grouped per question in submission order (ties by answer id).
pub fn answers_by_question<'a>(
    truth: &GroundTruth,
    answers: &'a [AnswerRecord],
) -> Result<BTreeMap<String, Vec<&'a AnswerRecord>>, AggregationError> {
    let mut grouped: BTreeMap<String, Vec<&AnswerRecord>> = truth
        .cases
        .iter()
        .flat_map(|c| &c.questions)
        .map(|q| (q.question_id.clone(), Vec::new()))
        .collect();
    for a in answers {
        grouped
            .get_mut(&a.question_id)
            .ok_or_else(|| AggregationError::UnknownQuestion(a.question_id.clone()))?
            .push(a);
    }
    for list in grouped.values_mut() {
        list.sort_by(|x, y| {
            x.submitted_at
                .cmp(&y.submitted_at)
                .then_with(|| x.answer_id.cmp(&y.answer_id))
        });
    }
    Ok(grouped)
}

/// Counts YES/NO/IDK per question over all answers, or over the first
/// `limit` answers of each question. Every question gets a tally.
pub fn tally(
    truth: &GroundTruth,
    answers: &[AnswerRecord],
    limit: Option<usize>,
) -> Result<Vec<Tally>, AggregationError> {
    let grouped = answers_by_question(truth, answers)?;
    let mut out = Vec::with_capacity(truth.question_count());
    for case in &truth.cases {
        for q in &case.questions {
            let list = &grouped[&q.question_id];
            let used = match limit {
                Some(a) if a > list.len() => {
                    return Err(AggregationError::InsufficientAnswers {
                        question_id: q.question_id.clone(),
                        needed: a,
                        available: list.len(),
                    })
                }
                Some(a) => &list[..a],
                None => &list[..],
            };
            let mut t = Tally {
                question_id: q.question_id.clone(),
                case_id: case.case_id.clone(),
                yes: 0,
                no: 0,
                idk: 0,
            };
            for a in used {
                match a.option {
                    AnswerOption::Yes => t.yes += 1,
                    AnswerOption::No => t.no += 1,
                    AnswerOption::Idk => t.idk += 1,
                }
            }
            out.push(t);
        }
    }
    Ok(out)
}

/// Question ids the mechanism flags as covering a fault.
///
/// For AM3 a question needs at least one YES answer: a case where nobody
/// said YES has no top questions, even though every count ties at zero.
pub fn predict(tallies: &[Tally], cfg: AggregationConfig) -> Result<BTreeSet<String>, AggregationError> {
    cfg.validate(None)?;
    let n = cfg.n;
    Ok(match cfg.mechanism {
        Mechanism::Am1 => tallies
            .iter()
            .filter(|t| t.yes as i64 - t.no as i64 > n as i64)
            .map(|t| t.question_id.clone())
            .collect(),
        Mechanism::Am2 => tallies
            .iter()
            .filter(|t| t.yes > n)
            .map(|t| t.question_id.clone())
            .collect(),
        Mechanism::Am3 => {
            let mut by_case: BTreeMap<&str, Vec<&Tally>> = BTreeMap::new();
            for t in tallies {
                by_case.entry(&t.case_id).or_default().push(t);
            }
            let mut out = BTreeSet::new();
            for group in by_case.values() {
                let mut yes: Vec<usize> = group.iter().map(|t| t.yes).collect();
                yes.sort_unstable_by(|a, b| b.cmp(a));
                let cutoff = yes[n.min(yes.len()) - 1].max(1);
                out.extend(
                    group
                        .iter()
                        .filter(|t| t.yes >= cutoff)
                        .map(|t| t.question_id.clone()),
                );
            }
            out
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeClass {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "FN")]
    FalseNegative,
    #[serde(rename = "TN")]
    TrueNegative,
}

impl OutcomeClass {
    pub fn of(predicted: bool, covers_fault: bool) -> Self {
        match (predicted, covers_fault) {
            (true, true) => OutcomeClass::TruePositive,
            (true, false) => OutcomeClass::FalsePositive,
            (false, true) => OutcomeClass::FalseNegative,
            (false, false) => OutcomeClass::TrueNegative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::TruePositive => "TP",
            OutcomeClass::FalsePositive => "FP",
            OutcomeClass::FalseNegative => "FN",
            OutcomeClass::TrueNegative => "TN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub case_id: String,
    pub predicted: bool,
    pub class: OutcomeClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, class: OutcomeClass) {
        match class {
            OutcomeClass::TruePositive => self.tp += 1,
            OutcomeClass::FalsePositive => self.fp += 1,
            OutcomeClass::FalseNegative => self.fn_ += 1,
            OutcomeClass::TrueNegative => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }

    /// TP / (TP + FP); undefined without predictions.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// TP / (TP + FN); undefined without fault-covering questions.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `num / den` as a whole percentage, rounding halves away from zero.
pub fn percent(num: usize, den: usize) -> Option<u32> {
    (den > 0).then(|| ((200 * num as u64 + den as u64) / (2 * den as u64)) as u32)
}

/// Rounds a fraction in [0, 1] to a whole percentage, halves away from zero.
pub fn fraction_percent(f: f64) -> u32 {
    (f * 100.0).round() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub confusion: Confusion,
    pub located: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub outcomes: Vec<QuestionOutcome>,
    pub per_case: Vec<CaseOutcome>,
    pub overall: Confusion,
    pub faults_located: usize,
}

impl Classification {
    pub fn micro_precision(&self) -> Option<f64> {
        self.overall.precision()
    }

    pub fn micro_recall(&self) -> Option<f64> {
        self.overall.recall()
    }

    /// Mean of the per-case values, over cases where the value is defined.
    pub fn macro_precision(&self) -> Option<f64> {
        mean(self.per_case.iter().filter_map(|c| c.confusion.precision()))
    }

    pub fn macro_recall(&self) -> Option<f64> {
        mean(self.per_case.iter().filter_map(|c| c.confusion.recall()))
    }

    pub fn predicted(&self) -> BTreeSet<&str> {
        self.outcomes
            .iter()
            .filter(|o| o.predicted)
            .map(|o| o.question_id.as_str())
            .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores predicted question ids against the fault-covering flags. A case
/// counts as located when at least one of its questions is a true positive.
pub fn classify(truth: &GroundTruth, predicted: &BTreeSet<String>) -> Classification {
    let mut outcomes = Vec::with_capacity(truth.question_count());
    let mut per_case = Vec::with_capacity(truth.cases.len());
    let mut overall = Confusion::default();
    for case in &truth.cases {
        let mut confusion = Confusion::default();
        for q in &case.questions {
            let p = predicted.contains(&q.question_id);
            let class = OutcomeClass::of(p, q.covers_fault);
            confusion.add(class);
            overall.add(class);
            outcomes.push(QuestionOutcome {
                question_id: q.question_id.clone(),
                case_id: case.case_id.clone(),
                predicted: p,
                class,
            });
        }
        per_case.push(CaseOutcome {
            case_id: case.case_id.clone(),
            located: confusion.tp > 0,
            confusion,
        });
    }
    Classification {
        faults_located: per_case.iter().filter(|c| c.located).count(),
        outcomes,
        per_case,
        overall,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCounts {
    pub true_positive: usize,
    pub near_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl LineCounts {
    /// Builds counts from the five category values in table order.
    pub fn from_categories(tp: usize, np: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        LineCounts {
            true_positive: tp,
            near_positive: np,
            false_positive: fp,
            false_negative: fn_,
            true_negative: tn,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.near_positive + self.false_positive + self.false_negative + self.true_negative
    }

    /// Near positive plus false positive lines.
    pub fn extra(&self) -> usize {
        self.near_positive + self.false_positive
    }

    /// Every line a developer would read: the fault lines found plus the extra ones.
    pub fn lines_to_inspect(&self) -> usize {
        self.true_positive + self.extra()
    }

    pub fn extra_percent(&self) -> Option<u32> {
        percent(self.extra(), self.total())
    }

    fn merge(&mut self, other: &LineCounts) {
        self.true_positive += other.true_positive;
        self.near_positive += other.near_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
        self.true_negative += other.true_negative;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineCategory {
    TruePositive,
    NearPositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineScope {
    /// Only cases whose fault was located. The default for line reports.
    #[default]
    LocatedCases,
    AllCases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLines {
    pub case_id: String,
    pub counts: LineCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub scope: LineScope,
    pub per_case: Vec<CaseLines>,
    pub totals: LineCounts,
}

impl LineReport {
    pub fn extra_lines(&self) -> usize {
        self.totals.extra()
    }

    pub fn lines_to_inspect(&self) -> usize {
        self.totals.lines_to_inspect()
    }

    pub fn extra_percent(&self) -> Option<u32> {
        self.totals.extra_percent()
    }
}

/// Category of every printed line of one case, by precedence
/// TP > near positive > FP > FN > TN.
pub fn categorize_lines(case: &CaseTruth, predicted: &BTreeSet<String>) -> BTreeMap<LineNo, LineCategory> {
    let mut tp_cover = BTreeSet::new();
    let mut fp_cover = BTreeSet::new();
    for q in case.questions.iter().filter(|q| predicted.contains(&q.question_id)) {
        if q.covers_fault {
            tp_cover.extend(q.covered_lines.iter().copied());
        } else {
            fp_cover.extend(q.covered_lines.iter().copied());
        }
    }
    case.lines
        .iter()
        .map(|&line| {
            let fault = case.fault_lines.contains(&line);
            let cat = if fault && tp_cover.contains(&line) {
                LineCategory::TruePositive
            } else if tp_cover.contains(&line) {
                LineCategory::NearPositive
            } else if !fault && fp_cover.contains(&line) {
                LineCategory::FalsePositive
            } else if fault {
                LineCategory::FalseNegative
            } else {
                LineCategory::TrueNegative
            };
            (line, cat)
        })
        .collect()
}

pub fn line_level(truth: &GroundTruth, classification: &Classification, scope: LineScope) -> LineReport {
    let predicted: BTreeSet<String> = classification.predicted().into_iter().map(str::to_string).collect();
    let located: BTreeSet<&str> = classification
        .per_case
        .iter()
        .filter(|c| c.located)
        .map(|c| c.case_id.as_str())
        .collect();
    let mut per_case = Vec::new();
    let mut totals = LineCounts::default();
    for case in &truth.cases {
        if scope == LineScope::LocatedCases && !located.contains(case.case_id.as_str()) {
            continue;
        }
        let mut counts = LineCounts::default();
        for cat in categorize_lines(case, &predicted).values() {
            match cat {
                LineCategory::TruePositive => counts.true_positive += 1,
                LineCategory::NearPositive => counts.near_positive += 1,
                LineCategory::FalsePositive => counts.false_positive += 1,
                LineCategory::FalseNegative => counts.false_negative += 1,
                LineCategory::TrueNegative => counts.true_negative += 1,
            }
        }
        totals.merge(&counts);
        per_case.push(CaseLines {
            case_id: case.case_id.clone(),
            counts,
        });
    }
    LineReport {
        scope,
        per_case,
        totals,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub config: AggregationConfig,
    pub limit: Option<usize>,
    pub tallies: Vec<Tally>,
    pub classification: Classification,
    pub lines: LineReport,
}

impl AggregationReport {
    pub fn faults_located(&self) -> usize {
        self.classification.faults_located
    }

    pub fn overall(&self) -> Confusion {
        self.classification.overall
    }

    /// Plain-text summary with micro and macro precision/recall.
    pub fn render_text(&self) -> String {
        let c = &self.classification;
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |f| format!("{}%", fraction_percent(f)));
        let mut out = String::new();
        out.push_str(&format!("mechanism: {}\n", self.config));
        if let Some(a) = self.limit {
            out.push_str(&format!("answers per question: {a}\n"));
        }
        out.push_str(&format!(
            "TP {}  FP {}  FN {}  TN {}  total {}\n",
            c.overall.tp,
            c.overall.fp,
            c.overall.fn_,
            c.overall.tn,
            c.overall.total()
        ));
        out.push_str(&format!("faults located: {} of {}\n", c.faults_located, c.per_case.len()));
        out.push_str(&format!(
            "precision (micro/macro): {} / {}\n",
            pct(c.micro_precision()),
            pct(c.macro_precision())
        ));
        out.push_str(&format!(
            "recall (micro/macro): {} / {}\n",
            pct(c.micro_recall()),
            pct(c.macro_recall())
        ));
        let t = &self.lines.totals;
        out.push_str(&format!(
            "lines: tp {} near {} fp {} fn {} tn {} total {}\n",
            t.true_positive,
            t.near_positive,
            t.false_positive,
            t.false_negative,
            t.true_negative,
            t.total()
        ));
        out.push_str(&format!(
            "extra lines to inspect: {} ({})\n",
            t.extra(),
            t.extra_percent().map_or("n/a".into(), |p| format!("{p}%"))
        ));
        out.push_str("case,tp,fp,fn,tn,precision,recall,located\n");
        for pc in &c.per_case {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                pc.case_id,
                pc.confusion.tp,
                pc.confusion.fp,
                pc.confusion.fn_,
                pc.confusion.tn,
                pct(pc.confusion.precision()),
                pct(pc.confusion.recall()),
                pc.located
            ));
        }
        out
    }

    /// One CSV row per question: tally, prediction and class.
    pub fn outcomes_csv(&self) -> String {
        let mut out = String::from("question_id,case_id,yes,no,idk,predicted,class\n");
        for (t, o) in self.tallies.iter().zip(&self.classification.outcomes) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.question_id,
                t.case_id,
                t.yes,
                t.no,
                t.idk,
                o.predicted,
                o.class.as_str()
            ));
        }
        out
    }
}

/// Tally, predict, classify and score lines in one call.
pub fn aggregate(
    truth: &GroundTruth,
    answers: &[AnswerRecord],
    cfg: AggregationConfig,
    limit: Option<usize>,
    scope: LineScope,
) -> Result<AggregationReport, AggregationError> {
    let tallies = tally(truth, answers, limit)?;
    let predicted = predict(&tallies, cfg)?;
    let classification = classify(truth, &predicted);
    let lines = line_level(truth, &classification, scope);
    Ok(AggregationReport {
        config: cfg,
        limit,
        tallies,
        classification,
        lines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub predicted: usize,
    pub faults_located: usize,
}

/// One point per threshold: n in 0..=K for AM1/AM2, 1..=largest case for AM3.
/// K is the largest number of answers any question received.
pub fn threshold_sweep(
    truth: &GroundTruth,
    answers: &[AnswerRecord],
    mechanism: Mechanism,
) -> Result<Vec<SweepPoint>, AggregationError> {
    let tallies = tally(truth, answers, None)?;
    let range = match mechanism {
        Mechanism::Am1 | Mechanism::Am2 => 0..=tallies.iter().map(Tally::total).max().unwrap_or(0),
        Mechanism::Am3 => 1..=truth.largest_case().max(1),
    };
    range
        .map(|n| {
            let predicted = predict(&tallies, AggregationConfig::new(mechanism, n))?;
            let c = classify(truth, &predicted);
            Ok(SweepPoint {
                n,
                tp: c.overall.tp,
                tn: c.overall.tn,
                fp: c.overall.fp,
                fn_: c.overall.fn_,
                predicted: predicted.len(),
                faults_located: c.faults_located,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("n,tp,tn,fp,fn,predicted,faults_located\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.n, p.tp, p.tn, p.fp, p.fn_, p.predicted, p.faults_located
        ));
    }
    out
}

/// Replication available for every question: the smallest answer count.
pub fn common_replication(truth: &GroundTruth, answers: &[AnswerRecord]) -> Result<usize, AggregationError> {
    Ok(answers_by_question(truth, answers)?
        .values()
        .map(Vec::len)
        .min()
        .unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMinimum {
    pub case_id: String,
    /// Smallest number of answers per question that locates the fault;
    /// `None` when no amount up to the full replication does.
    pub minimum: Option<usize>,
    pub lines: Option<LineCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinReplication {
    pub config: AggregationConfig,
    pub replication: usize,
    pub per_case: Vec<CaseMinimum>,
    /// Line counts summed over located cases, each at its own minimum.
    pub totals: LineCounts,
}

impl MinReplication {
    /// Answers per question needed to locate every locatable fault.
    pub fn overall_minimum(&self) -> Option<usize> {
        self.per_case.iter().filter_map(|c| c.minimum).max()
    }

    pub fn all_located(&self) -> bool {
        self.per_case.iter().all(|c| c.minimum.is_some())
    }
}

pub fn min_replication_sweep(
    truth: &GroundTruth,
    answers: &[AnswerRecord],
    cfg: AggregationConfig,
) -> Result<MinReplication, AggregationError> {
    cfg.validate(None)?;
    let k = common_replication(truth, answers)?;
    let mut per_case: Vec<CaseMinimum> = truth
        .cases
        .iter()
        .map(|c| CaseMinimum {
            case_id: c.case_id.clone(),
            minimum: None,
            lines: None,
        })
        .collect();
    for a in 1..=k {
        if per_case.iter().all(|c| c.minimum.is_some()) {
            break;
        }
        let tallies = tally(truth, answers, Some(a))?;
        let predicted = predict(&tallies, cfg)?;
        let classification = classify(truth, &predicted);
        let lines = line_level(truth, &classification, LineScope::AllCases);
        for ((slot, outcome), cl) in per_case.iter_mut().zip(&classification.per_case).zip(&lines.per_case) {
            if slot.minimum.is_none() && outcome.located {
                slot.minimum = Some(a);
                slot.lines = Some(cl.counts);
            }
        }
    }
    let mut totals = LineCounts::default();
    for c in per_case.iter().filter_map(|c| c.lines.as_ref()) {
        totals.merge(c);
    }
    Ok(MinReplication {
        config: cfg,
        replication: k,
        per_case,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutTimeRow {
    pub a: usize,
    /// Earliest instant at which every question had `a` answers.
    pub cut_time: Option<DateTime<Utc>>,
    pub hours: Option<f64>,
    pub workers: usize,
    pub answers: usize,
    pub faults_located: usize,
    pub lines_to_inspect: usize,
    pub reachable: bool,
}

/// One row per a in 1..=K. Metrics come from the first `a` answers of each
/// question only, regardless of what else had arrived by the cut time.
/// Hours are measured from `origin`, or from the first answer if absent.
pub fn cut_time_analysis(
    truth: &GroundTruth,
    answers: &[AnswerRecord],
    cfg: AggregationConfig,
    k: usize,
    origin: Option<DateTime<Utc>>,
) -> Result<Vec<CutTimeRow>, AggregationError> {
    cfg.validate(None)?;
    let grouped = answers_by_question(truth, answers)?;
    let origin = origin.or_else(|| answers.iter().map(|a| a.submitted_at).min());
    let mut rows = Vec::with_capacity(k);
    for a in 1..=k {
        let reachable = grouped.values().all(|list| list.len() >= a);
        if !reachable {
            rows.push(CutTimeRow {
                a,
                cut_time: None,
                hours: None,
                workers: 0,
                answers: 0,
                faults_located: 0,
                lines_to_inspect: 0,
                reachable: false,
            });
            continue;
        }
        let cut_time = grouped.values().map(|list| list[a - 1].submitted_at).max();
        let workers: BTreeSet<&str> = grouped
            .values()
            .flat_map(|list| list[..a].iter().map(|r| r.worker_id.as_str()))
            .collect();
        let report = aggregate(truth, answers, cfg, Some(a), LineScope::LocatedCases)?;
        rows.push(CutTimeRow {
            a,
            hours: match (cut_time, origin) {
                (Some(t), Some(o)) => Some((t - o).num_milliseconds() as f64 / 3_600_000.0),
                _ => None,
            },
            cut_time,
            workers: workers.len(),
            answers: a * grouped.len(),
            faults_located: report.faults_located(),
            lines_to_inspect: report.lines.lines_to_inspect(),
            reachable: true,
        });
    }
    Ok(rows)
}

pub fn cut_time_csv(rows: &[CutTimeRow]) -> String {
    let mut out = String::from("cut_time_hours,a,workers,answers,faults_located,lines_to_inspect,reachable\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.hours.map_or(String::new(), |h| format!("{h:.1}")),
            r.a,
            r.workers,
            r.answers,
            r.faults_located,
            r.lines_to_inspect,
            r.reachable
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str, case: &str, yes: usize, no: usize) -> Tally {
        Tally {
            question_id: id.into(),
            case_id: case.into(),
            yes,
            no,
            idk: 0,
        }
    }

    fn ids(set: &BTreeSet<String>) -> Vec<&str> {
        set.iter().map(String::as_str).collect()
    }

    #[test]
    fn am3_includes_ties_at_the_cutoff() {
        let tallies = [t("a", "C", 7, 0), t("b", "C", 5, 0), t("c", "C", 5, 0), t("d", "C", 3, 0)];
        let p = predict(&tallies, AggregationConfig::new(Mechanism::Am3, 2)).unwrap();
        assert_eq!(ids(&p), ["a", "b", "c"]);
    }

    #[test]
    fn am3_is_per_case() {
        let tallies = [t("a", "C1", 9, 0), t("b", "C1", 8, 0), t("c", "C2", 1, 0), t("d", "C2", 0, 0)];
        let p = predict(&tallies, AggregationConfig::new(Mechanism::Am3, 1)).unwrap();
        assert_eq!(ids(&p), ["a", "c"]);
    }

    #[test]
    fn am3_without_yes_predicts_nothing() {
        let tallies = [t("a", "C", 0, 4), t("b", "C", 0, 2)];
        let p = predict(&tallies, AggregationConfig::new(Mechanism::Am3, 2)).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn strict_thresholds() {
        let am1 = AggregationConfig::new(Mechanism::Am1, 0);
        assert!(predict(&[t("a", "C", 10, 10)], am1).unwrap().is_empty());
        assert_eq!(predict(&[t("a", "C", 11, 10)], am1).unwrap().len(), 1);
        let am2 = AggregationConfig::new(Mechanism::Am2, 5);
        assert_eq!(predict(&[t("a", "C", 6, 14)], am2).unwrap().len(), 1);
        assert!(predict(&[t("a", "C", 5, 15)], am2).unwrap().is_empty());
    }

    #[test]
    fn am3_rejects_zero() {
        assert!(matches!(
            predict(&[], AggregationConfig::new(Mechanism::Am3, 0)),
            Err(AggregationError::InvalidThreshold { .. })
        ));
        assert!(AggregationConfig::new(Mechanism::Am2, 21).validate(Some(20)).is_err());
    }

    #[test]
    fn mechanism_names() {
        assert_eq!("AM.3".parse::<Mechanism>().unwrap(), Mechanism::Am3);
        assert_eq!("am1".parse::<Mechanism>().unwrap(), Mechanism::Am1);
        assert!("AM4".parse::<Mechanism>().is_err());
    }

    fn toy_truth() -> GroundTruth {
        let q = |id: &str, lines: &[LineNo], covers| QuestionTruth {
            question_id: id.into(),
            covered_lines: lines.iter().copied().collect(),
            covers_fault: covers,
        };
        GroundTruth::from_cases(vec![CaseTruth {
            case_id: "S".into(),
            lines: (1..=6).collect(),
            fault_lines: [3].into_iter().collect(),
            questions: vec![
                q("q1", &[2, 3], true),
                q("q2", &[3, 4], true),
                q("q3", &[5], false),
                q("q4", &[6], false),
            ],
        }])
    }

    #[test]
    fn four_question_enumeration() {
        let truth = GroundTruth::from_cases(vec![CaseTruth {
            case_id: "S".into(),
            lines: (1..=4).collect(),
            fault_lines: [2].into_iter().collect(),
            questions: (1..=4)
                .map(|i| QuestionTruth {
                    question_id: format!("q{i}"),
                    covered_lines: [i].into_iter().collect(),
                    covers_fault: i == 2,
                })
                .collect(),
        }]);
        let c = classify(&truth, &["q1".to_string()].into_iter().collect());
        assert_eq!(c.overall, Confusion { tp: 0, fp: 1, fn_: 1, tn: 2 });
        assert_eq!(c.faults_located, 0);
    }

    #[test]
    fn line_precedence() {
        // q1 (TP) covers {2,3}; q3 is an FP covering {5}. Line 4 is covered by
        // the unpredicted q2 only, so it is a true negative.
        let truth = toy_truth();
        let predicted: BTreeSet<String> = ["q1", "q3"].iter().map(|s| s.to_string()).collect();
        let cats = categorize_lines(&truth.cases[0], &predicted);
        assert_eq!(cats[&3], LineCategory::TruePositive);
        assert_eq!(cats[&2], LineCategory::NearPositive);
        assert_eq!(cats[&5], LineCategory::FalsePositive);
        assert_eq!(cats[&4], LineCategory::TrueNegative);
        let c = classify(&truth, &predicted);
        let r = line_level(&truth, &c, LineScope::LocatedCases);
        assert_eq!(r.totals, LineCounts::from_categories(1, 1, 1, 0, 3));
        assert_eq!(r.lines_to_inspect(), 3);
    }

    #[test]
    fn unlocated_cases_leave_the_default_scope() {
        let truth = toy_truth();
        let predicted: BTreeSet<String> = ["q3".to_string()].into_iter().collect();
        let c = classify(&truth, &predicted);
        assert!(line_level(&truth, &c, LineScope::LocatedCases).per_case.is_empty());
        let all = line_level(&truth, &c, LineScope::AllCases);
        assert_eq!(all.totals.false_negative, 1);
        assert_eq!(all.totals.false_positive, 1);
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(percent(33, 211), Some(16));
        assert_eq!(percent(15, 19), Some(79));
        assert_eq!(percent(1, 78), Some(1));
        assert_eq!(percent(3, 7), Some(43));
        assert_eq!(percent(1, 8), Some(13));
        assert_eq!(percent(1, 0), None);
    }

    #[test]
    fn line_columns_match_reference() {
        let am3 = LineCounts::from_categories(10, 31, 2, 0, 168);
        assert_eq!((am3.extra(), am3.total(), am3.extra_percent()), (33, 211, Some(16)));
        assert_eq!(am3.lines_to_inspect(), 43);
        let j4 = LineCounts::from_categories(2, 1, 0, 0, 75);
        assert_eq!((j4.extra(), j4.total(), j4.extra_percent()), (1, 78, Some(1)));
    }
}
