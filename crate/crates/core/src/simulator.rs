//! Synthetic crowds.
//!
//! A [`PopulationModel`] draws workers, an [`AnswerModel`] draws what a
//! worker answers to a question, and [`run_experiment`] drives an
//! [`Experiment`] with both until every question holds K answers. Runs are
//! deterministic for a given seed: one ChaCha stream feeds every draw and
//! simultaneous events are ordered by insertion.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ElementKind;
use crate::answers::{AnswerOption, AnswerPayload, Dataset};
use crate::corpus::Corpus;
use crate::orchestrator::{
    Demographics, Experiment, ExperimentConfig, OrchestratorError, Profession, QuitReason,
};
use crate::questions::Question;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("no progress after {0} arrivals")]
    Stalled(usize),
}

fn check_distribution(name: &str, weights: &[f64]) -> Result<(), SimulationError> {
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(SimulationError::Model(format!("{name}: weights must lie in [0, 1]")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SimulationError::Model(format!("{name}: weights sum to {sum}, not 1")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), SimulationError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SimulationError::Model(format!("{name} must be positive, got {v}")))
    }
}

fn check_probability(name: &str, v: f64) -> Result<(), SimulationError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimulationError::Model(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// A positively skewed quantity, parameterized by its median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalSpec {
    fn validate(&self, name: &str) -> Result<(), SimulationError> {
        check_positive(&format!("{name}.median"), self.median)?;
        check_positive(&format!("{name}.sigma"), self.sigma)
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        LogNormal::new(self.median.ln(), self.sigma)
            .expect("validated parameters")
            .sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutModel {
    /// Chance of leaving a HIT early is `base + per_loc * loc`, capped at `max`.
    pub base: f64,
    pub per_loc: f64,
    pub max: f64,
    /// Share of dropouts that close the tab instead of quitting; their
    /// assignments run into the timeout.
    pub abandon_share: f64,
    /// Weights of the quit reasons, in the order of `QuitReason::ALL`.
    pub reason_weights: [f64; 4],
}

impl Default for DropoutModel {
    fn default() -> Self {
        DropoutModel {
            base: 0.02,
            per_loc: 0.002,
            max: 0.5,
            abandon_share: 0.2,
            reason_weights: [69.0, 11.0, 7.0, 19.0],
        }
    }
}

impl DropoutModel {
    pub fn probability(&self, loc: usize) -> f64 {
        (self.base + self.per_loc * loc as f64).min(self.max)
    }

    fn validate(&self) -> Result<(), SimulationError> {
        check_probability("dropout.base", self.base)?;
        check_probability("dropout.max", self.max)?;
        check_probability("dropout.abandon_share", self.abandon_share)?;
        if self.per_loc < 0.0 || self.reason_weights.iter().any(|w| *w < 0.0) || self.reason_weights.iter().sum::<f64>() <= 0.0 {
            return Err(SimulationError::Model("dropout weights must be non-negative and not all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    pub profession_mix: BTreeMap<Profession, f64>,
    /// Share of workers who pass the qualification test.
    pub pass_rate: f64,
    /// Score distribution among passers, keyed by number of correct answers.
    pub passer_scores: BTreeMap<usize, f64>,
    pub years_of_experience: BTreeMap<Profession, LogNormalSpec>,
    /// Mean seconds between arrivals of new workers at the start of a run.
    pub mean_interarrival_secs: f64,
    /// Relative growth of the inter-arrival mean per arrival, as interest fades.
    pub arrival_decay: f64,
    /// Chance that a worker asks for another HIT after completing one.
    pub return_probability: f64,
    pub mean_return_delay_secs: f64,
    #[serde(default)]
    pub dropout: Option<DropoutModel>,
}

impl Default for PopulationModel {
    fn default() -> Self {
        use Profession::*;
        let yoe = |median, sigma| LogNormalSpec { median, sigma };
        PopulationModel {
            profession_mix: BTreeMap::from([
                (Hobbyist, 0.30),
                (Undergraduate, 0.25),
                (Professional, 0.20),
                (Graduate, 0.16),
                (Other, 0.09),
            ]),
            pass_rate: 0.6,
            passer_scores: BTreeMap::from([(3, 0.3), (4, 0.3), (5, 0.4)]),
            years_of_experience: BTreeMap::from([
                (Hobbyist, yoe(4.0, 0.8)),
                (Undergraduate, yoe(2.5, 0.6)),
                (Professional, yoe(9.0, 0.6)),
                (Graduate, yoe(5.0, 0.6)),
                (Other, yoe(4.0, 0.9)),
            ]),
            mean_interarrival_secs: 90.0,
            arrival_decay: 0.001,
            return_probability: 0.42,
            mean_return_delay_secs: 300.0,
            dropout: None,
        }
    }
}

impl PopulationModel {
    pub fn with_dropout(mut self) -> Self {
        self.dropout = Some(DropoutModel::default());
        self
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        check_distribution("profession_mix", &self.profession_mix.values().copied().collect::<Vec<_>>())?;
        check_distribution("passer_scores", &self.passer_scores.values().copied().collect::<Vec<_>>())?;
        if self.passer_scores.keys().any(|&k| k > 5) {
            return Err(SimulationError::Model("passer_scores keys are correct answers out of 5".into()));
        }
        check_probability("pass_rate", self.pass_rate)?;
        check_probability("return_probability", self.return_probability)?;
        check_positive("mean_interarrival_secs", self.mean_interarrival_secs)?;
        check_positive("mean_return_delay_secs", self.mean_return_delay_secs)?;
        if !(self.arrival_decay >= 0.0 && self.arrival_decay.is_finite()) {
            return Err(SimulationError::Model("arrival_decay must be non-negative".into()));
        }
        for p in self.profession_mix.keys() {
            self.years_of_experience
                .get(p)
                .ok_or_else(|| SimulationError::Model(format!("no experience model for {}", p.as_str())))?
                .validate("years_of_experience")?;
        }
        if let Some(d) = &self.dropout {
            d.validate()?;
        }
        Ok(())
    }
}

/// Accuracy by qualification score (percent) and difficulty 1..=5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable(pub BTreeMap<u32, [f64; 5]>);

impl AccuracyTable {
    pub fn table28() -> Self {
        AccuracyTable(BTreeMap::from([
            (60, [0.68, 0.74, 0.66, 0.59, 0.55]),
            (80, [0.85, 0.85, 0.71, 0.61, 0.53]),
            (100, [0.88, 0.77, 0.63, 0.67, 0.64]),
        ]))
    }

    pub fn uniform(acc: f64) -> Self {
        AccuracyTable([60, 80, 100].into_iter().map(|s| (s, [acc; 5])).collect())
    }

    /// The row of the highest score not above `score`, or the lowest row.
    pub fn get(&self, score: u32, difficulty: u8) -> f64 {
        let row = self
            .0
            .range(..=score)
            .next_back()
            .or_else(|| self.0.iter().next())
            .map(|(_, r)| r)
            .expect("validated tables are non-empty");
        row[(difficulty.clamp(1, 5) - 1) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub intercept: f64,
    /// Change in expected confidence per difficulty level; negative.
    pub slope: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerModel {
    pub accuracy: AccuracyTable,
    pub p_idk: f64,
    /// Difficulty ratings that accompany IDK answers.
    pub idk_difficulty: [f64; 5],
    /// Difficulty ratings of answered questions, unless `difficulty_by_kind`
    /// overrides the question's kind.
    pub difficulty: [f64; 5],
    #[serde(default)]
    pub difficulty_by_kind: BTreeMap<ElementKind, [f64; 5]>,
    pub confidence: ConfidenceModel,
    /// Median answer time by position in the HIT; the last entry repeats.
    pub duration_medians_secs: Vec<f64>,
    pub duration_sigma: f64,
    pub explanation_chars: LogNormalSpec,
}

impl Default for AnswerModel {
    fn default() -> Self {
        Self::table28()
    }
}

impl AnswerModel {
    pub fn table28() -> Self {
        AnswerModel {
            accuracy: AccuracyTable::table28(),
            p_idk: 0.12,
            idk_difficulty: [0.01, 0.04, 0.15, 0.29, 0.51],
            difficulty: [0.12, 0.16, 0.275, 0.235, 0.21],
            difficulty_by_kind: BTreeMap::new(),
            confidence: ConfidenceModel {
                intercept: 4.6,
                slope: -0.6,
                noise_sd: 1.1,
            },
            duration_medians_secs: vec![150.0, 110.0, 100.0],
            duration_sigma: 0.8,
            explanation_chars: LogNormalSpec {
                median: 90.0,
                sigma: 0.9,
            },
        }
    }

    /// Every answer correct, never IDK.
    pub fn perfect() -> Self {
        Self::uniform(1.0)
    }

    pub fn uniform(acc: f64) -> Self {
        AnswerModel {
            accuracy: AccuracyTable::uniform(acc),
            p_idk: 0.0,
            ..Self::table28()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table28" => Some(Self::table28()),
            "perfect" => Some(Self::perfect()),
            "coin" => Some(Self::uniform(0.5)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.accuracy.0.is_empty() {
            return Err(SimulationError::Model("accuracy table is empty".into()));
        }
        for row in self.accuracy.0.values() {
            for &a in row {
                check_probability("accuracy", a)?;
            }
        }
        check_probability("p_idk", self.p_idk)?;
        check_distribution("idk_difficulty", &self.idk_difficulty)?;
        check_distribution("difficulty", &self.difficulty)?;
        for d in self.difficulty_by_kind.values() {
            check_distribution("difficulty_by_kind", d)?;
        }
        check_positive("confidence.noise_sd", self.confidence.noise_sd)?;
        if self.duration_medians_secs.is_empty() {
            return Err(SimulationError::Model("duration_medians_secs is empty".into()));
        }
        for &m in &self.duration_medians_secs {
            check_positive("duration median", m)?;
        }
        check_positive("duration_sigma", self.duration_sigma)?;
        self.explanation_chars.validate("explanation_chars")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorker {
    pub worker_id: String,
    pub demographics: Demographics,
    /// Correct answers the worker will give on the qualification test.
    pub qualification_correct: usize,
}

impl SimulatedWorker {
    pub fn score_percent(&self) -> u32 {
        self.qualification_correct as u32 * 20
    }
}

const COUNTRIES: [&str; 6] = ["United States", "India", "Brazil", "Germany", "Canada", "Other"];

fn sample_worker(model: &PopulationModel, index: usize, rng: &mut impl Rng) -> SimulatedWorker {
    let professions: Vec<Profession> = model.profession_mix.keys().copied().collect();
    let mix = WeightedIndex::new(model.profession_mix.values()).expect("validated mix");
    let profession = professions[mix.sample(rng)];
    let qualification_correct = if rng.random_bool(model.pass_rate) {
        let scores: Vec<usize> = model.passer_scores.keys().copied().collect();
        scores[WeightedIndex::new(model.passer_scores.values()).expect("validated mix").sample(rng)]
    } else {
        rng.random_range(0..3)
    };
    let years_of_experience = (model.years_of_experience[&profession].sample(rng) * 10.0).round() / 10.0;
    let age = if profession.is_student() {
        rng.random_range(18..30)
    } else {
        rng.random_range(20..60)
    };
    SimulatedWorker {
        worker_id: format!("sim-{:05}", index + 1),
        demographics: Demographics {
            age,
            gender: if rng.random_bool(0.8) { "male" } else { "female" }.into(),
            country: COUNTRIES[rng.random_range(0..COUNTRIES.len())].into(),
            years_of_experience,
            profession,
            learned_at: if rng.random_bool(0.6) { "university" } else { "self-taught" }.into(),
            languages: vec!["Java".into()],
        },
        qualification_correct,
    }
}

pub fn sample_population(model: &PopulationModel, count: usize, seed: u64) -> Result<Vec<SimulatedWorker>, SimulationError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|i| sample_worker(model, i, &mut rng)).collect())
}

/// One simulated response: the payload to submit, its separately rated
/// difficulty and how long the worker spent on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnswer {
    pub payload: AnswerPayload,
    pub difficulty: u8,
    pub duration_secs: f64,
}

fn draw_level(weights: &[f64; 5], rng: &mut impl Rng) -> u8 {
    WeightedIndex::new(weights).expect("validated distribution").sample(rng) as u8 + 1
}

pub fn simulate_answer(
    score_percent: u32,
    question: &Question,
    order_in_hit: usize,
    model: &AnswerModel,
    rng: &mut impl Rng,
) -> SimulatedAnswer {
    let idk = model.p_idk > 0.0 && rng.random_bool(model.p_idk);
    let (option, difficulty, confidence) = if idk {
        (AnswerOption::Idk, draw_level(&model.idk_difficulty, rng), 0)
    } else {
        let weights = model.difficulty_by_kind.get(&question.kind()).unwrap_or(&model.difficulty);
        let d = draw_level(weights, rng);
        let correct = rng.random_bool(model.accuracy.get(score_percent, d));
        let option = match (correct, question.covers_fault) {
            (true, true) | (false, false) => AnswerOption::Yes,
            _ => AnswerOption::No,
        };
        let c = &model.confidence;
        let noise = Normal::new(0.0, c.noise_sd).expect("validated sd").sample(rng);
        let confidence = (c.intercept + c.slope * d as f64 + noise).round().clamp(1.0, 5.0) as u8;
        (option, d, confidence)
    };
    let medians = &model.duration_medians_secs;
    let median = medians[order_in_hit.min(medians.len() - 1)];
    let duration_secs = LogNormalSpec {
        median,
        sigma: model.duration_sigma,
    }
    .sample(rng)
    .max(1.0);
    let chars = (model.explanation_chars.sample(rng).round() as usize).max(1);
    SimulatedAnswer {
        payload: AnswerPayload {
            option,
            confidence,
            explanation: explanation_text(chars),
            difficulty: None,
        },
        difficulty,
        duration_secs,
    }
}

fn explanation_text(chars: usize) -> String {
    const FILLER: &str = "the value reaching this line looks wrong for the failing input ";
    FILLER.chars().cycle().take(chars).collect()
}

pub fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 5, 13, 0, 0).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationStats {
    pub arrivals: usize,
    pub qualified: usize,
    pub assignments: usize,
    pub quits: usize,
    pub abandoned: usize,
    pub expired_submissions: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

pub struct SimulationRun {
    pub experiment: Experiment,
    pub workers: Vec<SimulatedWorker>,
    pub stats: SimulationStats,
}

impl SimulationRun {
    pub fn dataset(&self) -> Dataset {
        self.experiment.dataset()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Finish,
    Quit(usize, QuitReason),
    Abandon(usize),
}

#[derive(Debug)]
enum Step {
    Arrive,
    Request { worker: usize },
    Serve { worker: usize, assignment: String, plan: Plan },
    Submit { worker: usize, assignment: String, plan: Plan, question_id: String, answer: SimulatedAnswer },
}

struct Queue {
    heap: BinaryHeap<Reverse<(DateTime<Utc>, u64)>>,
    steps: BTreeMap<u64, Step>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, at: DateTime<Utc>, step: Step) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq)));
        self.steps.insert(self.seq, step);
    }

    fn pop(&mut self) -> Option<(DateTime<Utc>, Step)> {
        let Reverse((at, seq)) = self.heap.pop()?;
        Some((at, self.steps.remove(&seq).expect("every queued key has a step")))
    }
}

fn secs(s: f64) -> Duration {
    Duration::milliseconds((s * 1000.0).round() as i64)
}

/// Arrivals without a single issued assignment before the run gives up.
const STALL_LIMIT: usize = 50_000;

/// Drives a fresh experiment on `corpus` with simulated workers until every
/// question has `cfg.replication` counted answers.
pub fn run_experiment(
    corpus: &Corpus,
    cfg: ExperimentConfig,
    population: &PopulationModel,
    answers: &AnswerModel,
    seed: u64,
) -> Result<SimulationRun, SimulationError> {
    let start = default_start();
    let exp = Experiment::new(corpus, cfg, seed, start)?;
    drive(exp, corpus, population, answers, seed, start)
}

/// Like [`run_experiment`] on an experiment the caller already built.
pub fn drive(
    mut exp: Experiment,
    corpus: &Corpus,
    population: &PopulationModel,
    model: &AnswerModel,
    seed: u64,
    start: DateTime<Utc>,
) -> Result<SimulationRun, SimulationError> {
    population.validate()?;
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut workers: Vec<SimulatedWorker> = Vec::new();
    let mut stats = SimulationStats {
        arrivals: 0,
        qualified: 0,
        assignments: 0,
        quits: 0,
        abandoned: 0,
        expired_submissions: 0,
        started_at: start,
        finished_at: start,
    };
    let mut q = Queue {
        heap: BinaryHeap::new(),
        steps: BTreeMap::new(),
        seq: 0,
    };
    q.push(start, Step::Arrive);
    let mut since_progress = 0usize;
    let mut now = start;

    while !exp.is_quiescent() {
        let Some((at, step)) = q.pop() else { break };
        now = at;
        match step {
            Step::Arrive => {
                since_progress += 1;
                if since_progress > STALL_LIMIT {
                    return Err(SimulationError::Stalled(stats.arrivals));
                }
                let index = workers.len();
                let w = sample_worker(population, index, &mut rng);
                stats.arrivals += 1;
                exp.expire_overdue(now)?;
                exp.register_worker(&w.worker_id, None, now)?;
                exp.record_demographics(&w.worker_id, w.demographics.clone(), now)?;
                let responses = exp.qualification_test(&w.worker_id, now)?.responses_with_score(w.qualification_correct);
                let t = now + secs(rng.random_range(120.0..420.0));
                let result = exp.grade_qualification(&w.worker_id, &responses, t)?;
                if result.passed {
                    stats.qualified += 1;
                    q.push(t + secs(rng.random_range(5.0..60.0)), Step::Request { worker: index });
                }
                workers.push(w);
                let mean = population.mean_interarrival_secs * (1.0 + population.arrival_decay * index as f64);
                let gap = Exp::new(1.0 / mean).expect("positive rate").sample(&mut rng);
                q.push(now + secs(gap), Step::Arrive);
            }
            Step::Request { worker } => {
                let id = workers[worker].worker_id.clone();
                let assignment = match exp.next_assignment(&id, now) {
                    Ok(Some(a)) => a,
                    Ok(None) | Err(OrchestratorError::Capped(_)) => continue,
                    Err(e) => return Err(e.into()),
                };
                since_progress = 0;
                stats.assignments += 1;
                let plan = match &population.dropout {
                    Some(d) => {
                        let loc = corpus.case(&assignment.case_id).map_or(0, |c| c.loc);
                        if rng.random_bool(d.probability(loc)) {
                            let len = exp.hit(&assignment.hit_id).map_or(1, |h| h.question_ids.len());
                            let at = rng.random_range(0..len);
                            if rng.random_bool(d.abandon_share) {
                                Plan::Abandon(at)
                            } else {
                                let r = WeightedIndex::new(d.reason_weights).expect("validated weights").sample(&mut rng);
                                Plan::Quit(at, QuitReason::ALL[r])
                            }
                        } else {
                            Plan::Finish
                        }
                    }
                    None => Plan::Finish,
                };
                q.push(
                    now + secs(rng.random_range(2.0..10.0)),
                    Step::Serve {
                        worker,
                        assignment: assignment.assignment_id,
                        plan,
                    },
                );
            }
            Step::Serve { worker, assignment, plan } => {
                let served = match exp.serve_question(&assignment, now) {
                    Ok(s) => s.map(|s| (s.question.clone(), s.order_in_hit)),
                    Err(OrchestratorError::Expired(_)) => {
                        stats.expired_submissions += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let Some((question, order)) = served else {
                    exp.complete_assignment(&assignment, now)?;
                    if rng.random_bool(population.return_probability) {
                        let delay = Exp::new(1.0 / population.mean_return_delay_secs)
                            .expect("positive rate")
                            .sample(&mut rng);
                        q.push(now + secs(delay), Step::Request { worker });
                    }
                    continue;
                };
                let position = order.saturating_sub(1) as usize;
                match plan {
                    Plan::Quit(at, reason) if at == position => {
                        exp.quit_assignment(&assignment, reason, None, now + secs(rng.random_range(10.0..120.0)))?;
                        stats.quits += 1;
                        continue;
                    }
                    Plan::Abandon(at) if at == position => {
                        stats.abandoned += 1;
                        continue;
                    }
                    _ => {}
                }
                let score = workers[worker].score_percent();
                let answer = simulate_answer(score, &question, position, model, &mut rng);
                q.push(
                    now + secs(answer.duration_secs),
                    Step::Submit {
                        worker,
                        assignment,
                        plan,
                        question_id: question.question_id,
                        answer,
                    },
                );
            }
            Step::Submit { worker, assignment, plan, question_id, answer } => {
                match exp.submit_answer(&assignment, &question_id, answer.payload, now) {
                    Ok(_) => {}
                    Err(OrchestratorError::Expired(_)) => {
                        stats.expired_submissions += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
                exp.rate_difficulty(&assignment, &question_id, answer.difficulty, now)?;
                q.push(now + secs(rng.random_range(1.0..5.0)), Step::Serve { worker, assignment, plan });
            }
        }
    }
    stats.finished_at = now;
    Ok(SimulationRun {
        experiment: exp,
        workers,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_models_are_valid() {
        PopulationModel::default().validate().unwrap();
        PopulationModel::default().with_dropout().validate().unwrap();
        for name in ["table28", "perfect", "coin"] {
            AnswerModel::preset(name).unwrap().validate().unwrap();
        }
        assert!(AnswerModel::preset("nope").is_none());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut p = PopulationModel::default();
        p.profession_mix.insert(Profession::Other, 0.5);
        assert!(matches!(p.validate(), Err(SimulationError::Model(_))));
        let a = AnswerModel {
            p_idk: 1.5,
            ..AnswerModel::default()
        };
        assert!(a.validate().is_err());
        let a = AnswerModel {
            duration_sigma: 0.0,
            ..AnswerModel::default()
        };
        assert!(a.validate().is_err());
    }

    #[test]
    fn accuracy_lookup_falls_back_to_lower_rows() {
        let t = AccuracyTable::table28();
        assert_eq!(t.get(100, 1), 0.88);
        assert_eq!(t.get(80, 5), 0.53);
        assert_eq!(t.get(90, 2), 0.85);
        assert_eq!(t.get(40, 4), 0.59);
    }

    #[test]
    fn population_is_deterministic_and_sized() {
        let m = PopulationModel::default();
        assert!(sample_population(&m, 0, 1).unwrap().is_empty());
        let a = sample_population(&m, 50, 9).unwrap();
        assert_eq!(a, sample_population(&m, 50, 9).unwrap());
        assert_ne!(a, sample_population(&m, 50, 10).unwrap());
    }

    #[test]
    fn dropout_probability_grows_with_size() {
        let d = DropoutModel::default();
        assert!(d.probability(10) < d.probability(100));
        assert_eq!(d.probability(10_000), 0.5);
    }

    #[test]
    fn explanation_has_requested_length() {
        assert_eq!(explanation_text(200).chars().count(), 200);
    }
}
