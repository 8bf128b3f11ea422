//! HIT composition, qualification gating and assignment scheduling.
//!
//! [`Experiment`] is a single-writer state machine. Every mutating method
//! validates its input, turns it into an [`Event`], applies the event and
//! appends it to the in-memory log. [`Experiment::replay`] rebuilds the same
//! state from a log, which is how the service recovers after a restart.

pub mod events;
pub mod hits;
pub mod qualification;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::answers::{
    validate_difficulty, Answer, AnswerError, AnswerPayload, AnswerRecord, Dataset, WorkerRecord,
};
use crate::corpus::Corpus;
use crate::questions::{generate_all, Question, QuestionSet};

pub use events::{Event, EventRecord, EventStore, RecoveryReport, StoreError};
pub use hits::{compose_hits, non_adjacent, Hit};
pub use qualification::{QualificationBank, QualificationResult, QualificationTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Distinct workers per question (K).
    pub replication: usize,
    pub hit_size: usize,
    pub max_hits_per_worker: usize,
    /// Correct answers needed out of five.
    pub pass_threshold: usize,
    #[serde(with = "secs")]
    pub hit_timeout: Duration,
    /// Qualification attempts allowed per worker, each on a different test.
    pub max_qualification_attempts: usize,
    /// Recorded with the experiment; no payment is made.
    pub pay_per_microtask: f64,
    /// Open an extra HIT rather than put clashing questions together.
    #[serde(default)]
    pub split_on_conflict: bool,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            replication: 20,
            hit_size: 3,
            max_hits_per_worker: 8,
            pass_threshold: 3,
            hit_timeout: Duration::from_secs(2 * 3600),
            max_qualification_attempts: 1,
            pay_per_microtask: 1.0,
            split_on_conflict: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::Config(m.to_string()));
        if self.replication == 0 {
            return bad("replication must be at least 1");
        }
        if self.hit_size == 0 {
            return bad("hit_size must be at least 1");
        }
        if self.max_hits_per_worker == 0 {
            return bad("max_hits_per_worker must be at least 1");
        }
        if self.max_qualification_attempts == 0 {
            return bad("max_qualification_attempts must be at least 1");
        }
        if self.pass_threshold > 5 {
            return bad("pass_threshold cannot exceed the five test questions");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profession {
    Hobbyist,
    #[serde(alias = "professional_developer")]
    Professional,
    #[serde(alias = "undergraduate_student")]
    Undergraduate,
    #[serde(alias = "graduate_student")]
    Graduate,
    Other,
}

impl Profession {
    pub const ALL: [Profession; 5] = [
        Profession::Hobbyist,
        Profession::Professional,
        Profession::Undergraduate,
        Profession::Graduate,
        Profession::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Profession::Hobbyist => "hobbyist",
            Profession::Professional => "professional",
            Profession::Undergraduate => "undergraduate",
            Profession::Graduate => "graduate",
            Profession::Other => "other",
        }
    }

    pub fn is_student(self) -> bool {
        matches!(self, Profession::Undergraduate | Profession::Graduate)
    }
}

impl fmt::Display for Profession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profession {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "hobbyist" => Ok(Profession::Hobbyist),
            "professional" | "professional_developer" => Ok(Profession::Professional),
            "undergraduate" | "undergraduate_student" => Ok(Profession::Undergraduate),
            "graduate" | "graduate_student" => Ok(Profession::Graduate),
            "other" => Ok(Profession::Other),
            other => Err(format!("unknown profession `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub gender: String,
    pub country: String,
    pub years_of_experience: f64,
    pub profession: Profession,
    pub learned_at: String,
    #[serde(default)]
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuitReason {
    #[serde(rename = "too long")]
    TooLong,
    #[serde(rename = "too difficult")]
    TooDifficult,
    #[serde(rename = "too boring")]
    TooBoring,
    #[serde(rename = "other")]
    Other,
}

impl QuitReason {
    pub const ALL: [QuitReason; 4] = [
        QuitReason::TooLong,
        QuitReason::TooDifficult,
        QuitReason::TooBoring,
        QuitReason::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuitReason::TooLong => "too long",
            QuitReason::TooDifficult => "too difficult",
            QuitReason::TooBoring => "too boring",
            QuitReason::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuitEvent {
    pub hit_id: String,
    pub reason: QuitReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationRecord {
    pub test_id: String,
    pub score: usize,
    pub passed: bool,
}

impl QualificationRecord {
    pub fn score_percent(&self) -> u32 {
        (self.score * 20) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub registered_at: DateTime<Utc>,
    pub demographics: Option<Demographics>,
    pub assigned_test: Option<String>,
    pub qualification_attempts: usize,
    pub qualification: Option<QualificationRecord>,
    pub completed_hit_ids: Vec<String>,
    pub active_assignment: Option<String>,
    pub quit_events: Vec<QuitEvent>,
    /// Cases on which the worker has held any assignment.
    pub cases_taken: BTreeSet<String>,
    #[serde(skip)]
    pub token: Option<String>,
}

impl WorkerProfile {
    pub fn is_qualified(&self) -> bool {
        self.qualification.as_ref().is_some_and(|q| q.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Issued,
    InProgress,
    Submitted,
    Quit,
    Expired,
    Rejected,
}

impl AssignmentState {
    pub fn is_active(self) -> bool {
        matches!(self, AssignmentState::Issued | AssignmentState::InProgress)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub worker_id: String,
    pub hit_id: String,
    pub case_id: String,
    pub state: AssignmentState,
    pub issued_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
    pub completed_at: Option<DateTime<Utc>>,
    pub completion_code: Option<String>,
    /// Questions served so far with the instant each was first served.
    pub served: Vec<(String, DateTime<Utc>)>,
    pub answer_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("question generation failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error("worker {0} is already registered")]
    DuplicateWorker(String),
    #[error("unknown assignment {0}")]
    UnknownAssignment(String),
    #[error("worker {0} has not passed the qualification test")]
    NotQualified(String),
    #[error("worker {0} has no qualification attempts left")]
    AlreadyAttempted(String),
    #[error("worker {0} has reached the HIT limit")]
    Capped(String),
    #[error("out of sequence: {0}")]
    Sequence(String),
    #[error("assignment {0} has expired")]
    Expired(String),
    #[error("incomplete submission: {0}")]
    Incomplete(String),
    #[error("assignment {id} is {state:?}")]
    InvalidState { id: String, state: AssignmentState },
    #[error("invalid answer: {0}")]
    Answer(#[from] AnswerError),
    #[error("difficulty already rated for {0}")]
    AlreadyRated(String),
    #[error("unknown completion code")]
    UnknownCode,
    #[error("completion code already used")]
    CodeAlreadyUsed,
    #[error("cannot replay log: {0}")]
    Replay(String),
}

/// A question as served inside an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedQuestion<'a> {
    pub question: &'a Question,
    pub order_in_hit: u8,
    pub hit_size: usize,
    pub answered: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitProgress {
    pub hit_id: String,
    pub case_id: String,
    pub questions: usize,
    pub submitted: usize,
    pub active: usize,
    pub adjacency_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub replication: usize,
    pub questions: usize,
    pub hits: usize,
    pub workers_registered: usize,
    pub workers_qualified: usize,
    pub assignments_submitted: usize,
    pub assignments_active: usize,
    pub assignments_quit: usize,
    pub assignments_expired: usize,
    pub answers_counted: usize,
    pub answers_target: usize,
    pub complete: bool,
    pub per_hit: Vec<HitProgress>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    seed: u64,
    corpus_checksum: String,
    bank: QualificationBank,
    question_sets: Vec<QuestionSet>,
    question_index: HashMap<String, (usize, usize)>,
    hits: Vec<Hit>,
    hit_index: HashMap<String, usize>,
    hit_submitted: Vec<usize>,
    hit_active: Vec<usize>,
    workers: BTreeMap<String, WorkerProfile>,
    assignments: BTreeMap<String, Assignment>,
    answers: Vec<Answer>,
    answer_index: HashMap<String, usize>,
    codes: HashMap<String, String>,
    validated_codes: BTreeSet<String>,
    rr_cursor: usize,
    log: Vec<EventRecord>,
}

fn digest_hex(input: &str) -> Vec<u8> {
    Sha256::digest(input.as_bytes()).to_vec()
}

impl Experiment {
    /// Generates questions for `corpus`, composes HITs and starts the log.
    pub fn new(
        corpus: &Corpus,
        cfg: ExperimentConfig,
        seed: u64,
        now: DateTime<Utc>,
    ) -> Result<Self, OrchestratorError> {
        let sets = generate_all(corpus)?;
        Self::with_questions(sets, corpus.checksum.clone(), cfg, seed, now)
    }

    pub fn with_questions(
        question_sets: Vec<QuestionSet>,
        corpus_checksum: String,
        cfg: ExperimentConfig,
        seed: u64,
        now: DateTime<Utc>,
    ) -> Result<Self, OrchestratorError> {
        let mut exp = Self::skeleton(question_sets, corpus_checksum.clone(), cfg.clone(), seed)?;
        // The start event configures the skeleton rather than mutating it.
        exp.log.push(EventRecord {
            seq: 1,
            timestamp: now,
            worker_id: None,
            assignment_id: None,
            hit_id: None,
            event: Event::ExperimentStarted {
                corpus_checksum,
                seed,
                config: cfg,
            },
        });
        Ok(exp)
    }

    fn skeleton(
        question_sets: Vec<QuestionSet>,
        corpus_checksum: String,
        cfg: ExperimentConfig,
        seed: u64,
    ) -> Result<Self, OrchestratorError> {
        cfg.validate()?;
        let mut bank = QualificationBank::bundled();
        bank.pass_threshold = cfg.pass_threshold;
        let hits = compose_hits(&question_sets, &cfg, seed)?;
        let question_index = question_sets
            .iter()
            .enumerate()
            .flat_map(|(s, qs)| {
                qs.questions
                    .iter()
                    .enumerate()
                    .map(move |(q, question)| (question.question_id.clone(), (s, q)))
            })
            .collect();
        let hit_index = hits
            .iter()
            .enumerate()
            .map(|(i, h)| (h.hit_id.clone(), i))
            .collect();
        Ok(Experiment {
            hit_submitted: vec![0; hits.len()],
            hit_active: vec![0; hits.len()],
            cfg,
            seed,
            corpus_checksum,
            bank,
            question_sets,
            question_index,
            hits,
            hit_index,
            workers: BTreeMap::new(),
            assignments: BTreeMap::new(),
            answers: Vec::new(),
            answer_index: HashMap::new(),
            codes: HashMap::new(),
            validated_codes: BTreeSet::new(),
            rr_cursor: 0,
            log: Vec::new(),
        })
    }

    /// Rebuilds an experiment from its log. The corpus must be the one the
    /// experiment was started with.
    pub fn replay(corpus: &Corpus, records: &[EventRecord]) -> Result<Self, OrchestratorError> {
        let first = records
            .first()
            .ok_or_else(|| OrchestratorError::Replay("empty log".into()))?;
        let Event::ExperimentStarted {
            corpus_checksum,
            seed,
            config,
        } = &first.event
        else {
            return Err(OrchestratorError::Replay(
                "log does not start with experiment_started".into(),
            ));
        };
        if *corpus_checksum != corpus.checksum {
            return Err(OrchestratorError::Replay(format!(
                "corpus checksum {} does not match the log ({})",
                corpus.checksum, corpus_checksum
            )));
        }
        let sets = generate_all(corpus)?;
        let mut exp = Self::skeleton(sets, corpus_checksum.clone(), config.clone(), *seed)?;
        exp.log.push(first.clone());
        for rec in &records[1..] {
            exp.apply(rec)?;
            exp.log.push(rec.clone());
        }
        Ok(exp)
    }

    // -- accessors --

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn corpus_checksum(&self) -> &str {
        &self.corpus_checksum
    }

    pub fn question_sets(&self) -> &[QuestionSet] {
        &self.question_sets
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.question_index
            .get(question_id)
            .map(|&(s, q)| &self.question_sets[s].questions[q])
    }

    pub fn hits(&self) -> &[Hit] {
        &self.hits
    }

    pub fn hit(&self, hit_id: &str) -> Option<&Hit> {
        self.hit_index.get(hit_id).map(|&i| &self.hits[i])
    }

    pub fn workers(&self) -> &BTreeMap<String, WorkerProfile> {
        &self.workers
    }

    pub fn worker(&self, worker_id: &str) -> Option<&WorkerProfile> {
        self.workers.get(worker_id)
    }

    pub fn worker_by_token(&self, token: &str) -> Option<&WorkerProfile> {
        self.workers
            .values()
            .find(|w| w.token.as_deref() == Some(token))
    }

    pub fn assignments(&self) -> &BTreeMap<String, Assignment> {
        &self.assignments
    }

    pub fn assignment(&self, id: &str) -> Option<&Assignment> {
        self.assignments.get(id)
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn answer(&self, answer_id: &str) -> Option<&Answer> {
        self.answer_index.get(answer_id).map(|&i| &self.answers[i])
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn records_since(&self, count: usize) -> &[EventRecord] {
        &self.log[count.min(self.log.len())..]
    }

    pub fn qualification_bank(&self) -> &QualificationBank {
        &self.bank
    }

    // -- event plumbing --

    fn record(
        &mut self,
        now: DateTime<Utc>,
        worker_id: Option<&str>,
        assignment_id: Option<&str>,
        hit_id: Option<&str>,
        event: Event,
    ) -> Result<(), OrchestratorError> {
        let rec = EventRecord {
            seq: self.log.len() as u64 + 1,
            timestamp: now,
            worker_id: worker_id.map(str::to_string),
            assignment_id: assignment_id.map(str::to_string),
            hit_id: hit_id.map(str::to_string),
            event,
        };
        self.apply(&rec)?;
        self.log.push(rec);
        Ok(())
    }

    fn replay_err(rec: &EventRecord, what: &str) -> OrchestratorError {
        OrchestratorError::Replay(format!("record {}: {what}", rec.seq))
    }

    fn apply(&mut self, rec: &EventRecord) -> Result<(), OrchestratorError> {
        let worker_id = rec.worker_id.clone().unwrap_or_default();
        let assignment_id = rec.assignment_id.clone().unwrap_or_default();
        match &rec.event {
            Event::ExperimentStarted { .. } => {
                return Err(Self::replay_err(rec, "experiment_started may only appear first"));
            }
            Event::WorkerRegistered { token } => {
                if self.workers.contains_key(&worker_id) {
                    return Err(Self::replay_err(rec, "duplicate worker"));
                }
                self.workers.insert(
                    worker_id.clone(),
                    WorkerProfile {
                        worker_id,
                        registered_at: rec.timestamp,
                        demographics: None,
                        assigned_test: None,
                        qualification_attempts: 0,
                        qualification: None,
                        completed_hit_ids: Vec::new(),
                        active_assignment: None,
                        quit_events: Vec::new(),
                        cases_taken: BTreeSet::new(),
                        token: token.clone(),
                    },
                );
            }
            Event::DemographicsRecorded { demographics } => {
                self.worker_mut_for(rec)?.demographics = Some(demographics.clone());
            }
            Event::QualificationAssigned { test_id } => {
                self.worker_mut_for(rec)?.assigned_test = Some(test_id.clone());
            }
            Event::QualificationGraded {
                test_id,
                score,
                passed,
                ..
            } => {
                let w = self.worker_mut_for(rec)?;
                w.qualification_attempts += 1;
                w.assigned_test = None;
                w.qualification = Some(QualificationRecord {
                    test_id: test_id.clone(),
                    score: *score,
                    passed: *passed,
                });
            }
            Event::AssignmentIssued { deadline } => {
                let hit_id = rec.hit_id.clone().unwrap_or_default();
                let &h = self
                    .hit_index
                    .get(&hit_id)
                    .ok_or_else(|| Self::replay_err(rec, "unknown hit"))?;
                let case_id = self.hits[h].case_id.clone();
                let w = self.worker_mut_for(rec)?;
                w.active_assignment = Some(assignment_id.clone());
                w.cases_taken.insert(case_id.clone());
                self.hit_active[h] += 1;
                self.rr_cursor = (h + 1) % self.hits.len();
                self.assignments.insert(
                    assignment_id.clone(),
                    Assignment {
                        assignment_id,
                        worker_id,
                        hit_id,
                        case_id,
                        state: AssignmentState::Issued,
                        issued_at: rec.timestamp,
                        deadline: *deadline,
                        completed_at: None,
                        completion_code: None,
                        served: Vec::new(),
                        answer_ids: Vec::new(),
                    },
                );
            }
            Event::QuestionServed { question_id, .. } => {
                let a = self.assignment_mut_for(rec)?;
                a.served.push((question_id.clone(), rec.timestamp));
                a.state = AssignmentState::InProgress;
            }
            Event::AnswerSubmitted { answer } => {
                let a = self.assignment_mut_for(rec)?;
                a.answer_ids.push(answer.answer_id.clone());
                self.answer_index
                    .insert(answer.answer_id.clone(), self.answers.len());
                self.answers.push(answer.clone());
            }
            Event::DifficultyRated {
                answer_id,
                difficulty,
            } => {
                let &i = self
                    .answer_index
                    .get(answer_id)
                    .ok_or_else(|| Self::replay_err(rec, "unknown answer"))?;
                self.answers[i].difficulty = Some(*difficulty);
            }
            Event::AssignmentCompleted { completion_code } => {
                let a = self.assignment_mut_for(rec)?;
                a.state = AssignmentState::Submitted;
                a.completed_at = Some(rec.timestamp);
                a.completion_code = Some(completion_code.clone());
                let (hit_id, worker_id) = (a.hit_id.clone(), a.worker_id.clone());
                let h = self.hit_index[&hit_id];
                self.hit_active[h] -= 1;
                self.hit_submitted[h] += 1;
                self.codes.insert(completion_code.clone(), assignment_id);
                if let Some(w) = self.workers.get_mut(&worker_id) {
                    w.active_assignment = None;
                    w.completed_hit_ids.push(hit_id);
                }
            }
            Event::AssignmentQuit { reason, .. } => {
                let (hit_id, worker_id) = self.release(rec, AssignmentState::Quit)?;
                if let Some(w) = self.workers.get_mut(&worker_id) {
                    w.quit_events.push(QuitEvent {
                        hit_id,
                        reason: *reason,
                    });
                }
            }
            Event::AssignmentExpired {} => {
                self.release(rec, AssignmentState::Expired)?;
            }
            Event::CodeValidated { code } => {
                self.validated_codes.insert(code.clone());
            }
            Event::AssignmentRejected { .. } => {
                let a = self.assignment_mut_for(rec)?;
                a.state = AssignmentState::Rejected;
                let hit_id = a.hit_id.clone();
                let h = self.hit_index[&hit_id];
                self.hit_submitted[h] -= 1;
            }
        }
        Ok(())
    }

    fn release(
        &mut self,
        rec: &EventRecord,
        state: AssignmentState,
    ) -> Result<(String, String), OrchestratorError> {
        let a = self.assignment_mut_for(rec)?;
        a.state = state;
        let (hit_id, worker_id) = (a.hit_id.clone(), a.worker_id.clone());
        let h = self.hit_index[&hit_id];
        self.hit_active[h] -= 1;
        if let Some(w) = self.workers.get_mut(&worker_id) {
            w.active_assignment = None;
        }
        Ok((hit_id, worker_id))
    }

    fn worker_mut_for(&mut self, rec: &EventRecord) -> Result<&mut WorkerProfile, OrchestratorError> {
        let id = rec.worker_id.as_deref().unwrap_or_default();
        self.workers
            .get_mut(id)
            .ok_or_else(|| Self::replay_err(rec, "unknown worker"))
    }

    fn assignment_mut_for(&mut self, rec: &EventRecord) -> Result<&mut Assignment, OrchestratorError> {
        let id = rec.assignment_id.as_deref().unwrap_or_default();
        self.assignments
            .get_mut(id)
            .ok_or_else(|| Self::replay_err(rec, "unknown assignment"))
    }

    // -- workers and qualification --

    pub fn register_worker(
        &mut self,
        worker_id: &str,
        token: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<(), OrchestratorError> {
        if self.workers.contains_key(worker_id) {
            return Err(OrchestratorError::DuplicateWorker(worker_id.to_string()));
        }
        self.record(now, Some(worker_id), None, None, Event::WorkerRegistered { token })
    }

    pub fn record_demographics(
        &mut self,
        worker_id: &str,
        demographics: Demographics,
        now: DateTime<Utc>,
    ) -> Result<(), OrchestratorError> {
        self.require_worker(worker_id)?;
        self.record(
            now,
            Some(worker_id),
            None,
            None,
            Event::DemographicsRecorded { demographics },
        )
    }

    fn require_worker(&self, worker_id: &str) -> Result<&WorkerProfile, OrchestratorError> {
        self.workers
            .get(worker_id)
            .ok_or_else(|| OrchestratorError::UnknownWorker(worker_id.to_string()))
    }

    /// The test the worker must take, assigning one on first request.
    pub fn qualification_test(
        &mut self,
        worker_id: &str,
        now: DateTime<Utc>,
    ) -> Result<&QualificationTest, OrchestratorError> {
        let w = self.require_worker(worker_id)?;
        let test_id = match &w.assigned_test {
            Some(t) => t.clone(),
            None => {
                if w.qualification_attempts >= self.cfg.max_qualification_attempts {
                    return Err(OrchestratorError::AlreadyAttempted(worker_id.to_string()));
                }
                let taken: BTreeSet<&str> = self
                    .log
                    .iter()
                    .filter(|r| r.worker_id.as_deref() == Some(worker_id))
                    .filter_map(|r| match &r.event {
                        Event::QualificationGraded { test_id, .. } => Some(test_id.as_str()),
                        _ => None,
                    })
                    .collect();
                let fresh: Vec<&QualificationTest> = self
                    .bank
                    .tests
                    .iter()
                    .filter(|t| !taken.contains(t.test_id.as_str()))
                    .collect();
                if fresh.is_empty() {
                    return Err(OrchestratorError::AlreadyAttempted(worker_id.to_string()));
                }
                let pick = digest_hex(&format!("{}:{}:test", self.seed, worker_id))[0] as usize % fresh.len();
                let test_id = fresh[pick].test_id.clone();
                self.record(
                    now,
                    Some(worker_id),
                    None,
                    None,
                    Event::QualificationAssigned {
                        test_id: test_id.clone(),
                    },
                )?;
                test_id
            }
        };
        Ok(self.bank.test(&test_id).expect("assigned tests come from the bank"))
    }

    pub fn grade_qualification(
        &mut self,
        worker_id: &str,
        responses: &[usize],
        now: DateTime<Utc>,
    ) -> Result<QualificationResult, OrchestratorError> {
        let w = self.require_worker(worker_id)?;
        if w.qualification_attempts >= self.cfg.max_qualification_attempts {
            return Err(OrchestratorError::AlreadyAttempted(worker_id.to_string()));
        }
        let test_id = match &w.assigned_test {
            Some(t) => t.clone(),
            None => self.qualification_test(worker_id, now)?.test_id.clone(),
        };
        let test = self.bank.test(&test_id).expect("assigned tests come from the bank");
        let result = self.bank.grade(test, responses);
        self.record(
            now,
            Some(worker_id),
            None,
            None,
            Event::QualificationGraded {
                test_id,
                responses: responses.to_vec(),
                score: result.score,
                passed: result.passed,
            },
        )?;
        Ok(result)
    }

    // -- scheduling --

    fn occupancy(&self, h: usize) -> usize {
        self.hit_submitted[h] + self.hit_active[h]
    }

    /// Expires every active assignment whose deadline has passed.
    pub fn expire_overdue(&mut self, now: DateTime<Utc>) -> Result<Vec<String>, OrchestratorError> {
        let overdue: Vec<(String, String, String)> = self
            .assignments
            .values()
            .filter(|a| a.state.is_active() && now > a.deadline)
            .map(|a| (a.assignment_id.clone(), a.worker_id.clone(), a.hit_id.clone()))
            .collect();
        for (a, w, h) in &overdue {
            self.record(now, Some(w), Some(a), Some(h), Event::AssignmentExpired {})?;
        }
        Ok(overdue.into_iter().map(|(a, _, _)| a).collect())
    }

    /// Issues the least-served eligible HIT to a qualified worker, rotating
    /// among ties. Returns the worker's open assignment if it has one, and
    /// `None` when no HIT is eligible.
    pub fn next_assignment(
        &mut self,
        worker_id: &str,
        now: DateTime<Utc>,
    ) -> Result<Option<Assignment>, OrchestratorError> {
        self.expire_overdue(now)?;
        let w = self.require_worker(worker_id)?;
        if !w.is_qualified() {
            return Err(OrchestratorError::NotQualified(worker_id.to_string()));
        }
        if let Some(active) = &w.active_assignment {
            return Ok(self.assignments.get(active).cloned());
        }
        if w.completed_hit_ids.len() >= self.cfg.max_hits_per_worker {
            return Err(OrchestratorError::Capped(worker_id.to_string()));
        }
        let n = self.hits.len();
        let eligible: Vec<usize> = (0..n)
            .map(|i| (self.rr_cursor + i) % n)
            .filter(|&h| {
                self.occupancy(h) < self.cfg.replication
                    && !w.cases_taken.contains(&self.hits[h].case_id)
            })
            .collect();
        let Some(min) = eligible.iter().map(|&h| self.occupancy(h)).min() else {
            return Ok(None);
        };
        let h = *eligible
            .iter()
            .find(|&&h| self.occupancy(h) == min)
            .expect("min comes from this list");
        let assignment_id = format!("asg-{:06}", self.assignments.len() + 1);
        let hit_id = self.hits[h].hit_id.clone();
        let timeout = chrono::Duration::from_std(self.hits[h].timeout)
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        self.record(
            now,
            Some(worker_id),
            Some(&assignment_id),
            Some(&hit_id),
            Event::AssignmentIssued {
                deadline: now + timeout,
            },
        )?;
        Ok(self.assignments.get(&assignment_id).cloned())
    }

    fn require_assignment(&self, id: &str) -> Result<&Assignment, OrchestratorError> {
        self.assignments
            .get(id)
            .ok_or_else(|| OrchestratorError::UnknownAssignment(id.to_string()))
    }

    /// Checks that the assignment is open, expiring it if the deadline passed.
    fn require_open(&mut self, id: &str, now: DateTime<Utc>) -> Result<Assignment, OrchestratorError> {
        let a = self.require_assignment(id)?.clone();
        if a.state == AssignmentState::Expired {
            return Err(OrchestratorError::Expired(id.to_string()));
        }
        if !a.state.is_active() {
            return Err(OrchestratorError::InvalidState {
                id: id.to_string(),
                state: a.state,
            });
        }
        if now > a.deadline {
            self.record(
                now,
                Some(&a.worker_id),
                Some(id),
                Some(&a.hit_id),
                Event::AssignmentExpired {},
            )?;
            return Err(OrchestratorError::Expired(id.to_string()));
        }
        Ok(a)
    }

    /// Serves the next unanswered question; `None` once all are answered.
    /// Re-serving an open question keeps its original serve time.
    pub fn serve_question(
        &mut self,
        assignment_id: &str,
        now: DateTime<Utc>,
    ) -> Result<Option<ServedQuestion<'_>>, OrchestratorError> {
        let a = self.require_open(assignment_id, now)?;
        let hit = self.hit(&a.hit_id).expect("assignments reference hits").clone();
        let idx = a.answer_ids.len();
        if idx >= hit.question_ids.len() {
            return Ok(None);
        }
        let question_id = hit.question_ids[idx].clone();
        if a.served.len() <= idx {
            self.record(
                now,
                Some(&a.worker_id),
                Some(assignment_id),
                Some(&a.hit_id),
                Event::QuestionServed {
                    question_id: question_id.clone(),
                    order_in_hit: idx as u8 + 1,
                },
            )?;
        }
        Ok(Some(ServedQuestion {
            question: self.question(&question_id).expect("hits reference questions"),
            order_in_hit: idx as u8 + 1,
            hit_size: hit.question_ids.len(),
            answered: idx,
        }))
    }

    pub fn submit_answer(
        &mut self,
        assignment_id: &str,
        question_id: &str,
        payload: AnswerPayload,
        now: DateTime<Utc>,
    ) -> Result<Answer, OrchestratorError> {
        let a = self.require_open(assignment_id, now)?;
        let idx = a.answer_ids.len();
        let hit = self.hit(&a.hit_id).expect("assignments reference hits");
        let expected = hit.question_ids.get(idx).cloned();
        if expected.as_deref() != Some(question_id) {
            return Err(OrchestratorError::Sequence(format!(
                "expected an answer for {}, got {question_id}",
                expected.as_deref().unwrap_or("no further question")
            )));
        }
        let Some((_, served_at)) = a.served.get(idx).cloned() else {
            return Err(OrchestratorError::Sequence(format!("{question_id} has not been served")));
        };
        let payload = payload.normalized()?;
        let question = self.question(question_id).expect("hits reference questions");
        let answer = Answer {
            answer_id: format!("ans-{:06}", self.answers.len() + 1),
            assignment_id: assignment_id.to_string(),
            worker_id: a.worker_id.clone(),
            case_id: question.case_id.clone(),
            question_id: question_id.to_string(),
            hit_id: a.hit_id.clone(),
            order_in_hit: idx as u8 + 1,
            option: payload.option,
            confidence: payload.confidence,
            difficulty: payload.difficulty,
            duration_seconds: ((now - served_at).num_milliseconds().max(0) as f64) / 1000.0,
            explanation: payload.explanation,
            served_at,
            submitted_at: now,
        };
        self.record(
            now,
            Some(&a.worker_id),
            Some(assignment_id),
            Some(&a.hit_id),
            Event::AnswerSubmitted {
                answer: answer.clone(),
            },
        )?;
        Ok(answer)
    }

    pub fn rate_difficulty(
        &mut self,
        assignment_id: &str,
        question_id: &str,
        difficulty: u8,
        now: DateTime<Utc>,
    ) -> Result<(), OrchestratorError> {
        let a = self.require_open(assignment_id, now)?;
        validate_difficulty(difficulty)?;
        let answer = a
            .answer_ids
            .iter()
            .filter_map(|id| self.answer(id))
            .find(|ans| ans.question_id == question_id)
            .ok_or_else(|| {
                OrchestratorError::Sequence(format!("{question_id} has not been answered yet"))
            })?;
        if answer.difficulty.is_some() {
            return Err(OrchestratorError::AlreadyRated(question_id.to_string()));
        }
        let answer_id = answer.answer_id.clone();
        self.record(
            now,
            Some(&a.worker_id),
            Some(assignment_id),
            Some(&a.hit_id),
            Event::DifficultyRated {
                answer_id,
                difficulty,
            },
        )
    }

    /// Submits the assignment and returns its completion code. Repeating the
    /// call after success returns the same code.
    pub fn complete_assignment(
        &mut self,
        assignment_id: &str,
        now: DateTime<Utc>,
    ) -> Result<String, OrchestratorError> {
        if let Some(a) = self.assignments.get(assignment_id) {
            if a.state == AssignmentState::Submitted {
                return Ok(a.completion_code.clone().expect("submitted assignments have codes"));
            }
        }
        let a = self.require_open(assignment_id, now)?;
        let hit = self.hit(&a.hit_id).expect("assignments reference hits");
        if a.answer_ids.len() < hit.question_ids.len() {
            return Err(OrchestratorError::Incomplete(format!(
                "{} of {} questions answered",
                a.answer_ids.len(),
                hit.question_ids.len()
            )));
        }
        if let Some(unrated) = a
            .answer_ids
            .iter()
            .filter_map(|id| self.answer(id))
            .find(|ans| ans.difficulty.is_none())
        {
            return Err(OrchestratorError::Incomplete(format!(
                "difficulty of {} not rated",
                unrated.question_id
            )));
        }
        let code = self.fresh_code(assignment_id);
        self.record(
            now,
            Some(&a.worker_id),
            Some(assignment_id),
            Some(&a.hit_id),
            Event::AssignmentCompleted {
                completion_code: code.clone(),
            },
        )?;
        Ok(code)
    }

    fn fresh_code(&self, assignment_id: &str) -> String {
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        (0u32..)
            .map(|salt| {
                digest_hex(&format!("{}:{assignment_id}:{salt}", self.seed))
                    .iter()
                    .take(10)
                    .map(|b| ALPHABET[*b as usize % ALPHABET.len()] as char)
                    .collect::<String>()
            })
            .find(|code| !self.codes.contains_key(code))
            .expect("a free code exists")
    }

    pub fn quit_assignment(
        &mut self,
        assignment_id: &str,
        reason: QuitReason,
        comment: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<(), OrchestratorError> {
        let a = self.require_open(assignment_id, now)?;
        self.record(
            now,
            Some(&a.worker_id),
            Some(assignment_id),
            Some(&a.hit_id),
            Event::AssignmentQuit { reason, comment },
        )
    }

    /// Accepts each issued code exactly once. Returns the assignment id.
    pub fn validate_code(&mut self, code: &str, now: DateTime<Utc>) -> Result<String, OrchestratorError> {
        let code = code.trim().to_ascii_uppercase();
        let assignment_id = self
            .codes
            .get(&code)
            .cloned()
            .ok_or(OrchestratorError::UnknownCode)?;
        if self.validated_codes.contains(&code) {
            return Err(OrchestratorError::CodeAlreadyUsed);
        }
        let a = self.require_assignment(&assignment_id)?.clone();
        self.record(
            now,
            Some(&a.worker_id),
            Some(&assignment_id),
            Some(&a.hit_id),
            Event::CodeValidated { code },
        )?;
        Ok(assignment_id)
    }

    /// Rejects a submitted assignment; its slot reopens for another worker.
    pub fn reject_assignment(
        &mut self,
        assignment_id: &str,
        reason: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<(), OrchestratorError> {
        let a = self.require_assignment(assignment_id)?.clone();
        if a.state != AssignmentState::Submitted {
            return Err(OrchestratorError::InvalidState {
                id: assignment_id.to_string(),
                state: a.state,
            });
        }
        self.record(
            now,
            Some(&a.worker_id),
            Some(assignment_id),
            Some(&a.hit_id),
            Event::AssignmentRejected { reason },
        )
    }

    // -- views --

    /// Answers from submitted assignments, per question.
    pub fn answer_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self
            .question_index
            .keys()
            .map(|q| (q.clone(), 0))
            .collect();
        for ans in self.counted_answers() {
            *counts.entry(ans.question_id.clone()).or_default() += 1;
        }
        counts
    }

    fn counted_answers(&self) -> impl Iterator<Item = &Answer> {
        self.answers.iter().filter(|ans| {
            self.assignments
                .get(&ans.assignment_id)
                .is_some_and(|a| a.state == AssignmentState::Submitted)
        })
    }

    pub fn is_quiescent(&self) -> bool {
        self.hit_submitted.iter().all(|&s| s >= self.cfg.replication)
            && self.hit_active.iter().all(|&a| a == 0)
    }

    pub fn progress(&self) -> Progress {
        let count_state = |s: AssignmentState| self.assignments.values().filter(|a| a.state == s).count();
        let questions = self.question_index.len();
        Progress {
            replication: self.cfg.replication,
            questions,
            hits: self.hits.len(),
            workers_registered: self.workers.len(),
            workers_qualified: self.workers.values().filter(|w| w.is_qualified()).count(),
            assignments_submitted: count_state(AssignmentState::Submitted),
            assignments_active: self.hit_active.iter().sum(),
            assignments_quit: count_state(AssignmentState::Quit),
            assignments_expired: count_state(AssignmentState::Expired),
            answers_counted: self.counted_answers().count(),
            answers_target: questions * self.cfg.replication,
            complete: self.is_quiescent(),
            per_hit: self
                .hits
                .iter()
                .enumerate()
                .map(|(i, h)| HitProgress {
                    hit_id: h.hit_id.clone(),
                    case_id: h.case_id.clone(),
                    questions: h.question_ids.len(),
                    submitted: self.hit_submitted[i],
                    active: self.hit_active[i],
                    adjacency_violations: h.adjacency_violations,
                })
                .collect(),
        }
    }

    /// Export rows. Only answers of submitted assignments count unless
    /// `include_uncounted` is set.
    pub fn answer_records(&self, include_uncounted: bool) -> Vec<AnswerRecord> {
        let rows: Vec<&Answer> = if include_uncounted {
            self.answers.iter().collect()
        } else {
            self.counted_answers().collect()
        };
        rows.into_iter()
            .map(|ans| {
                let covers = self
                    .question(&ans.question_id)
                    .is_some_and(|q| q.covers_fault);
                ans.to_record(covers)
            })
            .collect()
    }

    /// Analysis attributes of every worker who answered the qualification test.
    pub fn worker_records(&self) -> BTreeMap<String, WorkerRecord> {
        self.workers
            .values()
            .filter_map(|w| {
                let q = w.qualification.as_ref()?;
                let d = w.demographics.as_ref();
                Some((
                    w.worker_id.clone(),
                    WorkerRecord {
                        worker_id: w.worker_id.clone(),
                        profession: d.map(|d| d.profession).unwrap_or(Profession::Other),
                        score_percent: q.score_percent(),
                        years_of_experience: d.map(|d| d.years_of_experience).unwrap_or(0.0),
                        hits_submitted: self
                            .assignments
                            .values()
                            .filter(|a| a.worker_id == w.worker_id && a.state == AssignmentState::Submitted)
                            .count(),
                        quits: w.quit_events.len(),
                    },
                ))
            })
            .collect()
    }

    pub fn dataset(&self) -> Dataset {
        Dataset {
            question_sets: self.question_sets.clone(),
            answers: self.answer_records(false),
            workers: self.worker_records(),
        }
    }
}

#[cfg(test)]
mod tests;
