//! Answers to microtasks and the tabular dataset exported from an experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::orchestrator::Profession;
use crate::questions::{Question, QuestionSet};

/// Exact header of the answers CSV.
pub const ANSWERS_HEADER: &str = "answer_id,worker_id,case_id,question_id,hit_id,order_in_hit,option,confidence,difficulty,duration_seconds,explanation_chars,correct,submitted_at_iso8601";

pub const WORKERS_HEADER: &str =
    "worker_id,profession,score_percent,years_of_experience,hits_submitted,quits";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnswerOption {
    Yes,
    No,
    Idk,
}

impl AnswerOption {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerOption::Yes => "YES",
            AnswerOption::No => "NO",
            AnswerOption::Idk => "IDK",
        }
    }

    /// UI label shown next to the option.
    pub fn label(self) -> &'static str {
        match self {
            AnswerOption::Yes => "Yes, there is an issue",
            AnswerOption::No => "No, there is not an issue",
            AnswerOption::Idk => "I don't know",
        }
    }
}

impl fmt::Display for AnswerOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerOption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "YES" => Ok(AnswerOption::Yes),
            "NO" => Ok(AnswerOption::No),
            "IDK" | "I DON'T KNOW" => Ok(AnswerOption::Idk),
            other => Err(format!("unknown answer option `{other}`")),
        }
    }
}

/// `correct` is a pure function of the option and the question's flag.
pub fn is_correct(option: AnswerOption, covers_fault: bool) -> bool {
    matches!(
        (option, covers_fault),
        (AnswerOption::Yes, true) | (AnswerOption::No, false)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("explanation must not be empty")]
    EmptyExplanation,
    #[error("confidence {0} is outside 1..=5")]
    Confidence(u8),
    #[error("difficulty {0} is outside 1..=5")]
    Difficulty(u8),
}

/// What a worker sends for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPayload {
    pub option: AnswerOption,
    #[serde(default)]
    pub confidence: u8,
    pub explanation: String,
    /// Usually rated in a follow-up call; accepted inline for scripted clients.
    #[serde(default)]
    pub difficulty: Option<u8>,
}

impl AnswerPayload {
    /// Validates and normalizes: IDK forces confidence 0.
    pub fn normalized(mut self) -> Result<Self, AnswerError> {
        if self.explanation.trim().is_empty() {
            return Err(AnswerError::EmptyExplanation);
        }
        if self.option == AnswerOption::Idk {
            self.confidence = 0;
        } else if !(1..=5).contains(&self.confidence) {
            return Err(AnswerError::Confidence(self.confidence));
        }
        if let Some(d) = self.difficulty {
            validate_difficulty(d)?;
        }
        Ok(self)
    }
}

pub fn validate_difficulty(d: u8) -> Result<u8, AnswerError> {
    if (1..=5).contains(&d) {
        Ok(d)
    } else {
        Err(AnswerError::Difficulty(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub answer_id: String,
    pub assignment_id: String,
    pub worker_id: String,
    pub case_id: String,
    pub question_id: String,
    pub hit_id: String,
    pub order_in_hit: u8,
    pub option: AnswerOption,
    pub confidence: u8,
    pub difficulty: Option<u8>,
    pub duration_seconds: f64,
    pub explanation: String,
    pub served_at: DateTime<Utc>,
    pub submitted_at: DateTime<Utc>,
}

impl Answer {
    pub fn explanation_chars(&self) -> usize {
        self.explanation.trim().chars().count()
    }

    pub fn to_record(&self, covers_fault: bool) -> AnswerRecord {
        AnswerRecord {
            answer_id: self.answer_id.clone(),
            worker_id: self.worker_id.clone(),
            case_id: self.case_id.clone(),
            question_id: self.question_id.clone(),
            hit_id: self.hit_id.clone(),
            order_in_hit: self.order_in_hit,
            option: self.option,
            confidence: self.confidence,
            difficulty: self.difficulty,
            duration_seconds: self.duration_seconds,
            explanation_chars: self.explanation_chars(),
            correct: is_correct(self.option, covers_fault),
            submitted_at: self.submitted_at,
        }
    }
}

/// One row of the exported answers table. All analyses run on these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer_id: String,
    pub worker_id: String,
    pub case_id: String,
    pub question_id: String,
    pub hit_id: String,
    pub order_in_hit: u8,
    pub option: AnswerOption,
    pub confidence: u8,
    pub difficulty: Option<u8>,
    #[serde(serialize_with = "ser_seconds")]
    pub duration_seconds: f64,
    pub explanation_chars: usize,
    pub correct: bool,
    #[serde(
        rename = "submitted_at_iso8601",
        serialize_with = "ser_time",
        deserialize_with = "de_time"
    )]
    pub submitted_at: DateTime<Utc>,
}

fn ser_seconds<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:.3}"))
}

fn ser_time<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_time(t))
}

fn de_time<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let text = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(serde::de::Error::custom)
}

pub fn format_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Worker attributes used by the analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: String,
    pub profession: Profession,
    /// Qualification score in percent (0, 20, ... 100).
    pub score_percent: u32,
    pub years_of_experience: f64,
    #[serde(default)]
    pub hits_submitted: usize,
    #[serde(default)]
    pub quits: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header in {file}: {found}")]
    Header { file: String, found: String },
}

/// Everything the analyses need: questions with ground truth, answers, workers.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub question_sets: Vec<QuestionSet>,
    pub answers: Vec<AnswerRecord>,
    pub workers: BTreeMap<String, WorkerRecord>,
}

impl Dataset {
    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.question_sets.iter().flat_map(|qs| qs.questions.iter())
    }

    pub fn question_count(&self) -> usize {
        self.question_sets.iter().map(|qs| qs.questions.len()).sum()
    }

    pub fn with_answers(&self, answers: Vec<AnswerRecord>) -> Dataset {
        Dataset {
            question_sets: self.question_sets.clone(),
            answers,
            workers: self.workers.clone(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("answers.csv"), answers_csv(&self.answers)?)?;
        fs::write(dir.join("workers.csv"), workers_csv(self.workers.values())?)?;
        Ok(())
    }

    /// Loads `answers.csv` and `workers.csv` from `dir`.
    pub fn load(dir: impl AsRef<Path>, question_sets: Vec<QuestionSet>) -> Result<Self, DatasetError> {
        let dir = dir.as_ref();
        let answers = read_answers(File::open(dir.join("answers.csv"))?)?;
        let workers = read_workers(File::open(dir.join("workers.csv"))?)?;
        Ok(Dataset {
            question_sets,
            answers,
            workers: workers.into_iter().map(|w| (w.worker_id.clone(), w)).collect(),
        })
    }
}

pub fn answers_csv(records: &[AnswerRecord]) -> Result<String, DatasetError> {
    let mut out = String::from(ANSWERS_HEADER);
    out.push('\n');
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in records {
        writer.serialize(r)?;
    }
    let body = writer.into_inner().map_err(|e| e.into_error())?;
    out.push_str(&String::from_utf8_lossy(&body));
    Ok(out)
}

pub fn workers_csv<'a>(
    workers: impl IntoIterator<Item = &'a WorkerRecord>,
) -> Result<String, DatasetError> {
    let mut out = String::from(WORKERS_HEADER);
    out.push('\n');
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for w in workers {
        writer.serialize(w)?;
    }
    let body = writer.into_inner().map_err(|e| e.into_error())?;
    out.push_str(&String::from_utf8_lossy(&body));
    Ok(out)
}

fn check_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &str,
    file: &str,
) -> Result<(), DatasetError> {
    let found = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(DatasetError::Header {
            file: file.to_string(),
            found,
        });
    }
    Ok(())
}

pub fn read_answers<R: std::io::Read>(input: R) -> Result<Vec<AnswerRecord>, DatasetError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, ANSWERS_HEADER, "answers.csv")?;
    reader
        .deserialize()
        .map(|r| r.map_err(DatasetError::from))
        .collect()
}

pub fn read_workers<R: std::io::Read>(input: R) -> Result<Vec<WorkerRecord>, DatasetError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, WORKERS_HEADER, "workers.csv")?;
    reader
        .deserialize()
        .map(|r| r.map_err(DatasetError::from))
        .collect()
}
