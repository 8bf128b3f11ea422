//! Append-only event records and their JSON-lines store.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Demographics, ExperimentConfig, QuitReason};
use crate::answers::Answer;

/// Every state change of an experiment. Replaying the sequence rebuilds the
/// state exactly, so anything random (test choice, codes, tokens) is stored
/// in the event rather than recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    ExperimentStarted {
        corpus_checksum: String,
        seed: u64,
        config: ExperimentConfig,
    },
    WorkerRegistered {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    DemographicsRecorded {
        demographics: Demographics,
    },
    QualificationAssigned {
        test_id: String,
    },
    QualificationGraded {
        test_id: String,
        responses: Vec<usize>,
        score: usize,
        passed: bool,
    },
    AssignmentIssued {
        deadline: DateTime<Utc>,
    },
    QuestionServed {
        question_id: String,
        order_in_hit: u8,
    },
    AnswerSubmitted {
        answer: Answer,
    },
    DifficultyRated {
        answer_id: String,
        difficulty: u8,
    },
    AssignmentCompleted {
        completion_code: String,
    },
    AssignmentQuit {
        reason: QuitReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comment: Option<String>,
    },
    AssignmentExpired {},
    CodeValidated {
        code: String,
    },
    AssignmentRejected {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl Event {
    pub fn type_name(&self) -> &'static str {
        match self {
            Event::ExperimentStarted { .. } => "experiment_started",
            Event::WorkerRegistered { .. } => "worker_registered",
            Event::DemographicsRecorded { .. } => "demographics_recorded",
            Event::QualificationAssigned { .. } => "qualification_assigned",
            Event::QualificationGraded { .. } => "qualification_graded",
            Event::AssignmentIssued { .. } => "assignment_issued",
            Event::QuestionServed { .. } => "question_served",
            Event::AnswerSubmitted { .. } => "answer_submitted",
            Event::DifficultyRated { .. } => "difficulty_rated",
            Event::AssignmentCompleted { .. } => "assignment_completed",
            Event::AssignmentQuit { .. } => "assignment_quit",
            Event::AssignmentExpired {} => "assignment_expired",
            Event::CodeValidated { .. } => "code_validated",
            Event::AssignmentRejected { .. } => "assignment_rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_id: Option<String>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event store i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode event: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Outcome of reading a log: how much of it was usable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryReport {
    pub valid_records: usize,
    /// 1-based line number of the first unusable record, if any.
    pub corrupt_line: Option<usize>,
    pub message: Option<String>,
}

/// Parses JSON lines, stopping at the first malformed or out-of-sequence record.
pub fn parse_log(text: &str) -> (Vec<EventRecord>, RecoveryReport) {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let problem = match serde_json::from_str::<EventRecord>(line) {
            Ok(rec) if rec.seq == records.len() as u64 + 1 => {
                records.push(rec);
                continue;
            }
            Ok(rec) => format!("expected seq {}, found {}", records.len() + 1, rec.seq),
            Err(e) => e.to_string(),
        };
        let report = RecoveryReport {
            valid_records: records.len(),
            corrupt_line: Some(i + 1),
            message: Some(problem),
        };
        return (records, report);
    }
    let report = RecoveryReport {
        valid_records: records.len(),
        corrupt_line: None,
        message: None,
    };
    (records, report)
}

pub fn to_jsonl(records: &[EventRecord]) -> Result<String, StoreError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// `events.jsonl` inside a directory. On open, a corrupt tail is cut off so
/// later appends continue from the last good record.
pub struct EventStore {
    path: PathBuf,
    file: File,
}

impl EventStore {
    pub const FILE_NAME: &'static str = "events.jsonl";

    pub fn open(dir: impl AsRef<Path>) -> Result<(Self, Vec<EventRecord>, RecoveryReport), StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE_NAME);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let (records, report) = parse_log(&text);
        if report.corrupt_line.is_some() {
            log::warn!(
                "event log {}: recovery stopped at line {:?}: {}",
                path.display(),
                report.corrupt_line,
                report.message.as_deref().unwrap_or("")
            );
            fs::write(&path, to_jsonl(&records)?)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((EventStore { path, file }, records, report))
    }

    pub fn append(&mut self, records: &[EventRecord]) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        self.file.write_all(to_jsonl(records)?.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
