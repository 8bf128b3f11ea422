use std::path::Path;
use std::sync::Arc;

use crowdlocate_core::corpus::Corpus;
use crowdlocate_core::orchestrator::{EventStore, Experiment, ExperimentConfig, OrchestratorError, RecoveryReport};
use parking_lot::Mutex;
use rand::Rng;

use crate::clock::Clock;
use crate::error::ApiError;

struct Inner {
    exp: Experiment,
    store: Option<EventStore>,
    /// Number of log records already written to the store.
    persisted: usize,
}

/// A running experiment shared by all request handlers.
///
/// Every mutation goes through [`Service::mutate`], which appends the events
/// it produced to the store before the response is sent. A crash therefore
/// loses at most the request that was in flight.
pub struct Service {
    inner: Mutex<Inner>,
    corpus: Corpus,
    clock: Arc<dyn Clock>,
    admin_token: Option<String>,
    recovery: Option<RecoveryReport>,
}

impl Service {
    /// An experiment kept only in memory.
    pub fn in_memory(
        corpus: Corpus,
        cfg: ExperimentConfig,
        seed: u64,
        clock: Arc<dyn Clock>,
        admin_token: Option<String>,
    ) -> Result<Self, ApiError> {
        let exp = Experiment::new(&corpus, cfg, seed, clock.now())?;
        Ok(Service {
            inner: Mutex::new(Inner {
                exp,
                store: None,
                persisted: 0,
            }),
            corpus,
            clock,
            admin_token,
            recovery: None,
        })
    }

    /// Opens the event log in `dir`. An existing log is replayed and `cfg`
    /// and `seed` are ignored in favour of the values it was started with.
    pub fn open(
        dir: impl AsRef<Path>,
        corpus: Corpus,
        cfg: ExperimentConfig,
        seed: u64,
        clock: Arc<dyn Clock>,
        admin_token: Option<String>,
    ) -> Result<Self, ApiError> {
        let (mut store, records, report) = EventStore::open(dir)?;
        if let Some(line) = report.corrupt_line {
            log::warn!(
                "event log truncated at line {line}: {}",
                report.message.as_deref().unwrap_or("unreadable record")
            );
        }
        let (exp, persisted) = if records.is_empty() {
            let exp = Experiment::new(&corpus, cfg, seed, clock.now())?;
            store.append(exp.records())?;
            let n = exp.records().len();
            (exp, n)
        } else {
            let n = records.len();
            (Experiment::replay(&corpus, &records)?, n)
        };
        Ok(Service {
            inner: Mutex::new(Inner {
                exp,
                store: Some(store),
                persisted,
            }),
            corpus,
            clock,
            admin_token,
            recovery: Some(report),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.clock.now()
    }

    pub fn recovery(&self) -> Option<&RecoveryReport> {
        self.recovery.as_ref()
    }

    pub fn admin_token(&self) -> Option<&str> {
        self.admin_token.as_deref()
    }

    /// Read-only access to the experiment.
    pub fn read<T>(&self, f: impl FnOnce(&Experiment) -> T) -> T {
        f(&self.inner.lock().exp)
    }

    /// Runs `f` and persists whatever it logged, even when `f` fails: a
    /// failed call may still have expired an overdue assignment.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Experiment) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut guard = self.inner.lock();
        let inner = &mut *guard;
        let result = f(&mut inner.exp);
        let fresh = inner.exp.records_since(inner.persisted);
        if !fresh.is_empty() {
            if let Some(store) = inner.store.as_mut() {
                store.append(fresh)?;
            }
            inner.persisted += fresh.len();
        }
        result
    }

    /// Registers a new worker and returns `(worker_id, session_token)`.
    pub fn new_session(&self) -> Result<(String, String), ApiError> {
        let token = fresh_token();
        let now = self.now();
        self.mutate(|exp| {
            let worker_id = format!("w-{:06}", exp.workers().len() + 1);
            exp.register_worker(&worker_id, Some(token.clone()), now)?;
            Ok((worker_id, token.clone()))
        })
    }

    pub fn worker_for_token(&self, token: &str) -> Result<String, ApiError> {
        self.read(|exp| exp.worker_by_token(token).map(|w| w.worker_id.clone()))
            .ok_or(ApiError::Unauthorized)
    }

    /// The owner of `assignment_id`, checked against the caller.
    pub fn check_owner(&self, worker_id: &str, assignment_id: &str) -> Result<(), ApiError> {
        let owner = self.read(|exp| exp.assignment(assignment_id).map(|a| a.worker_id.clone()));
        match owner {
            None => Err(OrchestratorError::UnknownAssignment(assignment_id.to_string()).into()),
            Some(o) if o == worker_id => Ok(()),
            Some(_) => Err(ApiError::Forbidden(format!(
                "assignment {assignment_id} belongs to another worker"
            ))),
        }
    }
}

/// 128 random bits as lowercase hex.
fn fresh_token() -> String {
    let bits: u128 = rand::rng().random();
    format!("{bits:032x}")
}
