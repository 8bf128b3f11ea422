//! Python bindings. Results come back as plain Python values or thin
//! wrapper classes; structured reports are also available as JSON text.

use std::path::PathBuf;

use chrono::Utc;
use crowdlocate_core::aggregation::{
    aggregate, sweep_csv, threshold_sweep, AggregationConfig, AggregationReport, GroundTruth, LineScope, Mechanism,
};
use crowdlocate_core::answers::{answers_csv, workers_csv, AnswerOption, AnswerPayload, Dataset as CoreDataset};
use crowdlocate_core::corpus::{load_corpus, Corpus as CoreCorpus};
use crowdlocate_core::filters::{
    apply_filter, builtin, builtin_filters as core_builtins, subcrowd_report, subcrowd_table, FilterContext,
    FilterSpec, SUMMARY_ROWS,
};
use crowdlocate_core::orchestrator::{Demographics, Experiment as CoreExperiment, ExperimentConfig, Profession};
use crowdlocate_core::questions::{generate_all, Question as CoreQuestion};
use crowdlocate_core::simulator::{run_experiment, AnswerModel, PopulationModel};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(crowdlocate, CrowdlocateError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    CrowdlocateError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, skip_from_py_object, module = "crowdlocate")]
#[derive(Clone)]
pub struct Corpus {
    inner: CoreCorpus,
}

#[pymethods]
impl Corpus {
    /// The bundled eight-case reference corpus.
    #[staticmethod]
    fn reference() -> Self {
        Corpus {
            inner: CoreCorpus::reference(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Corpus {
            inner: load_corpus(path).map_err(err)?,
        })
    }

    #[getter]
    fn case_ids(&self) -> Vec<String> {
        self.inner.cases.iter().map(|c| c.case_id.clone()).collect()
    }

    #[getter]
    fn total_loc(&self) -> usize {
        self.inner.total_loc()
    }

    #[getter]
    fn checksum(&self) -> String {
        self.inner.checksum.clone()
    }

    /// Generated questions of every case, in case order.
    fn questions(&self) -> PyResult<Vec<Question>> {
        Ok(generate_all(&self.inner)
            .map_err(err)?
            .into_iter()
            .flat_map(|qs| qs.questions)
            .map(|inner| Question { inner })
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.cases.len()
    }

    fn __repr__(&self) -> String {
        format!("Corpus(cases={}, loc={})", self.inner.cases.len(), self.inner.total_loc())
    }
}

fn corpus_or_reference(corpus: Option<&Corpus>) -> CoreCorpus {
    corpus.map_or_else(CoreCorpus::reference, |c| c.inner.clone())
}

#[pyclass(frozen, skip_from_py_object, module = "crowdlocate")]
#[derive(Clone)]
pub struct Question {
    inner: CoreQuestion,
}

#[pymethods]
impl Question {
    #[getter]
    fn question_id(&self) -> &str {
        &self.inner.question_id
    }

    #[getter]
    fn case_id(&self) -> &str {
        &self.inner.case_id
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn text(&self) -> &str {
        &self.inner.text
    }

    #[getter]
    fn covered_lines(&self) -> Vec<u32> {
        self.inner.covered_lines.iter().copied().collect()
    }

    #[getter]
    fn covers_fault(&self) -> bool {
        self.inner.covers_fault
    }

    fn __repr__(&self) -> String {
        format!("Question({}, {:?})", self.inner.question_id, self.inner.text)
    }
}

fn config(mechanism: &str, n: Option<usize>) -> PyResult<AggregationConfig> {
    let m: Mechanism = mechanism.parse().map_err(value_err)?;
    Ok(n.map_or_else(|| AggregationConfig::preferred(m), |n| AggregationConfig::new(m, n)))
}

fn filter_spec(text: &str) -> PyResult<FilterSpec> {
    match builtin(text) {
        Some(b) => b.spec().map_err(value_err),
        None => FilterSpec::parse(text).map_err(value_err),
    }
}

/// Answers and workers of one experiment, with the questions they refer to.
#[pyclass(frozen, module = "crowdlocate")]
pub struct Dataset {
    inner: CoreDataset,
    truth: GroundTruth,
}

impl Dataset {
    fn new(corpus: &CoreCorpus, inner: CoreDataset) -> PyResult<Self> {
        let truth = GroundTruth::new(corpus, &inner.question_sets).map_err(err)?;
        Ok(Dataset { inner, truth })
    }
}

#[pymethods]
impl Dataset {
    /// Reads `answers.csv` and `workers.csv` from `path`.
    #[staticmethod]
    #[pyo3(signature = (path, corpus=None))]
    fn load(path: PathBuf, corpus: Option<&Corpus>) -> PyResult<Self> {
        let corpus = corpus_or_reference(corpus);
        let sets = generate_all(&corpus).map_err(err)?;
        Dataset::new(&corpus, CoreDataset::load(path, sets).map_err(err)?)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn answer_count(&self) -> usize {
        self.inner.answers.len()
    }

    #[getter]
    fn worker_count(&self) -> usize {
        self.inner.workers.len()
    }

    fn answers_csv(&self) -> PyResult<String> {
        answers_csv(&self.inner.answers).map_err(err)
    }

    fn workers_csv(&self) -> PyResult<String> {
        workers_csv(self.inner.workers.values()).map_err(err)
    }

    /// Aggregates the answers, optionally restricted by a filter expression
    /// or builtin filter name and to the first `limit` answers per question.
    #[pyo3(signature = (mechanism="AM3", n=None, filter=None, limit=None, all_cases=false))]
    fn aggregate(
        &self,
        mechanism: &str,
        n: Option<usize>,
        filter: Option<&str>,
        limit: Option<usize>,
        all_cases: bool,
    ) -> PyResult<Report> {
        let cfg = config(mechanism, n)?;
        let answers = match filter {
            Some(f) => apply_filter(&FilterContext::new(&self.inner), &filter_spec(f)?),
            None => self.inner.answers.clone(),
        };
        let scope = if all_cases {
            LineScope::AllCases
        } else {
            LineScope::LocatedCases
        };
        let inner = aggregate(&self.truth, &answers, cfg, limit, scope).map_err(value_err)?;
        Ok(Report { inner })
    }

    /// Threshold sweep as CSV text.
    #[pyo3(signature = (mechanism="AM2"))]
    fn sweep(&self, mechanism: &str) -> PyResult<String> {
        let m: Mechanism = mechanism.parse().map_err(value_err)?;
        Ok(sweep_csv(&threshold_sweep(&self.truth, &self.inner.answers, m).map_err(value_err)?))
    }

    /// The standard subcrowd comparison as CSV text.
    #[pyo3(signature = (mechanism="AM3", n=None))]
    fn subcrowd_summary(&self, mechanism: &str, n: Option<usize>) -> PyResult<String> {
        let cfg = config(mechanism, n)?;
        let ctx = FilterContext::new(&self.inner);
        let rows = SUMMARY_ROWS
            .iter()
            .map(|name| {
                let f = builtin(name).expect("summary rows are builtins");
                let spec = f.spec().map_err(value_err)?;
                subcrowd_report(&ctx, &self.truth, f.label, &spec, cfg).map_err(value_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(subcrowd_table(&rows))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(answers={}, workers={})",
            self.inner.answers.len(),
            self.inner.workers.len()
        )
    }
}

#[pyclass(frozen, module = "crowdlocate")]
pub struct Report {
    inner: AggregationReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn tp(&self) -> usize {
        self.inner.overall().tp
    }

    #[getter]
    fn fp(&self) -> usize {
        self.inner.overall().fp
    }

    #[getter]
    #[pyo3(name = "fn_")]
    fn false_negatives(&self) -> usize {
        self.inner.overall().fn_
    }

    #[getter]
    fn tn(&self) -> usize {
        self.inner.overall().tn
    }

    #[getter]
    fn faults_located(&self) -> usize {
        self.inner.faults_located()
    }

    #[getter]
    fn precision(&self) -> Option<f64> {
        self.inner.classification.micro_precision()
    }

    #[getter]
    fn recall(&self) -> Option<f64> {
        self.inner.classification.micro_recall()
    }

    #[getter]
    fn predicted(&self) -> Vec<String> {
        self.inner.classification.predicted().into_iter().map(str::to_string).collect()
    }

    #[getter]
    fn lines_to_inspect(&self) -> usize {
        self.inner.lines.lines_to_inspect()
    }

    fn render(&self) -> String {
        self.inner.render_text()
    }

    fn outcomes_csv(&self) -> String {
        self.inner.outcomes_csv()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.overall();
        format!(
            "Report({} tp={} fp={} fn={} tn={} located={})",
            self.inner.config,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            self.inner.faults_located()
        )
    }
}

/// Runs a simulated crowd until every question has `k` answers.
#[pyfunction]
#[pyo3(signature = (k=20, seed=0, preset="table28", dropout=false, corpus=None))]
fn simulate(k: usize, seed: u64, preset: &str, dropout: bool, corpus: Option<&Corpus>) -> PyResult<Dataset> {
    let corpus = corpus_or_reference(corpus);
    let model = AnswerModel::preset(preset)
        .ok_or_else(|| value_err(format!("unknown preset `{preset}` (table28, perfect or coin)")))?;
    let population = if dropout {
        PopulationModel::default().with_dropout()
    } else {
        PopulationModel::default()
    };
    let cfg = ExperimentConfig {
        replication: k,
        ..ExperimentConfig::default()
    };
    let run = run_experiment(&corpus, cfg, &population, &model, seed).map_err(err)?;
    Dataset::new(&corpus, run.dataset())
}

/// Normalizes a filter expression or builtin name to its canonical text.
#[pyfunction]
fn parse_filter(text: &str) -> PyResult<String> {
    Ok(filter_spec(text)?.to_string())
}

/// `(name, label, expression)` for every builtin filter.
#[pyfunction]
fn builtin_filters() -> Vec<(String, String, String)> {
    core_builtins()
        .iter()
        .map(|f| (f.name.to_string(), f.label.to_string(), f.expr.to_string()))
        .collect()
}

/// A live experiment driven from Python. Times are taken from the system
/// clock.
#[pyclass(module = "crowdlocate")]
pub struct Experiment {
    inner: CoreExperiment,
    corpus: CoreCorpus,
}

#[pymethods]
impl Experiment {
    #[new]
    #[pyo3(signature = (k=20, seed=0, corpus=None))]
    fn new(k: usize, seed: u64, corpus: Option<&Corpus>) -> PyResult<Self> {
        let corpus = corpus_or_reference(corpus);
        let cfg = ExperimentConfig {
            replication: k,
            ..ExperimentConfig::default()
        };
        let inner = CoreExperiment::new(&corpus, cfg, seed, Utc::now()).map_err(err)?;
        Ok(Experiment { inner, corpus })
    }

    #[getter]
    fn hit_count(&self) -> usize {
        self.inner.hits().len()
    }

    fn register_worker(&mut self, worker_id: &str) -> PyResult<()> {
        self.inner.register_worker(worker_id, None, Utc::now()).map_err(err)
    }

    #[pyo3(signature = (worker_id, profession, years_of_experience, age=30, gender="unspecified", country="unspecified"))]
    fn record_demographics(
        &mut self,
        worker_id: &str,
        profession: &str,
        years_of_experience: f64,
        age: u32,
        gender: &str,
        country: &str,
    ) -> PyResult<()> {
        let profession: Profession = profession.parse().map_err(value_err)?;
        let d = Demographics {
            age,
            gender: gender.to_string(),
            country: country.to_string(),
            years_of_experience,
            profession,
            learned_at: "unspecified".to_string(),
            languages: Vec::new(),
        };
        self.inner.record_demographics(worker_id, d, Utc::now()).map_err(err)
    }

    /// The worker's test as `(prompt, code, options)` triples.
    fn qualification_test(&mut self, worker_id: &str) -> PyResult<Vec<(String, String, Vec<String>)>> {
        let test = self.inner.qualification_test(worker_id, Utc::now()).map_err(err)?;
        Ok(test
            .view()
            .into_iter()
            .map(|q| (q.prompt, q.code, q.options))
            .collect())
    }

    /// Grades the responses; returns `(score, passed)`.
    fn grade_qualification(&mut self, worker_id: &str, responses: Vec<usize>) -> PyResult<(usize, bool)> {
        let r = self
            .inner
            .grade_qualification(worker_id, &responses, Utc::now())
            .map_err(err)?;
        Ok((r.score, r.passed))
    }

    /// The id of the worker's next assignment, or `None` when no HIT is open.
    fn next_assignment(&mut self, worker_id: &str) -> PyResult<Option<String>> {
        Ok(self
            .inner
            .next_assignment(worker_id, Utc::now())
            .map_err(err)?
            .map(|a| a.assignment_id))
    }

    /// Serves the next question of the assignment, or `None` when all are answered.
    fn serve_question(&mut self, assignment_id: &str) -> PyResult<Option<Question>> {
        Ok(self
            .inner
            .serve_question(assignment_id, Utc::now())
            .map_err(err)?
            .map(|s| Question {
                inner: s.question.clone(),
            }))
    }

    #[pyo3(signature = (assignment_id, question_id, option, confidence, explanation, difficulty=None))]
    fn submit_answer(
        &mut self,
        assignment_id: &str,
        question_id: &str,
        option: &str,
        confidence: u8,
        explanation: &str,
        difficulty: Option<u8>,
    ) -> PyResult<String> {
        let option: AnswerOption = option.parse().map_err(value_err)?;
        let payload = AnswerPayload {
            option,
            confidence,
            explanation: explanation.to_string(),
            difficulty,
        };
        let answer = self
            .inner
            .submit_answer(assignment_id, question_id, payload, Utc::now())
            .map_err(err)?;
        Ok(answer.answer_id)
    }

    fn rate_difficulty(&mut self, assignment_id: &str, question_id: &str, difficulty: u8) -> PyResult<()> {
        self.inner
            .rate_difficulty(assignment_id, question_id, difficulty, Utc::now())
            .map_err(err)
    }

    /// Completes the assignment and returns its completion code.
    fn complete_assignment(&mut self, assignment_id: &str) -> PyResult<String> {
        self.inner.complete_assignment(assignment_id, Utc::now()).map_err(err)
    }

    fn progress_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.progress()).map_err(err)
    }

    fn dataset(&self) -> PyResult<Dataset> {
        Dataset::new(&self.corpus, self.inner.dataset())
    }
}

#[pymodule]
fn crowdlocate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CrowdlocateError", m.py().get_type::<CrowdlocateError>())?;
    m.add_class::<Corpus>()?;
    m.add_class::<Question>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Report>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(parse_filter, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_filters, m)?)?;
    Ok(())
}
