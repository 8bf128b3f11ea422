//! Route table and request handlers. Handlers hold the service lock only for
//! the duration of one orchestrator call, so none of them await while locked.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use crowdlocate_core::aggregation::{AggregationConfig, GroundTruth, Mechanism};
use crowdlocate_core::answers::{answers_csv, AnswerOption, AnswerPayload};
use crowdlocate_core::corpus::LineNo;
use crowdlocate_core::filters::{builtin, subcrowd_report, FilterContext, FilterSpec, SubcrowdResult};
use crowdlocate_core::orchestrator::qualification::QualificationQuestionView;
use crowdlocate_core::orchestrator::{Demographics, OrchestratorError, Progress, QuitReason};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::service::Service;

pub const SESSION_HEADER: &str = "x-session-token";
pub const ADMIN_HEADER: &str = "x-admin-token";

type Shared = State<Arc<Service>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/demographics", post(demographics))
        .route("/session/qualification", get(qualification_test).post(qualification_submit))
        .route("/session/next", get(next_assignment))
        .route("/assignment/{id}/question", get(question))
        .route("/assignment/{id}/answer", post(answer))
        .route("/assignment/{id}/difficulty", post(difficulty))
        .route("/assignment/{id}/quit", post(quit))
        .route("/assignment/{id}/complete", post(complete))
        .route("/codes/validate", post(validate_code))
        .route("/admin/progress", get(progress))
        .route("/admin/report", get(report))
        .route("/admin/export.csv", get(export_csv))
        .with_state(service)
}

fn worker(svc: &Service, headers: &HeaderMap) -> Result<String, ApiError> {
    let token = headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or(ApiError::Unauthorized)?;
    svc.worker_for_token(token.trim())
}

fn owned_assignment(svc: &Service, headers: &HeaderMap, id: &str) -> Result<String, ApiError> {
    let w = worker(svc, headers)?;
    svc.check_owner(&w, id)?;
    Ok(w)
}

fn admin(svc: &Service, headers: &HeaderMap) -> Result<(), ApiError> {
    let given = headers
        .get(ADMIN_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or(ApiError::Unauthorized)?;
    match svc.admin_token() {
        Some(expected) if expected == given => Ok(()),
        Some(_) => Err(ApiError::Forbidden("wrong admin token".into())),
        None => Err(ApiError::Forbidden("admin endpoints are disabled".into())),
    }
}

// ---- session ----

#[derive(Debug, Deserialize)]
pub struct ConsentRequest {
    pub consent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub worker_id: String,
    pub token: String,
}

async fn create_session(State(svc): Shared, Json(req): Json<ConsentRequest>) -> ApiResult<SessionResponse> {
    if !req.consent {
        return Err(ApiError::Invalid("consent is required to take part".into()));
    }
    let (worker_id, token) = svc.new_session()?;
    Ok(Json(SessionResponse { worker_id, token }))
}

fn check_demographics(d: &Demographics) -> Result<(), ApiError> {
    if !(1..=120).contains(&d.age) {
        return Err(ApiError::Invalid(format!("age {} is out of range", d.age)));
    }
    if !d.years_of_experience.is_finite() || d.years_of_experience < 0.0 {
        return Err(ApiError::Invalid("years_of_experience must be a non-negative number".into()));
    }
    if d.gender.trim().is_empty() || d.country.trim().is_empty() {
        return Err(ApiError::Invalid("gender and country are required".into()));
    }
    Ok(())
}

async fn demographics(State(svc): Shared, headers: HeaderMap, Json(d): Json<Demographics>) -> ApiResult<Ack> {
    let w = worker(&svc, &headers)?;
    check_demographics(&d)?;
    let now = svc.now();
    svc.mutate(|exp| {
        if exp.worker(&w).is_some_and(|p| p.demographics.is_some()) {
            return Err(ApiError::Conflict("demographics already recorded".into()));
        }
        Ok(exp.record_demographics(&w, d, now)?)
    })?;
    Ok(Json(Ack { ok: true }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QualificationView {
    pub test_id: String,
    pub questions: Vec<QualificationQuestionView>,
}

fn require_demographics(exp: &crowdlocate_core::orchestrator::Experiment, w: &str) -> Result<(), ApiError> {
    match exp.worker(w) {
        Some(p) if p.demographics.is_some() => Ok(()),
        Some(_) => Err(OrchestratorError::Sequence("demographics come before the qualification test".into()).into()),
        None => Err(ApiError::Unauthorized),
    }
}

async fn qualification_test(State(svc): Shared, headers: HeaderMap) -> ApiResult<QualificationView> {
    let w = worker(&svc, &headers)?;
    let now = svc.now();
    let view = svc.mutate(|exp| {
        require_demographics(exp, &w)?;
        let test = exp.qualification_test(&w, now)?;
        Ok(QualificationView {
            test_id: test.test_id.clone(),
            questions: test.view(),
        })
    })?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
pub struct QualificationAnswers {
    pub responses: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QualificationOutcome {
    pub score: usize,
    pub score_percent: u32,
    pub passed: bool,
}

async fn qualification_submit(
    State(svc): Shared,
    headers: HeaderMap,
    Json(req): Json<QualificationAnswers>,
) -> ApiResult<QualificationOutcome> {
    let w = worker(&svc, &headers)?;
    let now = svc.now();
    let result = svc.mutate(|exp| {
        require_demographics(exp, &w)?;
        Ok(exp.grade_qualification(&w, &req.responses, now)?)
    })?;
    Ok(Json(QualificationOutcome {
        score: result.score,
        score_percent: (result.score * 20) as u32,
        passed: result.passed,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentView {
    pub assignment_id: String,
    pub hit_id: String,
    pub case_id: String,
    pub deadline: DateTime<Utc>,
    pub questions: usize,
    pub answered: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextResponse {
    Assigned { assignment: AssignmentView },
    Done,
}

async fn next_assignment(State(svc): Shared, headers: HeaderMap) -> ApiResult<NextResponse> {
    let w = worker(&svc, &headers)?;
    let now = svc.now();
    let next = svc.mutate(|exp| {
        let Some(a) = exp.next_assignment(&w, now)? else {
            return Ok(NextResponse::Done);
        };
        let questions = exp.hit(&a.hit_id).map_or(0, |h| h.question_ids.len());
        Ok(NextResponse::Assigned {
            assignment: AssignmentView {
                questions,
                answered: a.answer_ids.len(),
                assignment_id: a.assignment_id,
                hit_id: a.hit_id,
                case_id: a.case_id,
                deadline: a.deadline,
            },
        })
    })?;
    Ok(Json(next))
}

// ---- assignment ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Highlight {
    /// Lines the question asks about.
    Primary,
    /// Lines related to a caller or callee shown alongside.
    Context,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SourceLineView {
    pub line: LineNo,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub highlight: Option<Highlight>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContextMethodView {
    pub name: String,
    pub source: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OptionView {
    pub value: AnswerOption,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HitProgressView {
    pub order_in_hit: u8,
    pub answered: usize,
    pub total: usize,
}

/// Everything a worker needs to answer one question. Deliberately carries
/// no ground truth.
#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionPayload {
    pub question_id: String,
    pub case_id: String,
    pub failing_test: String,
    pub failure_message: String,
    pub text: String,
    pub options: Vec<OptionView>,
    pub confidence_scale: Vec<u8>,
    pub explanation_required: bool,
    pub source_lines: Vec<SourceLineView>,
    pub context_methods: Vec<ContextMethodView>,
    pub progress: HitProgressView,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QuestionResponse {
    Question { question: Box<QuestionPayload> },
    AllAnswered { answered: usize, total: usize },
}

async fn question(State(svc): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<QuestionResponse> {
    owned_assignment(&svc, &headers, &id)?;
    let now = svc.now();
    let corpus = svc.corpus();
    let resp = svc.mutate(|exp| {
        let Some(served) = exp.serve_question(&id, now)? else {
            let total = exp
                .assignment(&id)
                .and_then(|a| exp.hit(&a.hit_id))
                .map_or(0, |h| h.question_ids.len());
            return Ok(QuestionResponse::AllAnswered { answered: total, total });
        };
        let q = served.question;
        let case = corpus
            .case(&q.case_id)
            .ok_or_else(|| OrchestratorError::Config(format!("case {} missing from corpus", q.case_id)))?;
        let context: BTreeSet<LineNo> = case
            .context_methods
            .iter()
            .flat_map(|m| m.highlight_lines.iter().copied())
            .collect();
        let source_lines = case
            .source
            .iter()
            .map(|l| SourceLineView {
                line: l.line,
                text: l.text.clone(),
                highlight: if q.covered_lines.contains(&l.line) {
                    Some(Highlight::Primary)
                } else if context.contains(&l.line) {
                    Some(Highlight::Context)
                } else {
                    None
                },
            })
            .collect();
        Ok(QuestionResponse::Question {
            question: Box::new(QuestionPayload {
                question_id: q.question_id.clone(),
                case_id: q.case_id.clone(),
                failing_test: case.failing_test.clone(),
                failure_message: case.failure_message.clone(),
                text: q.text.clone(),
                options: [AnswerOption::Yes, AnswerOption::No, AnswerOption::Idk]
                    .into_iter()
                    .map(|o| OptionView {
                        value: o,
                        label: o.label().to_string(),
                    })
                    .collect(),
                confidence_scale: (1..=5).collect(),
                explanation_required: true,
                source_lines,
                context_methods: case
                    .context_methods
                    .iter()
                    .map(|m| ContextMethodView {
                        name: m.name.clone(),
                        source: m.source.clone(),
                    })
                    .collect(),
                progress: HitProgressView {
                    order_in_hit: served.order_in_hit,
                    answered: served.answered,
                    total: served.hit_size,
                },
            }),
        })
    })?;
    Ok(Json(resp))
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub question_id: String,
    #[serde(flatten)]
    pub payload: AnswerPayload,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerReceipt {
    pub answer_id: String,
    pub order_in_hit: u8,
    pub duration_seconds: f64,
}

async fn answer(
    State(svc): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<AnswerRequest>,
) -> ApiResult<AnswerReceipt> {
    owned_assignment(&svc, &headers, &id)?;
    let now = svc.now();
    let ans = svc.mutate(|exp| Ok(exp.submit_answer(&id, &req.question_id, req.payload, now)?))?;
    Ok(Json(AnswerReceipt {
        answer_id: ans.answer_id,
        order_in_hit: ans.order_in_hit,
        duration_seconds: ans.duration_seconds,
    }))
}

#[derive(Debug, Deserialize)]
pub struct DifficultyRequest {
    pub question_id: String,
    pub difficulty: u8,
}

async fn difficulty(
    State(svc): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<DifficultyRequest>,
) -> ApiResult<Ack> {
    owned_assignment(&svc, &headers, &id)?;
    let now = svc.now();
    svc.mutate(|exp| Ok(exp.rate_difficulty(&id, &req.question_id, req.difficulty, now)?))?;
    Ok(Json(Ack { ok: true }))
}

#[derive(Debug, Deserialize)]
pub struct QuitRequest {
    pub reason: QuitReason,
    #[serde(default)]
    pub comment: Option<String>,
}

async fn quit(
    State(svc): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<QuitRequest>,
) -> ApiResult<Ack> {
    owned_assignment(&svc, &headers, &id)?;
    let now = svc.now();
    let comment = req.comment.filter(|c| !c.trim().is_empty());
    svc.mutate(|exp| Ok(exp.quit_assignment(&id, req.reason, comment, now)?))?;
    Ok(Json(Ack { ok: true }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub completion_code: String,
}

async fn complete(State(svc): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<CompletionResponse> {
    owned_assignment(&svc, &headers, &id)?;
    let now = svc.now();
    let code = svc.mutate(|exp| Ok(exp.complete_assignment(&id, now)?))?;
    Ok(Json(CompletionResponse { completion_code: code }))
}

// ---- requester side ----

#[derive(Debug, Deserialize)]
pub struct CodeRequest {
    pub code: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodeResponse {
    pub assignment_id: String,
    pub valid: bool,
}

/// Gated like the admin endpoints: a worker could otherwise burn its own code.
async fn validate_code(State(svc): Shared, headers: HeaderMap, Json(req): Json<CodeRequest>) -> ApiResult<CodeResponse> {
    admin(&svc, &headers)?;
    let now = svc.now();
    let assignment_id = svc.mutate(|exp| Ok(exp.validate_code(&req.code, now)?))?;
    Ok(Json(CodeResponse {
        assignment_id,
        valid: true,
    }))
}

async fn progress(State(svc): Shared, headers: HeaderMap) -> ApiResult<Progress> {
    admin(&svc, &headers)?;
    Ok(Json(svc.read(|exp| exp.progress())))
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub mechanism: Option<String>,
    pub n: Option<usize>,
    pub filter: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ReportResponse {
    pub summary: String,
    #[serde(flatten)]
    pub result: SubcrowdResult,
}

async fn report(State(svc): Shared, headers: HeaderMap, Query(q): Query<ReportQuery>) -> ApiResult<ReportResponse> {
    admin(&svc, &headers)?;
    let mechanism: Mechanism = q.mechanism.as_deref().unwrap_or("AM3").parse()?;
    let cfg = match q.n {
        Some(n) => AggregationConfig::new(mechanism, n),
        None => AggregationConfig::preferred(mechanism),
    };
    let filter_text = q.filter.as_deref().unwrap_or("all_workers");
    let (label, spec) = match builtin(filter_text) {
        Some(b) => (b.label.to_string(), b.spec()?),
        None => (filter_text.to_string(), FilterSpec::parse(filter_text)?),
    };
    let (dataset, replication) = svc.read(|exp| (exp.dataset(), exp.config().replication));
    cfg.validate(Some(replication))?;
    let truth = GroundTruth::new(svc.corpus(), &dataset.question_sets)?;
    let ctx = FilterContext::new(&dataset);
    let result = subcrowd_report(&ctx, &truth, &label, &spec, cfg)?;
    Ok(Json(ReportResponse {
        summary: result.report.render_text(),
        result,
    }))
}

async fn export_csv(State(svc): Shared, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    admin(&svc, &headers)?;
    let rows = svc.read(|exp| exp.answer_records(false));
    let body = answers_csv(&rows).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body))
}
