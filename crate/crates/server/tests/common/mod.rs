#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use crowdlocate_core::corpus::Corpus;
use crowdlocate_core::orchestrator::ExperimentConfig;
use crowdlocate_server::{router, ManualClock, Service, ADMIN_HEADER, SESSION_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const ADMIN: &str = "admin-secret";

pub fn clock() -> ManualClock {
    ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap())
}

pub struct App {
    pub service: Arc<Service>,
    pub router: Router,
    pub clock: ManualClock,
}

impl App {
    pub fn new(service: Service, clock: ManualClock) -> Self {
        let service = Arc::new(service);
        App {
            router: router(service.clone()),
            service,
            clock,
        }
    }

    pub fn in_memory() -> Self {
        let clock = clock();
        let svc = Service::in_memory(
            Corpus::reference(),
            ExperimentConfig::default(),
            7,
            Arc::new(clock.clone()),
            Some(ADMIN.into()),
        )
        .unwrap();
        App::new(svc, clock)
    }

    pub fn open(dir: &std::path::Path, clock: ManualClock) -> Self {
        let svc = Service::open(
            dir,
            Corpus::reference(),
            ExperimentConfig::default(),
            7,
            Arc::new(clock.clone()),
            Some(ADMIN.into()),
        )
        .unwrap();
        App::new(svc, clock)
    }

    pub async fn raw(&self, method: &str, uri: &str, headers: &[(&str, &str)], body: Option<Value>) -> (StatusCode, String) {
        let mut req = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    /// A worker-scoped call; `token` may be `None` to test authentication.
    pub async fn worker(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let headers: Vec<(&str, &str)> = token.map(|t| (SESSION_HEADER, t)).into_iter().collect();
        let (status, text) = self.raw(method, uri, &headers, body).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub async fn admin(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
        self.raw(method, uri, &[(ADMIN_HEADER, ADMIN)], body).await
    }

    pub async fn progress(&self) -> Value {
        let (status, text) = self.admin("GET", "/admin/progress", None).await;
        assert_eq!(status, StatusCode::OK, "{text}");
        serde_json::from_str(&text).unwrap()
    }

    /// Consent and demographics. Returns the session token.
    pub async fn register(&self) -> String {
        let (s, v) = self.worker("POST", "/session", None, Some(json!({"consent": true}))).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let token = v["token"].as_str().unwrap().to_string();
        let (s, v) = self
            .worker("POST", "/session/demographics", Some(&token), Some(demographics()))
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        token
    }

    /// Takes the qualification test with all-correct or all-wrong responses.
    pub async fn qualify(&self, token: &str, pass: bool) -> Value {
        let (s, test) = self.worker("GET", "/session/qualification", Some(token), None).await;
        assert_eq!(s, StatusCode::OK, "{test}");
        let test_id = test["test_id"].as_str().unwrap().to_string();
        let key: Vec<usize> = self.service.read(|exp| {
            exp.qualification_bank()
                .test(&test_id)
                .unwrap()
                .questions
                .iter()
                .map(|q| if pass { q.answer } else { (q.answer + 1) % q.options.len() })
                .collect()
        });
        let (s, v) = self
            .worker("POST", "/session/qualification", Some(token), Some(json!({"responses": key})))
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }

    pub async fn onboard(&self) -> String {
        let token = self.register().await;
        assert_eq!(self.qualify(&token, true).await["passed"], true);
        token
    }

    /// Requests the next assignment and returns its id, if any.
    pub async fn next(&self, token: &str) -> Option<String> {
        let (s, v) = self.worker("GET", "/session/next", Some(token), None).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        match v["status"].as_str().unwrap() {
            "assigned" => Some(v["assignment"]["assignment_id"].as_str().unwrap().to_string()),
            "done" => None,
            other => panic!("unexpected status {other}"),
        }
    }

    /// Serves and answers the next question. Returns its id, or `None` when
    /// the HIT is fully answered.
    pub async fn answer_next(&self, token: &str, aid: &str, rate: bool) -> Option<String> {
        let (s, v) = self
            .worker("GET", &format!("/assignment/{aid}/question"), Some(token), None)
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        if v["status"] == "all_answered" {
            return None;
        }
        let qid = v["question"]["question_id"].as_str().unwrap().to_string();
        self.clock.advance(chrono::Duration::seconds(45));
        let (s, r) = self
            .worker(
                "POST",
                &format!("/assignment/{aid}/answer"),
                Some(token),
                Some(json!({"question_id": qid, "option": "YES", "confidence": 4, "explanation": "looks off by one"})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{r}");
        if rate {
            self.rate(token, aid, &qid).await;
        }
        Some(qid)
    }

    pub async fn rate(&self, token: &str, aid: &str, qid: &str) {
        let (s, r) = self
            .worker(
                "POST",
                &format!("/assignment/{aid}/difficulty"),
                Some(token),
                Some(json!({"question_id": qid, "difficulty": 2})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{r}");
    }

    /// Answers every question of the assignment and completes it.
    pub async fn finish(&self, token: &str, aid: &str) -> String {
        while self.answer_next(token, aid, true).await.is_some() {}
        let (s, v) = self
            .worker("POST", &format!("/assignment/{aid}/complete"), Some(token), None)
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["completion_code"].as_str().unwrap().to_string()
    }
}

pub fn demographics() -> Value {
    json!({
        "age": 31,
        "gender": "female",
        "country": "Portugal",
        "years_of_experience": 6.5,
        "profession": "professional",
        "learned_at": "university",
        "languages": ["java"]
    })
}
