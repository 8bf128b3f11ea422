mod common;

use axum::http::StatusCode;
use chrono::Duration;
use common::App;
use serde_json::json;

#[tokio::test]
async fn scripted_session_gets_a_completion_code() {
    let app = App::in_memory();
    let token = app.onboard().await;
    let aid = app.next(&token).await.expect("a HIT is available");

    let (s, first) = app
        .worker("GET", &format!("/assignment/{aid}/question"), Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    let q = &first["question"];
    assert_eq!(q["progress"]["order_in_hit"], 1);
    assert_eq!(q["progress"]["answered"], 0);
    assert_eq!(q["options"].as_array().unwrap().len(), 3);
    assert_eq!(q["confidence_scale"], json!([1, 2, 3, 4, 5]));
    assert!(!q["failing_test"].as_str().unwrap().is_empty());
    let lines = q["source_lines"].as_array().unwrap();
    assert!(lines.iter().any(|l| l["highlight"] == "primary"));

    let code = app.finish(&token, &aid).await;
    assert_eq!(code.len(), 10);
    // Retrying completion is idempotent.
    let (s, again) = app
        .worker("POST", &format!("/assignment/{aid}/complete"), Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again["completion_code"], code.as_str());

    let (s, body) = app.admin("POST", "/codes/validate", Some(json!({"code": code}))).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let (s, _) = app.admin("POST", "/codes/validate", Some(json!({"code": code}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = app.admin("POST", "/codes/validate", Some(json!({"code": "NOPE"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let progress = app.progress().await;
    assert_eq!(progress["assignments_submitted"], 1);
    assert_eq!(progress["workers_qualified"], 1);
}

#[tokio::test]
async fn question_payload_hides_ground_truth() {
    let app = App::in_memory();
    let token = app.onboard().await;
    let aid = app.next(&token).await.unwrap();
    let (_, text) = app
        .raw(
            "GET",
            &format!("/assignment/{aid}/question"),
            &[(crowdlocate_server::SESSION_HEADER, &token)],
            None,
        )
        .await;
    for secret in ["covers_fault", "fault_lines", "correct"] {
        assert!(!text.contains(secret), "payload leaks {secret}");
    }
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let primary: Vec<u64> = v["question"]["source_lines"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|l| l["highlight"] == "primary")
        .map(|l| l["line"].as_u64().unwrap())
        .collect();
    let qid = v["question"]["question_id"].as_str().unwrap();
    let covered: Vec<u64> = app.service.read(|exp| {
        exp.question(qid).unwrap().covered_lines.iter().map(|&l| l as u64).collect()
    });
    assert_eq!(primary, covered);
}

#[tokio::test]
async fn answering_after_the_timeout_is_gone() {
    let app = App::in_memory();
    let token = app.onboard().await;
    let aid = app.next(&token).await.unwrap();
    let (_, v) = app
        .worker("GET", &format!("/assignment/{aid}/question"), Some(&token), None)
        .await;
    let qid = v["question"]["question_id"].as_str().unwrap().to_string();
    app.clock.advance(Duration::hours(2) + Duration::seconds(1));
    let (s, body) = app
        .worker(
            "POST",
            &format!("/assignment/{aid}/answer"),
            Some(&token),
            Some(json!({"question_id": qid, "option": "NO", "confidence": 3, "explanation": "fine"})),
        )
        .await;
    assert_eq!(s, StatusCode::GONE, "{body}");
    assert_eq!(app.progress().await["assignments_expired"], 1);
    // The worker may move on to another HIT.
    assert!(app.next(&token).await.is_some());
}

#[tokio::test]
async fn qualification_is_single_attempt() {
    let app = App::in_memory();
    let token = app.register().await;
    let outcome = app.qualify(&token, false).await;
    assert_eq!(outcome["passed"], false);
    assert_eq!(outcome["score_percent"], 0);
    let (s, _) = app
        .worker("POST", "/session/qualification", Some(&token), Some(json!({"responses": [0, 0, 0, 0, 0]})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    // Failing workers never receive HITs.
    let (s, _) = app.worker("GET", "/session/next", Some(&token), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn steps_must_come_in_order() {
    let app = App::in_memory();
    let (s, v) = app.worker("POST", "/session", None, Some(json!({"consent": false}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (_, v) = app.worker("POST", "/session", None, Some(json!({"consent": true}))).await;
    let token = v["token"].as_str().unwrap().to_string();
    assert_eq!(token.len(), 32);
    let (s, _) = app.worker("GET", "/session/qualification", Some(&token), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = app.worker("GET", "/session/next", Some(&token), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let mut bad = common::demographics();
    bad["age"] = json!(0);
    let (s, _) = app.worker("POST", "/session/demographics", Some(&token), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn authentication_and_ownership() {
    let app = App::in_memory();
    let (s, _) = app.worker("GET", "/session/next", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = app.worker("GET", "/session/next", Some("deadbeef"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let alice = app.onboard().await;
    let bob = app.onboard().await;
    let aid = app.next(&alice).await.unwrap();
    let (s, _) = app
        .worker("GET", &format!("/assignment/{aid}/question"), Some(&bob), None)
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = app
        .worker("GET", "/assignment/asg-999999/question", Some(&bob), None)
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = app.raw("GET", "/admin/progress", &[], None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = app
        .raw("GET", "/admin/progress", &[(crowdlocate_server::ADMIN_HEADER, "guess")], None)
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    // Worker tokens do not open admin endpoints.
    let (s, _) = app.worker("GET", "/admin/export.csv", Some(&alice), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn out_of_sequence_and_invalid_answers() {
    let app = App::in_memory();
    let token = app.onboard().await;
    let aid = app.next(&token).await.unwrap();
    let url = format!("/assignment/{aid}/answer");
    // Nothing has been served yet.
    let hit_questions: Vec<String> = app.service.read(|exp| {
        let a = exp.assignment(&aid).unwrap();
        exp.hit(&a.hit_id).unwrap().question_ids.clone()
    });
    let body = |q: &str, expl: &str| json!({"question_id": q, "option": "YES", "confidence": 2, "explanation": expl});
    let (s, _) = app.worker("POST", &url, Some(&token), Some(body(&hit_questions[0], "x"))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    app.worker("GET", &format!("/assignment/{aid}/question"), Some(&token), None).await;
    let (s, _) = app.worker("POST", &url, Some(&token), Some(body(&hit_questions[1], "x"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = app.worker("POST", &url, Some(&token), Some(body(&hit_questions[0], "   "))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = app
        .worker(
            "POST",
            &url,
            Some(&token),
            Some(json!({"question_id": hit_questions[0], "option": "NO", "confidence": 9, "explanation": "e"})),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // Difficulty before the answer is out of sequence, out of range is invalid.
    let diff = format!("/assignment/{aid}/difficulty");
    let (s, _) = app
        .worker("POST", &diff, Some(&token), Some(json!({"question_id": hit_questions[0], "difficulty": 3})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = app.worker("POST", &url, Some(&token), Some(body(&hit_questions[0], "ok"))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = app
        .worker("POST", &diff, Some(&token), Some(json!({"question_id": hit_questions[0], "difficulty": 6})))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    app.rate(&token, &aid, &hit_questions[0]).await;
    let (s, _) = app
        .worker("POST", &diff, Some(&token), Some(json!({"question_id": hit_questions[0], "difficulty": 3})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);

    // Completing early is refused.
    let (s, _) = app
        .worker("POST", &format!("/assignment/{aid}/complete"), Some(&token), None)
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn quitting_frees_the_worker_for_another_case() {
    let app = App::in_memory();
    let token = app.onboard().await;
    let aid = app.next(&token).await.unwrap();
    let (s, v) = app
        .worker(
            "POST",
            &format!("/assignment/{aid}/quit"),
            Some(&token),
            Some(json!({"reason": "too difficult", "comment": "hard to follow"})),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, _) = app
        .worker("POST", &format!("/assignment/{aid}/quit"), Some(&token), Some(json!({"reason": "other"})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let next = app.next(&token).await.unwrap();
    assert_ne!(next, aid);
    let case = |id: &str| app.service.read(|exp| exp.assignment(id).unwrap().case_id.clone());
    assert_ne!(case(&next), case(&aid));
    assert_eq!(app.progress().await["assignments_quit"], 1);
}

#[tokio::test]
async fn admin_report_and_export() {
    let app = App::in_memory();
    for _ in 0..3 {
        let token = app.onboard().await;
        let aid = app.next(&token).await.unwrap();
        app.finish(&token, &aid).await;
    }
    let (s, csv) = app.admin("GET", "/admin/export.csv", None).await;
    assert_eq!(s, StatusCode::OK);
    let mut rows = csv.lines();
    assert!(rows.next().unwrap().starts_with("answer_id,worker_id"));
    let answered = rows.count();
    assert!(answered >= 3, "{csv}");

    let (s, text) = app.admin("GET", "/admin/report?mechanism=AM2&n=0", None).await;
    assert_eq!(s, StatusCode::OK, "{text}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["answers"], answered);
    assert_eq!(v["workers"], 3);
    assert!(v["summary"].as_str().unwrap().contains("AM2"));

    let (s, text) = app
        .admin("GET", "/admin/report?filter=worker.score%20%3D%20100", None)
        .await;
    assert_eq!(s, StatusCode::OK, "{text}");
    let (s, text) = app.admin("GET", "/admin/report?filter=exclude_students", None).await;
    assert_eq!(s, StatusCode::OK, "{text}");
    let (s, _) = app.admin("GET", "/admin/report?filter=worker.nonsense%20%3D%201", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = app.admin("GET", "/admin/report?mechanism=AM3&n=0", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = app.admin("GET", "/admin/report?mechanism=AM9", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}
