use chrono::{Duration as ChronoDuration, TimeZone};

use super::*;
use crate::answers::AnswerOption;

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 5, 13, 0, 0).unwrap()
}

fn exp(cfg: ExperimentConfig) -> Experiment {
    Experiment::new(&Corpus::reference(), cfg, 42, t0()).unwrap()
}

fn qualified(e: &mut Experiment, id: &str, score: usize) {
    e.register_worker(id, None, t0()).unwrap();
    let test = e.qualification_test(id, t0()).unwrap().clone();
    e.grade_qualification(id, &test.responses_with_score(score), t0())
        .unwrap();
}

fn payload(option: AnswerOption) -> AnswerPayload {
    AnswerPayload {
        option,
        confidence: 4,
        explanation: "looks fine to me".into(),
        difficulty: None,
    }
}

/// Answers and rates every question of the worker's next HIT.
fn work_hit(e: &mut Experiment, worker: &str, at: DateTime<Utc>) -> Option<String> {
    let a = e.next_assignment(worker, at).unwrap()?;
    let mut now = at;
    loop {
        now += ChronoDuration::seconds(30);
        let Some(q) = e.serve_question(&a.assignment_id, now).unwrap() else {
            break;
        };
        let qid = q.question.question_id.clone();
        now += ChronoDuration::seconds(60);
        e.submit_answer(&a.assignment_id, &qid, payload(AnswerOption::Yes), now)
            .unwrap();
        e.rate_difficulty(&a.assignment_id, &qid, 3, now).unwrap();
    }
    Some(e.complete_assignment(&a.assignment_id, now).unwrap())
}

#[test]
fn unqualified_workers_get_no_work() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 2);
    assert!(matches!(
        e.next_assignment("w1", t0()),
        Err(OrchestratorError::NotQualified(_))
    ));
    assert!(matches!(
        e.grade_qualification("w1", &[0; 5], t0()),
        Err(OrchestratorError::AlreadyAttempted(_))
    ));
}

#[test]
fn second_attempt_uses_a_different_test() {
    let mut e = exp(ExperimentConfig {
        max_qualification_attempts: 2,
        ..ExperimentConfig::default()
    });
    e.register_worker("w", None, t0()).unwrap();
    let first = e.qualification_test("w", t0()).unwrap().clone();
    e.grade_qualification("w", &first.responses_with_score(0), t0())
        .unwrap();
    let second = e.qualification_test("w", t0()).unwrap().clone();
    assert_ne!(first.test_id, second.test_id);
}

#[test]
fn full_hit_round_trip_and_code_validation() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    let code = work_hit(&mut e, "w1", t0()).unwrap();
    assert_eq!(code.len(), 10);
    assert!(code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()));
    let a = e.validate_code(&code, t0()).unwrap();
    assert_eq!(e.assignment(&a).unwrap().state, AssignmentState::Submitted);
    assert_eq!(e.validate_code(&code, t0()), Err(OrchestratorError::CodeAlreadyUsed));
    assert_eq!(e.validate_code("NOPE", t0()), Err(OrchestratorError::UnknownCode));
    // Completing twice is harmless and returns the same code.
    assert_eq!(e.complete_assignment(&a, t0()).unwrap(), code);
    for ans in e.answers() {
        assert_eq!(ans.duration_seconds, 60.0);
    }
}

#[test]
fn answers_must_follow_serve_order() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    let a = e.next_assignment("w1", t0()).unwrap().unwrap();
    let hit = e.hit(&a.hit_id).unwrap().clone();
    let err = e
        .submit_answer(&a.assignment_id, &hit.question_ids[0], payload(AnswerOption::No), t0())
        .unwrap_err();
    assert!(matches!(err, OrchestratorError::Sequence(_)));
    e.serve_question(&a.assignment_id, t0()).unwrap();
    if hit.question_ids.len() > 1 {
        let err = e
            .submit_answer(&a.assignment_id, &hit.question_ids[1], payload(AnswerOption::No), t0())
            .unwrap_err();
        assert!(matches!(err, OrchestratorError::Sequence(_)));
    }
    let err = e.complete_assignment(&a.assignment_id, t0()).unwrap_err();
    assert!(matches!(err, OrchestratorError::Incomplete(_)));
}

#[test]
fn idk_forces_zero_confidence_and_rating_once() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    let a = e.next_assignment("w1", t0()).unwrap().unwrap();
    let q = e.serve_question(&a.assignment_id, t0()).unwrap().unwrap().question.question_id.clone();
    let ans = e
        .submit_answer(&a.assignment_id, &q, payload(AnswerOption::Idk), t0())
        .unwrap();
    assert_eq!(ans.confidence, 0);
    assert!(matches!(
        e.rate_difficulty(&a.assignment_id, &q, 9, t0()),
        Err(OrchestratorError::Answer(AnswerError::Difficulty(9)))
    ));
    e.rate_difficulty(&a.assignment_id, &q, 2, t0()).unwrap();
    assert_eq!(
        e.rate_difficulty(&a.assignment_id, &q, 2, t0()),
        Err(OrchestratorError::AlreadyRated(q))
    );
}

#[test]
fn worker_never_sees_the_same_case_twice_and_is_capped() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    let mut cases = BTreeSet::new();
    let mut now = t0();
    for _ in 0..8 {
        let code = work_hit(&mut e, "w1", now).unwrap();
        let a = e.codes[&code].clone();
        assert!(cases.insert(e.assignment(&a).unwrap().case_id.clone()));
        now += ChronoDuration::minutes(20);
    }
    // Eight cases in the corpus, so the worker has seen all of them.
    assert!(matches!(
        e.next_assignment("w1", now),
        Err(OrchestratorError::Capped(_))
    ));
}

#[test]
fn deadline_expiry_frees_the_slot() {
    let cfg = ExperimentConfig {
        replication: 1,
        ..ExperimentConfig::default()
    };
    let mut e = exp(cfg);
    qualified(&mut e, "w1", 5);
    let a = e.next_assignment("w1", t0()).unwrap().unwrap();
    let late = t0() + ChronoDuration::hours(3);
    assert_eq!(
        e.serve_question(&a.assignment_id, late).unwrap_err(),
        OrchestratorError::Expired(a.assignment_id.clone())
    );
    assert_eq!(e.progress().assignments_active, 0);
    // The same HIT becomes available again to another worker.
    qualified(&mut e, "w2", 5);
    let occupied: usize = e.progress().per_hit.iter().map(|h| h.submitted + h.active).sum();
    assert_eq!(occupied, 0);
    assert!(e.next_assignment("w2", late).unwrap().is_some());
}

#[test]
fn quit_records_reason_and_reopens_hit() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    let a = e.next_assignment("w1", t0()).unwrap().unwrap();
    e.quit_assignment(&a.assignment_id, QuitReason::TooLong, None, t0())
        .unwrap();
    let w = e.worker("w1").unwrap();
    assert_eq!(w.quit_events[0].reason, QuitReason::TooLong);
    // The case stays off-limits for this worker.
    let b = e.next_assignment("w1", t0()).unwrap().unwrap();
    assert_ne!(b.case_id, a.case_id);
}

#[test]
fn replication_is_reached_exactly() {
    let cfg = ExperimentConfig {
        replication: 2,
        ..ExperimentConfig::default()
    };
    let mut e = exp(cfg);
    let mut now = t0();
    let mut w = 0;
    while !e.is_quiescent() {
        w += 1;
        let id = format!("w{w}");
        qualified(&mut e, &id, 5);
        while let Ok(Some(_)) = e.next_assignment(&id, now) {
            work_hit(&mut e, &id, now).unwrap();
            now += ChronoDuration::minutes(5);
        }
        assert!(w < 200, "experiment did not converge");
    }
    let counts = e.answer_counts();
    assert_eq!(counts.len(), 125);
    assert!(counts.values().all(|&c| c == 2), "{counts:?}");
    let p = e.progress();
    assert_eq!(p.answers_counted, 250);
    assert!(p.complete);
}

#[test]
fn replay_rebuilds_identical_state() {
    let mut e = exp(ExperimentConfig::default());
    qualified(&mut e, "w1", 5);
    qualified(&mut e, "w2", 4);
    work_hit(&mut e, "w1", t0()).unwrap();
    let a = e.next_assignment("w2", t0()).unwrap().unwrap();
    e.serve_question(&a.assignment_id, t0()).unwrap();

    let text = events::to_jsonl(e.records()).unwrap();
    let (records, report) = events::parse_log(&text);
    assert_eq!(report.corrupt_line, None);
    let r = Experiment::replay(&Corpus::reference(), &records).unwrap();
    assert_eq!(r.records(), e.records());
    assert_eq!(r.progress(), e.progress());
    assert_eq!(r.answers(), e.answers());
    assert_eq!(r.assignments(), e.assignments());
    assert_eq!(r.worker_records(), e.worker_records());
}

#[test]
fn replay_rejects_foreign_corpus() {
    let e = exp(ExperimentConfig::default());
    let mut corpus = Corpus::reference();
    corpus.checksum = "0".repeat(64);
    assert!(matches!(
        Experiment::replay(&corpus, e.records()),
        Err(OrchestratorError::Replay(_))
    ));
}

#[test]
fn rejection_reopens_a_submitted_slot() {
    let cfg = ExperimentConfig {
        replication: 1,
        ..ExperimentConfig::default()
    };
    let mut e = exp(cfg);
    qualified(&mut e, "w1", 5);
    let code = work_hit(&mut e, "w1", t0()).unwrap();
    let a = e.validate_code(&code, t0()).unwrap();
    e.reject_assignment(&a, Some("copied text".into()), t0()).unwrap();
    assert_eq!(e.progress().answers_counted, 0);
    assert!(e.reject_assignment(&a, None, t0()).is_err());
}

#[test]
fn config_validation() {
    for cfg in [
        ExperimentConfig { replication: 0, ..Default::default() },
        ExperimentConfig { max_hits_per_worker: 0, ..Default::default() },
        ExperimentConfig { pass_threshold: 6, ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(OrchestratorError::Config(_))));
    }
    let text = serde_json::to_string(&ExperimentConfig::default()).unwrap();
    assert!(text.contains("\"hit_timeout\":7200"));
}

#[test]
fn profession_parsing_accepts_long_forms() {
    assert_eq!("Professional developer".parse::<Profession>(), Ok(Profession::Professional));
    assert_eq!("graduate_student".parse::<Profession>(), Ok(Profession::Graduate));
    assert!("astronaut".parse::<Profession>().is_err());
}
