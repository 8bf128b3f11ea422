#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use crowdlocate_core::aggregation::{CaseTruth, GroundTruth, QuestionTruth};
use crowdlocate_core::answers::{AnswerOption, AnswerRecord};
use rand::Rng;

/// A random benchmark of up to three cases and up to ten questions in all,
/// with up to `max_answers` answers per question. Each question covers a
/// short run of lines; roughly a quarter of the questions cover a fault.
pub fn random_instance(rng: &mut impl Rng, max_answers: usize) -> (GroundTruth, Vec<AnswerRecord>) {
    let n_cases = rng.random_range(1..=3);
    let n_questions = rng.random_range(n_cases..=10);
    let mut cases: Vec<CaseTruth> = (0..n_cases)
        .map(|c| CaseTruth {
            case_id: format!("C{c}"),
            lines: (1..=30).collect(),
            fault_lines: BTreeSet::new(),
            questions: Vec::new(),
        })
        .collect();
    for q in 0..n_questions {
        let c = if q < n_cases { q } else { rng.random_range(0..n_cases) };
        let start = rng.random_range(1..=27);
        let covered: BTreeSet<_> = (start..start + rng.random_range(1..=3)).collect();
        let covers_fault = rng.random_bool(0.25);
        if covers_fault {
            cases[c].fault_lines.insert(start);
        }
        cases[c].questions.push(QuestionTruth {
            question_id: format!("q{q}"),
            covered_lines: covered,
            covers_fault,
        });
    }
    let truth = GroundTruth::from_cases(cases);
    let t0 = Utc.with_ymd_and_hms(2026, 1, 5, 13, 0, 0).unwrap();
    let mut answers = Vec::new();
    for case in &truth.cases {
        for q in &case.questions {
            for _ in 0..rng.random_range(0..=max_answers) {
                let k = answers.len();
                let option = match rng.random_range(0..10) {
                    0 => AnswerOption::Idk,
                    1..=4 => AnswerOption::Yes,
                    _ => AnswerOption::No,
                };
                answers.push(AnswerRecord {
                    answer_id: format!("a{k:05}"),
                    worker_id: format!("w{}", rng.random_range(0..15)),
                    case_id: case.case_id.clone(),
                    question_id: q.question_id.clone(),
                    hit_id: format!("{}-H1", case.case_id),
                    order_in_hit: 1,
                    option,
                    confidence: if option == AnswerOption::Idk { 0 } else { rng.random_range(1..=5) },
                    difficulty: Some(rng.random_range(1..=5)),
                    duration_seconds: rng.random_range(10.0..600.0),
                    explanation_chars: rng.random_range(1..300),
                    correct: false,
                    submitted_at: t0 + Duration::seconds(rng.random_range(0..100_000)),
                });
            }
        }
    }
    (truth, answers)
}
