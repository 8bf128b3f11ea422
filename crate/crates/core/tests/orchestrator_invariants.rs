use std::collections::{BTreeMap, BTreeSet};

use crowdlocate_core::corpus::Corpus;
use crowdlocate_core::orchestrator::{AssignmentState, Experiment, ExperimentConfig};
use crowdlocate_core::simulator::{run_experiment, AnswerModel, DropoutModel, PopulationModel};

#[test]
fn invariants_hold_on_100_runs_with_dropout() {
    let corpus = Corpus::reference();
    let all_questions: BTreeSet<String> = crowdlocate_core::questions::generate_all(&corpus)
        .unwrap()
        .iter()
        .flat_map(|qs| qs.questions.iter().map(|q| q.question_id.clone()))
        .collect();
    let mut quits = 0;
    let mut expirations = 0;
    for seed in 0..100u64 {
        // Vary the dropout pressure across runs.
        let population = PopulationModel {
            dropout: Some(DropoutModel {
                base: 0.02 + (seed % 5) as f64 * 0.04,
                ..DropoutModel::default()
            }),
            ..PopulationModel::default()
        };
        let cfg = ExperimentConfig::default();
        let k = cfg.replication;
        let run = run_experiment(&corpus, cfg, &population, &AnswerModel::table28(), seed).unwrap();
        let exp = &run.experiment;

        // The HITs partition the questions, each HIT within one case.
        let mut seen = BTreeSet::new();
        for hit in exp.hits() {
            assert!(hit.question_ids.len() <= 3);
            for q in &hit.question_ids {
                assert!(seen.insert(q.clone()), "seed {seed}: {q} in two HITs");
                assert_eq!(exp.question(q).unwrap().case_id, hit.case_id);
            }
        }
        assert_eq!(seen, all_questions);

        // Caps and one HIT per case per worker.
        let mut per_worker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for a in exp.assignments().values() {
            per_worker.entry(&a.worker_id).or_default().push(&a.case_id);
            assert!(!a.state.is_active(), "seed {seed}: {} still open", a.assignment_id);
            if a.state == AssignmentState::Quit {
                quits += 1;
            }
            if a.state == AssignmentState::Expired {
                expirations += 1;
            }
        }
        for (w, cases) in &per_worker {
            let distinct: BTreeSet<_> = cases.iter().collect();
            assert_eq!(distinct.len(), cases.len(), "seed {seed}: {w} repeated a case");
            let submitted = exp.worker(w).unwrap().completed_hit_ids.len();
            assert!(submitted <= 8, "seed {seed}: {w} has {submitted} HITs");
        }

        // Exactly K counted answers per question, each from a distinct worker.
        assert!(exp.is_quiescent());
        assert!(exp.answer_counts().values().all(|&c| c == k), "seed {seed}");
        let mut pairs = BTreeSet::new();
        for a in exp.answer_records(false) {
            assert!(pairs.insert((a.worker_id.clone(), a.question_id.clone())), "seed {seed}: duplicate answer");
        }

        if seed % 10 == 0 {
            let replayed = Experiment::replay(&corpus, exp.records()).unwrap();
            assert_eq!(replayed.answer_records(true), exp.answer_records(true));
            assert_eq!(replayed.assignments(), exp.assignments());
        }
    }
    assert!(quits > 0 && expirations > 0, "dropout paths exercised: {quits} quits, {expirations} expirations");
}
