mod common;

use std::collections::BTreeSet;

use crowdlocate_core::aggregation::{predict, tally, AggregationConfig, GroundTruth, Mechanism};
use crowdlocate_core::answers::{AnswerOption, AnswerRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recounts from raw answers and ranks by counting strictly larger YES
/// counts in the same case, without sorting or shared helpers.
fn oracle(truth: &GroundTruth, answers: &[AnswerRecord], mechanism: Mechanism, n: usize) -> BTreeSet<String> {
    let count = |qid: &str, opt: AnswerOption| answers.iter().filter(|a| a.question_id == qid && a.option == opt).count();
    let mut out = BTreeSet::new();
    for case in &truth.cases {
        let yes: Vec<usize> = case.questions.iter().map(|q| count(&q.question_id, AnswerOption::Yes)).collect();
        for (i, q) in case.questions.iter().enumerate() {
            let no = count(&q.question_id, AnswerOption::No);
            let keep = match mechanism {
                Mechanism::Am1 => yes[i] > no + n,
                Mechanism::Am2 => yes[i] > n,
                Mechanism::Am3 => yes[i] >= 1 && yes.iter().filter(|&&y| y > yes[i]).count() < n,
            };
            if keep {
                out.insert(q.question_id.clone());
            }
        }
    }
    out
}

#[test]
fn predictions_match_brute_force_on_1000_instances() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (truth, answers) = common::random_instance(&mut rng, 20);
        let tallies = tally(&truth, &answers, None).unwrap();
        for mechanism in [Mechanism::Am1, Mechanism::Am2, Mechanism::Am3] {
            let first = if mechanism == Mechanism::Am3 { 1 } else { 0 };
            for n in first..=21 {
                let got = predict(&tallies, AggregationConfig::new(mechanism, n)).unwrap();
                assert_eq!(got, oracle(&truth, &answers, mechanism, n), "seed {seed} {mechanism:?} n={n}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn predicted_set_size_is_monotone_in_n(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (truth, answers) = common::random_instance(&mut rng, 20);
        let tallies = tally(&truth, &answers, None).unwrap();
        let size = |m, n| predict(&tallies, AggregationConfig::new(m, n)).unwrap().len();
        for n in 0..21 {
            prop_assert!(size(Mechanism::Am1, n + 1) <= size(Mechanism::Am1, n));
            prop_assert!(size(Mechanism::Am2, n + 1) <= size(Mechanism::Am2, n));
        }
        for n in 1..11 {
            prop_assert!(size(Mechanism::Am3, n + 1) >= size(Mechanism::Am3, n));
        }
    }
}
