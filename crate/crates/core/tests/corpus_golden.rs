use std::collections::BTreeMap;

use crowdlocate_core::analysis::{extract_elements, uncovered_lines, ElementKind};
use crowdlocate_core::corpus::Corpus;
use crowdlocate_core::questions::generate_all;

const KIND_COUNTS: &str = include_str!("../data/element_kind_counts.csv");

/// Reference per-case question counts for the eight methods.
const REFERENCE_QUESTIONS: [(&str, usize); 8] = [
    ("J1", 10),
    ("J2", 6),
    ("J3", 17),
    ("J4", 37),
    ("J5", 9),
    ("J6", 18),
    ("J7", 8),
    ("J8", 24),
];

fn golden() -> BTreeMap<String, [usize; 5]> {
    let mut rdr = csv::Reader::from_reader(KIND_COUNTS.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["case_id", "loop", "conditional", "method_call", "variable", "total"]);
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let n = |i: usize| r[i].parse::<usize>().unwrap();
            (r[0].to_string(), [n(1), n(2), n(3), n(4), n(5)])
        })
        .collect()
}

#[test]
fn element_kinds_match_golden_file() {
    let corpus = Corpus::reference();
    let golden = golden();
    assert_eq!(golden.len(), corpus.cases.len());
    for case in &corpus.cases {
        let elements = extract_elements(case).unwrap();
        let count = |k: ElementKind| elements.iter().filter(|e| e.kind == k).count();
        let got = [
            count(ElementKind::Loop),
            count(ElementKind::Conditional),
            count(ElementKind::MethodCall),
            count(ElementKind::Variable),
            elements.len(),
        ];
        assert_eq!(got, golden[&case.case_id], "{}", case.case_id);
    }
}

#[test]
fn question_counts_within_two_of_reference() {
    let sets = generate_all(&Corpus::reference()).unwrap();
    let total: usize = sets.iter().map(|s| s.len()).sum();
    assert!(total.abs_diff(129) <= 5, "total {total}");
    for (qs, (id, reference)) in sets.iter().zip(REFERENCE_QUESTIONS) {
        assert_eq!(qs.case_id, id);
        assert!(qs.len().abs_diff(reference) <= 2, "{id}: {} vs {reference}", qs.len());
    }
    assert_eq!(sets[0].len(), 10);
}

#[test]
fn question_spans_cover_every_executable_line() {
    let corpus = Corpus::reference();
    for case in &corpus.cases {
        let elements = extract_elements(case).unwrap();
        let missing = uncovered_lines(case, &elements);
        assert!(missing.is_empty(), "{}: {:?}", case.case_id, missing);
    }
}

#[test]
fn every_case_has_a_fault_covering_question() {
    for qs in generate_all(&Corpus::reference()).unwrap() {
        assert!(qs.fault_covering() >= 1, "{}", qs.case_id);
        assert!(qs.fault_covering() < qs.len());
    }
}
