//! The qualification test bank: four tests of five program-output questions.

use serde::{Deserialize, Serialize};

const BUNDLED_BANK: &str = include_str!("../../data/qualification_tests.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationQuestion {
    pub prompt: String,
    pub code: String,
    pub options: Vec<String>,
    /// Index of the correct option. Never sent to workers.
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationTest {
    pub test_id: String,
    pub questions: Vec<QualificationQuestion>,
}

/// The worker-facing view of a question, without the answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationQuestionView {
    pub prompt: String,
    pub code: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationBank {
    pub pass_threshold: usize,
    pub tests: Vec<QualificationTest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationResult {
    pub score: usize,
    pub passed: bool,
}

impl QualificationBank {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_BANK).expect("bundled qualification bank is valid")
    }

    pub fn test(&self, test_id: &str) -> Option<&QualificationTest> {
        self.tests.iter().find(|t| t.test_id == test_id)
    }

    /// Scores `responses` against `test`; missing responses count as wrong.
    pub fn grade(&self, test: &QualificationTest, responses: &[usize]) -> QualificationResult {
        let score = test
            .questions
            .iter()
            .zip(responses)
            .filter(|(q, r)| q.answer == **r)
            .count();
        QualificationResult {
            score,
            passed: score >= self.pass_threshold,
        }
    }
}

impl QualificationTest {
    pub fn view(&self) -> Vec<QualificationQuestionView> {
        self.questions
            .iter()
            .map(|q| QualificationQuestionView {
                prompt: q.prompt.clone(),
                code: q.code.clone(),
                options: q.options.clone(),
            })
            .collect()
    }

    /// Responses that answer exactly `correct` questions right.
    pub fn responses_with_score(&self, correct: usize) -> Vec<usize> {
        self.questions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                if i < correct {
                    q.answer
                } else {
                    (q.answer + 1) % q.options.len()
                }
            })
            .collect()
    }

    pub fn key(&self) -> Vec<usize> {
        self.questions.iter().map(|q| q.answer).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_bank_shape() {
        let bank = QualificationBank::bundled();
        assert_eq!(bank.tests.len(), 4);
        assert_eq!(bank.pass_threshold, 3);
        for t in &bank.tests {
            assert_eq!(t.questions.len(), 5);
            for q in &t.questions {
                assert!(q.answer < q.options.len());
            }
        }
    }

    #[test]
    fn grading_thresholds() {
        let bank = QualificationBank::bundled();
        let t = &bank.tests[0];
        let r = bank.grade(t, &t.key());
        assert_eq!((r.score, r.passed), (5, true));
        let r = bank.grade(t, &t.responses_with_score(3));
        assert_eq!((r.score, r.passed), (3, true));
        let r = bank.grade(t, &t.responses_with_score(2));
        assert_eq!((r.score, r.passed), (2, false));
        let r = bank.grade(t, &[]);
        assert_eq!(r.score, 0);
    }
}
