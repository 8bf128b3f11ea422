use super::{FilterSpec, SpecError};

/// A named filter. `label` describes what the subcrowd retains or drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinFilter {
    pub name: &'static str,
    pub label: &'static str,
    pub expr: &'static str,
}

impl BuiltinFilter {
    pub fn spec(&self) -> Result<FilterSpec, SpecError> {
        FilterSpec::parse(self.expr)
    }
}

macro_rules! filters {
    ($($name:literal, $label:literal, $expr:expr;)*) => {
        &[$(BuiltinFilter { name: $name, label: $label, expr: $expr },)*]
    };
}

// "Students" means undergraduate and graduate students throughout.
static CATALOG: &[BuiltinFilter] = filters![
    "all_workers", "all workers", "true";

    // Question attributes.
    "exclude_conditional_gt3", "excluded conditionals > 3 LOC",
        "not (question.kind = conditional and question.loc > 3)";

    // Answer attributes.
    "consensus_cells", "top 3.3% confidence answers", "answer.consensus = true";
    "exclude_fastest", "excluded fastest answers", "answer.duration_quartile != 1";
    "exclude_shortest_explanations", "excluded shortest explanations", "answer.explanation_quartile != 1";

    // Profession.
    "professionals_only", "excluded students, hobbyists, others", "worker.profession = professional";
    "exclude_hobbyists_graduates_others", "excluded hobbyists, graduate students, others",
        "worker.profession in (professional, undergraduate)";
    "exclude_students_others", "excluded students, others", "worker.profession in (professional, hobbyist)";
    "exclude_students", "all non-students", "not worker.profession in (undergraduate, graduate)";

    // Qualification score.
    "score_100", "worker score = 100%", "worker.score = 100";
    "score_below_100", "excluded workers scoring 100%", "worker.score < 100";

    // Score and profession.
    "exclude_students_below_80", "excluded students scoring < 80%",
        "not (worker.profession in (undergraduate, graduate) and worker.score < 80)";
    "non_students_score_100", "non-students score = 100%",
        "not worker.profession in (undergraduate, graduate) and worker.score = 100";

    // Difficulty and score.
    "exclude_d5", "excluded difficulty 5", "not answer.difficulty = 5";
    "exclude_d5_score_60_80", "excluded difficulty 5 from scores 60/80",
        "not (answer.difficulty = 5 and worker.score in (60, 80))";
    "exclude_d5_score_80_d45_score_60", "excluded difficulty 5 at 80%, 4-5 at 60%",
        "not (answer.difficulty = 5 and worker.score = 80 or answer.difficulty in (4, 5) and worker.score = 60)";
    "exclude_d45_score_60_80", "excluded difficulty 4-5 from scores 60/80",
        "not (answer.difficulty in (4, 5) and worker.score in (60, 80))";
    "least_difficult_by_score", "least difficult answers by worker score",
        "not (answer.difficulty = 5 and worker.score = 100 or answer.difficulty in (4, 5) and worker.score in (60, 80))";

    // Difficulty and profession.
    "exclude_d345_non_students_and_students", "excluded difficulty 3-5 of non-students and all students",
        "not (answer.difficulty in (3, 4, 5) and not worker.profession in (undergraduate, graduate) or worker.profession in (undergraduate, graduate))";
    "exclude_d5_grad_d45_undergrad", "excluded difficulty 5 of graduates, 4-5 of undergraduates",
        "not (answer.difficulty = 5 and worker.profession = graduate or answer.difficulty in (4, 5) and worker.profession = undergraduate)";
    "exclude_d345_students", "excluded difficulty 3-5 of students",
        "not (answer.difficulty in (3, 4, 5) and worker.profession in (undergraduate, graduate))";
    "least_difficult_by_profession", "least difficult answers by worker profession",
        "not (answer.difficulty in (4, 5) and worker.profession in (undergraduate, graduate))";
];

pub fn builtin_filters() -> &'static [BuiltinFilter] {
    CATALOG
}

pub fn builtin(name: &str) -> Option<&'static BuiltinFilter> {
    CATALOG.iter().find(|f| f.name == name)
}

/// The ten subcrowds of the standard comparison, in its row order.
pub const SUMMARY_ROWS: [&str; 10] = [
    "non_students_score_100",
    "score_100",
    "least_difficult_by_score",
    "exclude_students",
    "least_difficult_by_profession",
    "all_workers",
    "exclude_fastest",
    "exclude_conditional_gt3",
    "consensus_cells",
    "exclude_shortest_explanations",
];
