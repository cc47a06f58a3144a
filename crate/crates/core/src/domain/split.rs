//! Chronological train / validation / test protocol.
//!
//! For a test term `T`, every enrollment with a non-empty history becomes a
//! prediction instance. Instances whose target term is `T` are test
//! instances, `T - 1` validation, and `≤ T - 2` training. An instance only
//! carries history strictly before its own target term.

use serde::{Deserialize, Serialize};

use super::audit;
use super::{Dataset, Enrollment, Letter};
use crate::error::{Error, Result};

/// A (student, target enrollment) pair with the history preceding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub student_id: String,
    pub target_course: String,
    target_term: u32,
    target_letter: Letter,
    history: Vec<Enrollment>,
}

impl Instance {
    pub fn new(
        student_id: impl Into<String>,
        target_course: impl Into<String>,
        target_term: u32,
        target_letter: Letter,
        history: Vec<Enrollment>,
    ) -> Self {
        Self {
            student_id: student_id.into(),
            target_course: target_course.into(),
            target_term,
            target_letter,
            history,
        }
    }

    pub fn target_term(&self) -> u32 {
        self.target_term
    }

    /// True letter in the target course.
    pub fn truth(&self) -> Letter {
        audit::touch(self.target_term);
        self.target_letter
    }

    pub fn true_grade(&self) -> f64 {
        self.truth().value()
    }

    /// Prior enrollments, one per course (latest attempt), ordered by term.
    pub fn history(&self) -> &[Enrollment] {
        if audit::active() {
            for e in &self.history {
                audit::touch(e.term);
            }
        }
        &self.history
    }
}

/// A single observed grade, used by the student × course factor models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub student_id: String,
    pub course_id: String,
    pub term: u32,
    pub grade: f64,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub test_term: u32,
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
    /// Every enrollment strictly before the test term.
    records: Vec<GradeRecord>,
}

impl Split {
    pub fn validation_term(&self) -> u32 {
        self.test_term - 1
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target courses that have at least one training instance.
    pub fn target_courses(&self) -> Vec<String> {
        let mut out: Vec<String> = self.train.iter().map(|i| i.target_course.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Everything a model for `target` may look at during fitting and
    /// model selection. Test instances are not reachable from it.
    pub fn training_view(&self, target: &str) -> TrainingView<'_> {
        TrainingView {
            target_course: target.to_string(),
            test_term: self.test_term,
            train: self.train.iter().filter(|i| i.target_course == target).collect(),
            validation: self
                .validation
                .iter()
                .filter(|i| i.target_course == target)
                .collect(),
            records: &self.records,
        }
    }

    pub fn test_instances<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a Instance> + 'a {
        self.test.iter().filter(move |i| i.target_course == target)
    }
}

/// Read access for training code: training and validation instances of one
/// target course plus grade records from before the test term.
#[derive(Clone, Debug)]
pub struct TrainingView<'a> {
    pub target_course: String,
    pub test_term: u32,
    pub train: Vec<&'a Instance>,
    pub validation: Vec<&'a Instance>,
    records: &'a [GradeRecord],
}

impl<'a> TrainingView<'a> {
    pub fn new(
        target_course: impl Into<String>,
        test_term: u32,
        train: Vec<&'a Instance>,
        validation: Vec<&'a Instance>,
        records: &'a [GradeRecord],
    ) -> Self {
        Self {
            target_course: target_course.into(),
            test_term,
            train,
            validation,
            records,
        }
    }

    /// Grade records with `term < before`; `before` is capped at the test term.
    pub fn records_before(&self, before: u32) -> Vec<&'a GradeRecord> {
        let before = before.min(self.test_term);
        let out: Vec<&GradeRecord> = self.records.iter().filter(|r| r.term < before).collect();
        if audit::active() {
            for r in &out {
                audit::touch(r.term);
            }
        }
        out
    }
}

pub fn chronological_split(d: &Dataset, test_term: u32) -> Result<Split> {
    if test_term < 3 {
        return Err(Error::Config(format!(
            "test term {test_term} leaves no training terms; it must be ≥ 3"
        )));
    }
    if test_term > d.term_count() {
        return Err(Error::Config(format!(
            "test term {test_term} is beyond the last term {} in the data",
            d.term_count()
        )));
    }
    let mut split = Split {
        test_term,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        records: Vec::new(),
    };
    for t in d.transcripts() {
        for e in t.enrollments() {
            if e.term < test_term {
                split.records.push(GradeRecord {
                    student_id: t.student_id.clone(),
                    course_id: e.course_id.clone(),
                    term: e.term,
                    grade: e.grade(),
                });
            }
            if e.term > test_term {
                continue;
            }
            let history = t.history_before(e.term);
            if history.is_empty() {
                continue;
            }
            let instance = Instance::new(&t.student_id, &e.course_id, e.term, e.letter, history);
            if e.term == test_term {
                split.test.push(instance);
            } else if e.term == test_term - 1 {
                split.validation.push(instance);
            } else {
                split.train.push(instance);
            }
        }
    }
    Ok(split)
}
