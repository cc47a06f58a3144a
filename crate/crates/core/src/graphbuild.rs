//! Per-student course graphs for one target course.
//!
//! The node set is a fixed vocabulary of prior courses, so every student's
//! graph for the same target has the same shape. Courses taken in one term
//! are connected to every vocabulary course taken in the student's next term
//! that contains one; the result is symmetrized and normalized as
//! `D̃^{-1/2} (A + I) D̃^{-1/2}` before it enters the GCN.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{normalize_grade, Enrollment, Instance, Letter, Transcript};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.1;
pub const DEFAULT_MAX_SIZE: usize = 30;

/// Ordered prior courses forming the node set for one target course.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct CourseVocabulary {
    target_course: String,
    prior_courses: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    target_course: String,
    prior_courses: Vec<String>,
}

impl TryFrom<VocabularyRepr> for CourseVocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        CourseVocabulary::new(r.target_course, r.prior_courses)
    }
}

impl From<CourseVocabulary> for VocabularyRepr {
    fn from(v: CourseVocabulary) -> Self {
        VocabularyRepr {
            target_course: v.target_course,
            prior_courses: v.prior_courses,
        }
    }
}

impl CourseVocabulary {
    pub fn new(target_course: impl Into<String>, prior_courses: Vec<String>) -> Result<Self> {
        let target_course = target_course.into();
        if prior_courses.is_empty() {
            return Err(Error::Config(format!(
                "empty prior-course vocabulary for {target_course}"
            )));
        }
        if prior_courses.contains(&target_course) {
            return Err(Error::Config(format!(
                "{target_course} cannot be its own prior course"
            )));
        }
        let index: HashMap<String, usize> = prior_courses
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        if index.len() != prior_courses.len() {
            return Err(Error::Config("duplicate course in vocabulary".into()));
        }
        Ok(Self {
            target_course,
            prior_courses,
            index,
        })
    }

    pub fn target_course(&self) -> &str {
        &self.target_course
    }

    pub fn courses(&self) -> &[String] {
        &self.prior_courses
    }

    pub fn len(&self) -> usize {
        self.prior_courses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior_courses.is_empty()
    }

    pub fn position(&self, course: &str) -> Option<usize> {
        self.index.get(course).copied()
    }
}

/// Prior courses taken before the target by at least `min_support` of the
/// target's training students, most frequent first (ties by course id),
/// truncated to `max_size`.
pub fn build_vocabulary(
    train: &[&Instance],
    target_course: &str,
    min_support: f64,
    max_size: usize,
) -> Result<CourseVocabulary> {
    let mut courses_by_student: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for inst in train.iter().filter(|i| i.target_course == target_course) {
        let taken = courses_by_student.entry(&inst.student_id).or_default();
        for e in inst.history() {
            if e.course_id != target_course {
                taken.insert(&e.course_id);
            }
        }
    }
    if courses_by_student.is_empty() {
        return Err(Error::Config(format!(
            "no training instances for target course {target_course}"
        )));
    }
    let students = courses_by_student.len() as f64;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for taken in courses_by_student.values() {
        for c in taken {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, n)| n as f64 / students >= min_support)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    if ranked.is_empty() {
        return Err(Error::Config(format!(
            "no prior course of {target_course} reaches support {min_support}; lower min_support"
        )));
    }
    CourseVocabulary::new(
        target_course,
        ranked.into_iter().map(|(c, _)| c.to_string()).collect(),
    )
}

/// Layout of the node feature rows.
///
/// Columns are `[grade / 4, taken flag]`, optionally followed by a
/// `code_width`-long identity code: a fixed ±1 vector derived from the
/// course id and multiplied by the taken flag, so untaken rows stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub code_width: usize,
}

impl FeatureSpec {
    pub const BASE_WIDTH: usize = 2;

    pub fn width(&self) -> usize {
        Self::BASE_WIDTH + self.code_width
    }
}

/// Deterministic ±1 code for a course id (FNV-1a seeded).
pub fn course_code(course_id: &str, width: usize) -> Vec<f64> {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in course_id.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hash);
    (0..width)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseGraphInstance {
    pub student_id: String,
    pub target_course: String,
    pub target_term: u32,
    /// N×N, entries in {0, 1}, symmetric.
    pub adjacency: Matrix,
    /// N×D feature rows in vocabulary order.
    pub features: Matrix,
    /// Letter earned in each vocabulary course, `None` if not taken.
    pub grades: Vec<Option<Letter>>,
    /// Absent at inference.
    pub truth: Option<Letter>,
}

impl CourseGraphInstance {
    pub fn true_grade(&self) -> Option<f64> {
        self.truth.map(Letter::value)
    }

    pub fn node_count(&self) -> usize {
        self.grades.len()
    }

    /// Debug dump: vocabulary order, 0/1 adjacency rows and feature rows.
    pub fn debug_json(&self, vocab: &CourseVocabulary) -> serde_json::Value {
        let n = self.adjacency.rows();
        let adjacency: Vec<Vec<u8>> = (0..n)
            .map(|i| self.adjacency.row(i).iter().map(|&v| v as u8).collect())
            .collect();
        let features: Vec<&[f64]> = (0..n).map(|i| self.features.row(i)).collect();
        serde_json::json!({
            "student_id": self.student_id,
            "target_course": self.target_course,
            "target_term": self.target_term,
            "vocabulary": vocab.courses(),
            "adjacency": adjacency,
            "features": features,
        })
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CourseGraphInstance {
        CourseGraphInstance {
            adjacency: self.adjacency.permute_symmetric(perm),
            features: self.features.permute_rows(perm),
            grades: perm.iter().map(|&p| self.grades[p]).collect(),
            ..self.clone()
        }
    }
}

/// Graph of one transcript's history before `target_term`.
pub fn build_instance(
    t: &Transcript,
    vocab: &CourseVocabulary,
    target_term: u32,
    spec: FeatureSpec,
) -> Result<CourseGraphInstance> {
    let history = t.history_before(target_term);
    let truth = t
        .enrollments()
        .iter()
        .find(|e| e.term == target_term && e.course_id == vocab.target_course())
        .map(|e| e.letter);
    from_history(&t.student_id, &history, vocab, target_term, truth, spec)
}

/// Graph of a split instance, carrying its true letter.
pub fn build_for_instance(
    inst: &Instance,
    vocab: &CourseVocabulary,
    spec: FeatureSpec,
) -> Result<CourseGraphInstance> {
    from_history(
        &inst.student_id,
        inst.history(),
        vocab,
        inst.target_term(),
        Some(inst.truth()),
        spec,
    )
}

/// Like [`build_for_instance`] but without reading the true letter.
pub fn build_for_inference(
    inst: &Instance,
    vocab: &CourseVocabulary,
    spec: FeatureSpec,
) -> Result<CourseGraphInstance> {
    from_history(&inst.student_id, inst.history(), vocab, inst.target_term(), None, spec)
}

fn from_history(
    student_id: &str,
    history: &[Enrollment],
    vocab: &CourseVocabulary,
    target_term: u32,
    truth: Option<Letter>,
    spec: FeatureSpec,
) -> Result<CourseGraphInstance> {
    let n = vocab.len();
    let mut grades: Vec<Option<Letter>> = vec![None; n];
    let mut taken_term: Vec<u32> = vec![0; n];
    for e in history.iter().filter(|e| e.term < target_term) {
        if let Some(i) = vocab.position(&e.course_id) {
            // History is term-ordered, so the last write is the latest attempt.
            grades[i] = Some(e.letter);
            taken_term[i] = e.term;
        }
    }
    if grades.iter().all(Option::is_none) {
        return Err(Error::EmptyHistory {
            student: student_id.to_string(),
            target: vocab.target_course().to_string(),
        });
    }

    let mut by_term: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        if grades[i].is_some() {
            by_term.entry(taken_term[i]).or_default().push(i);
        }
    }
    let mut adjacency = Matrix::zeros(n, n);
    let groups: Vec<&Vec<usize>> = by_term.values().collect();
    for pair in groups.windows(2) {
        for &a in pair[0] {
            for &b in pair[1] {
                adjacency.set(a, b, 1.0);
                adjacency.set(b, a, 1.0);
            }
        }
    }

    let width = spec.width();
    let mut features = Matrix::zeros(n, width);
    for (i, grade) in grades.iter().enumerate() {
        if let Some(letter) = grade {
            features.set(i, 0, normalize_grade(letter.value()));
            features.set(i, 1, 1.0);
            for (k, v) in course_code(&vocab.courses()[i], spec.code_width)
                .into_iter()
                .enumerate()
            {
                features.set(i, FeatureSpec::BASE_WIDTH + k, v);
            }
        }
    }

    Ok(CourseGraphInstance {
        student_id: student_id.to_string(),
        target_course: vocab.target_course().to_string(),
        target_term,
        adjacency,
        features,
        grades,
        truth,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension {
            op: "normalize_adjacency",
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    let n = a.rows();
    let looped = a.add(&Matrix::identity(n))?;
    let inv_sqrt: Vec<f64> = looped.row_sums().iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = looped.get(i, j);
            if v != 0.0 {
                out.set(i, j, inv_sqrt[i] * v * inv_sqrt[j]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Enrollment;

    fn vocab(courses: &[&str]) -> CourseVocabulary {
        CourseVocabulary::new("T", courses.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn transcript(rows: &[(&str, u32, Letter)]) -> Transcript {
        Transcript::new(
            "s",
            rows.iter().map(|(c, t, l)| Enrollment::new(*c, *t, *l)).collect(),
        )
    }

    #[test]
    fn term_chain_edges() {
        let v = vocab(&["C1", "C2", "C3", "C4", "C5", "C6", "C7"]);
        let t = transcript(&[
            ("C1", 1, Letter::B),
            ("C2", 1, Letter::B),
            ("C3", 1, Letter::B),
            ("C4", 2, Letter::B),
            ("C5", 2, Letter::B),
            ("C6", 3, Letter::B),
            ("C7", 3, Letter::B),
            ("T", 4, Letter::B),
        ]);
        let g = build_instance(&t, &v, 4, FeatureSpec::default()).unwrap();
        let expected = [
            (0, 3),
            (0, 4),
            (1, 3),
            (1, 4),
            (2, 3),
            (2, 4),
            (3, 5),
            (3, 6),
            (4, 5),
            (4, 6),
        ];
        let mut edges = Vec::new();
        for i in 0..7 {
            for j in i + 1..7 {
                if g.adjacency.get(i, j) == 1.0 {
                    edges.push((i, j));
                }
                assert_eq!(g.adjacency.get(i, j), g.adjacency.get(j, i));
            }
            assert_eq!(g.adjacency.get(i, i), 0.0);
        }
        assert_eq!(edges, expected);
        assert_eq!(g.truth, Some(Letter::B));
    }

    #[test]
    fn gaps_between_terms_are_skipped() {
        let v = vocab(&["A", "B"]);
        let t = transcript(&[("A", 1, Letter::B), ("X", 2, Letter::B), ("B", 4, Letter::B)]);
        let g = build_instance(&t, &v, 5, FeatureSpec::default()).unwrap();
        assert_eq!(g.adjacency.get(0, 1), 1.0);
    }

    #[test]
    fn singleton_has_no_edges() {
        let v = vocab(&["A", "B", "C"]);
        let t = transcript(&[("A", 1, Letter::B)]);
        let g = build_instance(&t, &v, 2, FeatureSpec::default()).unwrap();
        assert_eq!(g.adjacency, Matrix::zeros(3, 3));
    }

    #[test]
    fn feature_rows() {
        let v = vocab(&["A", "B"]);
        let t = transcript(&[("A", 1, Letter::B)]);
        let g = build_instance(&t, &v, 2, FeatureSpec::default()).unwrap();
        assert_eq!(&g.features.row(0)[..2], &[0.75, 1.0]);
        assert!(g.features.row(1).iter().all(|&x| x == 0.0));
        assert_eq!(g.grades, vec![Some(Letter::B), None]);
    }

    #[test]
    fn failing_grade_differs_from_untaken() {
        let v = vocab(&["A", "B"]);
        let t = transcript(&[("A", 1, Letter::F)]);
        let g = build_instance(&t, &v, 2, FeatureSpec { code_width: 0 }).unwrap();
        assert_eq!(g.features.row(0), &[0.0, 1.0]);
        assert_eq!(g.features.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn target_term_and_later_ignored() {
        let v = vocab(&["A", "B"]);
        let t = transcript(&[("A", 1, Letter::B), ("B", 3, Letter::A)]);
        let g = build_instance(&t, &v, 3, FeatureSpec::default()).unwrap();
        assert_eq!(g.grades[1], None);
    }

    #[test]
    fn no_vocabulary_course_is_empty_history() {
        let v = vocab(&["A"]);
        let t = transcript(&[("Z", 1, Letter::B)]);
        assert!(matches!(
            build_instance(&t, &v, 2, FeatureSpec::default()),
            Err(Error::EmptyHistory { .. })
        ));
    }

    #[test]
    fn normalize_lone_node() {
        assert_eq!(
            normalize_adjacency(&Matrix::zeros(1, 1)).unwrap(),
            Matrix::scalar(1.0)
        );
    }

    #[test]
    fn normalize_single_edge() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let n = normalize_adjacency(&a).unwrap();
        assert!(n.max_abs_diff(&Matrix::filled(2, 2, 0.5)) < 1e-15);
    }

    #[test]
    fn normalize_rejects_non_square() {
        assert!(matches!(
            normalize_adjacency(&Matrix::zeros(2, 3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn codes_are_stable_and_distinct() {
        assert_eq!(course_code("CS-310", 8), course_code("CS-310", 8));
        assert_ne!(course_code("CS-310", 16), course_code("CS-211", 16));
        assert!(course_code("X", 5).iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn vocabulary_rejects_target_and_empty() {
        assert!(CourseVocabulary::new("T", vec!["T".into()]).is_err());
        assert!(CourseVocabulary::new("T", vec![]).is_err());
    }
}
