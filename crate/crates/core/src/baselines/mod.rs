//! Comparison models, each trained per target course: bias-only,
//! course-specific matrix factorization, course-specific ridge regression
//! and a multilayer perceptron.

mod bias;
mod csmf;
mod csr;
mod mlp;

pub use bias::{train_bias_only, BiasParams, Rating, BIAS_TOLERANCE};
pub use csmf::{train_csmf, CsmfConfig, MfParams};
pub use csr::{train_csr, train_csr_gradient_descent, CsrModel};
pub use mlp::{FlatInput, Mlp, MlpConfig};

use crate::domain::{normalize_grade, Enrollment, GradeRecord};
use crate::graphbuild::CourseVocabulary;

/// `[grade / 4, taken]` per vocabulary course, in vocabulary order.
/// Untaken courses contribute `(0, 0)`.
pub fn flat_features(history: &[Enrollment], vocab: &CourseVocabulary) -> Vec<f64> {
    let mut x = vec![0.0; 2 * vocab.len()];
    for e in history {
        if let Some(i) = vocab.position(&e.course_id) {
            x[2 * i] = normalize_grade(e.grade());
            x[2 * i + 1] = 1.0;
        }
    }
    x
}

pub fn ratings_from_records<'a>(records: impl IntoIterator<Item = &'a GradeRecord>) -> Vec<Rating> {
    records
        .into_iter()
        .map(|r| Rating::new(&r.student_id, &r.course_id, r.grade))
        .collect()
}
