//! Letter grades, transcripts, CSV ingestion and the chronological split.

pub mod audit;
mod dataset;
mod grade;
mod split;

pub use audit::AccessAudit;
pub use dataset::{Dataset, Enrollment, Transcript, CSV_HEADER};
pub use grade::{letter_to_value, value_to_nearest_letter, Letter};
pub use split::{chronological_split, GradeRecord, Instance, Split, TrainingView};

/// Model inputs use grades scaled into [0, 1].
pub fn normalize_grade(grade: f64) -> f64 {
    grade / 4.0
}
