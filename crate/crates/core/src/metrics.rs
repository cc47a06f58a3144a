//! Grade-prediction metrics and evaluation reports.
//!
//! * MAE on the 0–4 scale.
//! * PTA₀/₁/₂: percentage of predictions within 0, 1 or 2 ticks of the true
//!   letter, where a tick is one step in the eleven-letter order.
//! * F-1 for detecting at-risk students (grade at or below 2.0 by default).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agcn::ExplanationEntry;
use crate::domain::Letter;
use crate::error::{Error, Result};

pub const AT_RISK_THRESHOLD: f64 = 2.0;

pub fn mae(truths: &[f64], predictions: &[f64]) -> Result<f64> {
    check_lengths(truths.len(), predictions.len())?;
    let total: f64 = truths
        .iter()
        .zip(predictions)
        .map(|(g, p)| (g - p).abs())
        .sum();
    Ok(total / truths.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 || a != b {
        return Err(Error::Usage(format!(
            "metrics need equal nonempty inputs, got {a} and {b}"
        )));
    }
    Ok(())
}

/// Ticks between the true letter and the letter nearest the prediction.
pub fn tick_error(truth: Letter, predicted_value: f64) -> usize {
    truth.ticks(Letter::nearest(predicted_value))
}

/// `(pta0, pta1, pta2)` as percentages.
pub fn pta(truths: &[Letter], predictions: &[f64]) -> Result<[f64; 3]> {
    check_lengths(truths.len(), predictions.len())?;
    let mut within = [0usize; 3];
    for (t, &p) in truths.iter().zip(predictions) {
        let ticks = tick_error(*t, p);
        for (k, slot) in within.iter_mut().enumerate() {
            if ticks <= k {
                *slot += 1;
            }
        }
    }
    let n = truths.len() as f64;
    Ok(within.map(|c| 100.0 * c as f64 / n))
}

/// How the 2.0 boundary is treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtRiskRule {
    /// `value ≤ threshold` (letter C counts as at risk).
    #[default]
    Inclusive,
    /// `value < threshold`.
    Strict,
}

impl AtRiskRule {
    pub fn is_positive(self, value: f64, threshold: f64) -> bool {
        match self {
            AtRiskRule::Inclusive => value <= threshold,
            AtRiskRule::Strict => value < threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// 2PR / (P + R), or 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let precision = if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let recall = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

pub fn f1_at_risk(
    truths: &[f64],
    predictions: &[f64],
    threshold: f64,
    rule: AtRiskRule,
) -> Result<(f64, Confusion)> {
    check_lengths(truths.len(), predictions.len())?;
    let mut c = Confusion::default();
    for (&g, &p) in truths.iter().zip(predictions) {
        match (rule.is_positive(g, threshold), rule.is_positive(p, threshold)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok((c.f1(), c))
}

/// One explained prediction, in case-study column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub student: String,
    pub target_course: String,
    pub true_grade: Option<Letter>,
    pub predicted_grade: Letter,
    pub courses: Vec<ExplanationEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub course: String,
    pub n: usize,
    pub mae: f64,
    pub pta: [f64; 3],
    pub f1: f64,
    pub confusion: Confusion,
    #[serde(default)]
    pub explanations: Vec<ExplanationRow>,
}

impl EvalReport {
    /// Metrics over clamped predictions. `course` may be `"pooled"`.
    pub fn compute(
        model: &str,
        course: &str,
        truths: &[Letter],
        predictions: &[f64],
    ) -> Result<Self> {
        let clamped: Vec<f64> = predictions.iter().map(|p| p.clamp(0.0, 4.0)).collect();
        let values: Vec<f64> = truths.iter().map(|l| l.value()).collect();
        let (f1, confusion) =
            f1_at_risk(&values, &clamped, AT_RISK_THRESHOLD, AtRiskRule::Inclusive)?;
        Ok(Self {
            model: model.to_string(),
            course: course.to_string(),
            n: truths.len(),
            mae: mae(&values, &clamped)?,
            pta: pta(truths, &clamped)?,
            f1,
            confusion,
            explanations: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Error::parse_json("report", text)
    }
}

/// Plain-text table of one or more reports, followed by any explanations.
pub fn render_text(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<12} {:>5} {:>7} {:>7} {:>7} {:>7} {:>6}",
        "model", "course", "n", "MAE", "PTA0", "PTA1", "PTA2", "F1"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<8} {:<12} {:>5} {:>7.4} {:>7.2} {:>7.2} {:>7.2} {:>6.4}",
            r.model, r.course, r.n, r.mae, r.pta[0], r.pta[1], r.pta[2], r.f1
        );
    }
    for r in reports.iter().filter(|r| !r.explanations.is_empty()) {
        out.push('\n');
        out.push_str(&render_explanations(&r.explanations));
    }
    out
}

/// Case-study table: Target Course, True Grade, Predicted Grade, Prior
/// Courses, Grades, Attention Score.
pub fn render_explanations(rows: &[ExplanationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<13} {:<10} {:<15} {:<14} {:<6} {:>15}",
        "Target Course", "True Grade", "Predicted Grade", "Prior Courses", "Grades", "Attention Score"
    );
    for row in rows {
        let truth = row.true_grade.map_or_else(|| "-".to_string(), |l| l.to_string());
        for (i, c) in row.courses.iter().enumerate() {
            let (target, t, p) = if i == 0 {
                (row.target_course.as_str(), truth.as_str(), row.predicted_grade.symbol())
            } else {
                ("", "", "")
            };
            let _ = writeln!(
                out,
                "{:<13} {:<10} {:<15} {:<14} {:<6} {:>15.4}",
                target,
                t,
                p,
                c.course,
                c.grade_label(),
                c.score
            );
        }
    }
    out
}
