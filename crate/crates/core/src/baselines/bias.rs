use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A (student, course, grade) observation for the factor models.
#[derive(Clone, Debug, PartialEq)]
pub struct Rating {
    pub student: String,
    pub course: String,
    pub grade: f64,
}

impl Rating {
    pub fn new(student: impl Into<String>, course: impl Into<String>, grade: f64) -> Self {
        Self {
            student: student.into(),
            course: course.into(),
            grade,
        }
    }
}

/// Global, per-student and per-course biases. Unseen keys read as zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub global: f64,
    pub student: BTreeMap<String, f64>,
    pub course: BTreeMap<String, f64>,
}

impl BiasParams {
    pub fn student_bias(&self, s: &str) -> f64 {
        self.student.get(s).copied().unwrap_or(0.0)
    }

    pub fn course_bias(&self, c: &str) -> f64 {
        self.course.get(c).copied().unwrap_or(0.0)
    }

    pub fn raw(&self, student: &str, course: &str) -> f64 {
        self.global + self.student_bias(student) + self.course_bias(course)
    }

    pub fn predict(&self, student: &str, course: &str) -> f64 {
        self.raw(student, course).clamp(0.0, 4.0)
    }
}

/// Conjugate-gradient stopping point: residual norm relative to the
/// right-hand side.
pub const BIAS_TOLERANCE: f64 = 1e-12;

/// Minimizes `Σ (g − b − b_s − b_c)² + reg (Σ b_s² + Σ b_c²)`.
///
/// The objective is a sparse ridge least-squares problem, solved with
/// conjugate gradients on its normal equations. Unknowns are ordered
/// `[b, b_s…, b_c…]`; with `reg = 0` the system is singular and CG started
/// at zero returns the minimum-norm solution.
pub fn train_bias_only(ratings: &[Rating], reg: f64) -> BiasParams {
    if ratings.is_empty() {
        return BiasParams::default();
    }
    let mut students: BTreeMap<&str, usize> = BTreeMap::new();
    let mut courses: BTreeMap<&str, usize> = BTreeMap::new();
    for r in ratings {
        students.entry(&r.student).or_insert(0);
        courses.entry(&r.course).or_insert(0);
    }
    for (i, v) in students.values_mut().enumerate() {
        *v = 1 + i;
    }
    let offset = 1 + students.len();
    for (i, v) in courses.values_mut().enumerate() {
        *v = offset + i;
    }
    let p = offset + courses.len();
    let rows: Vec<(usize, usize, f64)> = ratings
        .iter()
        .map(|r| (students[r.student.as_str()], courses[r.course.as_str()], r.grade))
        .collect();

    // (AᵀA + R) x
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(s, c, _) in &rows {
            let e = x[0] + x[s] + x[c];
            out[0] += e;
            out[s] += e;
            out[c] += e;
        }
        for k in 1..p {
            out[k] += reg * x[k];
        }
    };
    let mut rhs = vec![0.0; p];
    for &(s, c, g) in &rows {
        rhs[0] += g;
        rhs[s] += g;
        rhs[c] += g;
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; p];
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut q = vec![0.0; p];
    let mut rr = dot(&r, &r);
    let stop = BIAS_TOLERANCE * BIAS_TOLERANCE * rr;
    for _ in 0..10 * p {
        if rr <= stop {
            break;
        }
        apply(&d, &mut q);
        let dq = dot(&d, &q);
        if dq <= 0.0 {
            break;
        }
        let step = rr / dq;
        for k in 0..p {
            x[k] += step * d[k];
            r[k] -= step * q[k];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for k in 0..p {
            d[k] = r[k] + beta * d[k];
        }
    }

    BiasParams {
        global: x[0],
        student: students.into_iter().map(|(s, i)| (s.to_string(), x[i])).collect(),
        course: courses.into_iter().map(|(c, i)| (c.to_string(), x[i])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_fits_exactly() {
        let p = train_bias_only(&[Rating::new("s", "c", 3.0)], 0.0);
        assert!((p.predict("s", "c") - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_grades_absorbed_by_global() {
        let ratings: Vec<Rating> = (0..5)
            .flat_map(|s| (0..3).map(move |c| Rating::new(format!("s{s}"), format!("c{c}"), 2.67)))
            .collect();
        let p = train_bias_only(&ratings, 0.001);
        assert!((p.global - 2.67).abs() < 1e-6);
        assert!((p.predict("s0", "c1") - 2.67).abs() < 1e-6);
        assert!((p.predict("new", "other") - 2.67).abs() < 1e-6);
    }

    #[test]
    fn unseen_keys_read_zero() {
        let p = train_bias_only(&[Rating::new("s", "c", 3.0), Rating::new("t", "c", 1.0)], 0.0);
        assert_eq!(p.student_bias("nobody"), 0.0);
        assert!((p.raw("nobody", "c") - (p.global + p.course_bias("c"))).abs() < 1e-15);
    }
}
