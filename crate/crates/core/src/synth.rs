//! Synthetic degree programs with planted prerequisite influence.
//!
//! Each student has a latent ability and walks a layered prerequisite DAG,
//! taking courses whose prerequisites are already complete. A course grade is
//!
//! ```text
//! clip₀⁴(base + ability + Σₚ wₚ (gradeₚ − base) + κ (Σₚ wₚ (gradeₚ − base))² + noise)
//! ```
//!
//! snapped to the nearest letter. The prerequisite weights `wₚ` that produced
//! each grade are returned as [`PlantedTruth`] so explanations can be scored.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Enrollment, Letter, Transcript};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prerequisite {
    pub course: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourseSpec {
    pub id: String,
    pub level: u32,
    #[serde(default)]
    pub prerequisites: Vec<Prerequisite>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    pub courses: Vec<CourseSpec>,
    /// Last term index of the generated data.
    pub term_count: u32,
    /// Inclusive range of terms each student studies.
    pub terms_per_student: [u32; 2],
    /// Inclusive range of courses taken per term.
    pub courses_per_term: [usize; 2],
    pub base_grade: f64,
    pub ability_mean: f64,
    pub ability_sd: f64,
    pub noise_sd: f64,
    /// Coefficient of the squared prerequisite term; 0 keeps grades linear.
    #[serde(default)]
    pub squared_coeff: f64,
    pub seed: u64,
}

impl Default for ProgramSpec {
    fn default() -> Self {
        Self::layered(3, 8, 42)
    }
}

impl ProgramSpec {
    /// `levels × per_level` courses; each course above the first level gets
    /// 2–3 prerequisites from the level below.
    pub fn layered(levels: u32, per_level: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let mut courses = Vec::new();
        for level in 1..=levels {
            for k in 1..=per_level {
                let id = format!("C-{level}{k:02}");
                let prerequisites = if level == 1 {
                    Vec::new()
                } else {
                    let below: Vec<usize> = (1..=per_level).collect();
                    let count = rng.gen_range(2..=3usize).min(per_level);
                    let mut picks: Vec<usize> =
                        below.choose_multiple(&mut rng, count).copied().collect();
                    picks.sort_unstable();
                    let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.5..1.0)).collect();
                    let total_weight = rng.gen_range(0.75..0.95);
                    let sum: f64 = raw.iter().sum();
                    picks
                        .into_iter()
                        .zip(raw)
                        .map(|(p, w)| Prerequisite {
                            course: format!("C-{}{p:02}", level - 1),
                            weight: total_weight * w / sum,
                        })
                        .collect()
                };
                courses.push(CourseSpec {
                    id,
                    level,
                    prerequisites,
                });
            }
        }
        Self {
            courses,
            term_count: 10,
            terms_per_student: [6, 6],
            courses_per_term: [3, 4],
            base_grade: 2.8,
            ability_mean: 0.0,
            ability_sd: 0.4,
            noise_sd: 0.3,
            squared_coeff: 0.0,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProgramSpec =
            Error::parse_json("program spec", text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn course(&self, id: &str) -> Option<&CourseSpec> {
        self.courses.iter().find(|c| c.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<&str> = self.courses.iter().map(|c| c.id.as_str()).collect();
        if ids.len() != self.courses.len() {
            return Err(Error::Validation("duplicate course id in program".into()));
        }
        for c in &self.courses {
            let mut total = 0.0;
            for p in &c.prerequisites {
                if !ids.contains(p.course.as_str()) {
                    return Err(Error::Validation(format!(
                        "{} lists unknown prerequisite {}",
                        c.id, p.course
                    )));
                }
                if p.weight.is_nan() || p.weight < 0.0 {
                    return Err(Error::Validation(format!(
                        "negative weight on {} → {}",
                        p.course, c.id
                    )));
                }
                total += p.weight;
            }
            if total > 1.0 + 1e-12 {
                return Err(Error::Validation(format!(
                    "prerequisite weights of {} sum to {total} > 1",
                    c.id
                )));
            }
        }
        self.topological_order()?;
        let [tmin, tmax] = self.terms_per_student;
        let [cmin, cmax] = self.courses_per_term;
        if tmin == 0 || tmin > tmax || cmin == 0 || cmin > cmax {
            return Err(Error::Validation("empty or inverted student ranges".into()));
        }
        if self.term_count < 2 {
            return Err(Error::Validation("term_count must be ≥ 2".into()));
        }
        if !(self.ability_sd >= 0.0 && self.noise_sd >= 0.0) {
            return Err(Error::Validation("standard deviations must be ≥ 0".into()));
        }
        Ok(())
    }

    fn topological_order(&self) -> Result<Vec<&str>> {
        let mut indegree: HashMap<&str, usize> = HashMap::new();
        let mut dependents: HashMap<&str, Vec<&str>> = HashMap::new();
        for c in &self.courses {
            indegree.entry(&c.id).or_insert(0);
            for p in &c.prerequisites {
                *indegree.entry(&c.id).or_insert(0) += 1;
                dependents.entry(&p.course).or_default().push(&c.id);
            }
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&c, _)| c)
            .collect();
        ready.sort_unstable();
        let mut order = Vec::new();
        while let Some(c) = ready.pop() {
            order.push(c);
            for &d in dependents.get(c).map(Vec::as_slice).unwrap_or_default() {
                let e = indegree.get_mut(d).expect("known course");
                *e -= 1;
                if *e == 0 {
                    ready.push(d);
                }
            }
        }
        if order.len() != self.courses.len() {
            return Err(Error::Validation("prerequisite graph has a cycle".into()));
        }
        Ok(order)
    }
}

/// Generating prerequisites of one (student, course) enrollment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedCause {
    pub student_id: String,
    pub course: String,
    pub term: u32,
    pub prerequisites: Vec<Prerequisite>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub entries: Vec<PlantedCause>,
}

impl PlantedTruth {
    pub fn lookup(&self, student: &str, course: &str) -> Option<&PlantedCause> {
        self.entries
            .binary_search_by(|e| (e.student_id.as_str(), e.course.as_str()).cmp(&(student, course)))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Error::parse_json("planted truth", text)
    }
}

pub fn generate(spec: &ProgramSpec, n_students: usize) -> Result<(Dataset, PlantedTruth)> {
    spec.validate()?;
    let level: HashMap<&str, u32> = spec.courses.iter().map(|c| (c.id.as_str(), c.level)).collect();
    let mut transcripts = Vec::with_capacity(n_students);
    let mut truth = Vec::new();
    let width = n_students.max(1).to_string().len().max(4);

    for s in 0..n_students {
        let student_id = format!("s{s:0width$}");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s as u64 + 1);

        let ability = if spec.ability_sd > 0.0 {
            let a = Normal::new(spec.ability_mean, spec.ability_sd)
                .expect("sd ≥ 0")
                .sample(&mut rng);
            a.clamp(
                spec.ability_mean - 2.5 * spec.ability_sd,
                spec.ability_mean + 2.5 * spec.ability_sd,
            )
        } else {
            spec.ability_mean
        };
        let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("sd ≥ 0");

        let start = rng.gen_range(1..spec.term_count);
        let span = rng.gen_range(spec.terms_per_student[0]..=spec.terms_per_student[1]);
        let end = (start + span - 1).min(spec.term_count);

        let mut taken: BTreeMap<&str, (u32, f64)> = BTreeMap::new();
        let mut enrollments = Vec::new();
        for term in start..=end {
            let mut eligible: Vec<(f64, &CourseSpec)> = spec
                .courses
                .iter()
                .filter(|c| !taken.contains_key(c.id.as_str()))
                .filter(|c| {
                    c.prerequisites
                        .iter()
                        .all(|p| taken.get(p.course.as_str()).is_some_and(|(t, _)| *t < term))
                })
                .map(|c| (f64::from(level[c.id.as_str()]) + rng.gen_range(0.0..1.5), c))
                .collect();
            eligible.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
            let k = rng.gen_range(spec.courses_per_term[0]..=spec.courses_per_term[1]);

            let mut this_term = Vec::new();
            for (_, course) in eligible.into_iter().take(k) {
                let influence: f64 = course
                    .prerequisites
                    .iter()
                    .map(|p| p.weight * (taken[p.course.as_str()].1 - spec.base_grade))
                    .sum();
                let eps = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let latent = spec.base_grade
                    + ability
                    + influence
                    + spec.squared_coeff * influence * influence
                    + eps;
                let letter = Letter::nearest(latent.clamp(0.0, 4.0));
                this_term.push((course, letter));
            }
            for (course, letter) in this_term {
                taken.insert(&course.id, (term, letter.value()));
                enrollments.push(Enrollment::new(&course.id, term, letter));
                if !course.prerequisites.is_empty() {
                    truth.push(PlantedCause {
                        student_id: student_id.clone(),
                        course: course.id.clone(),
                        term,
                        prerequisites: course.prerequisites.clone(),
                    });
                }
            }
        }
        transcripts.push(Transcript::new(student_id, enrollments));
    }
    truth.sort_by(|a, b| (&a.student_id, &a.course).cmp(&(&b.student_id, &b.course)));
    Ok((Dataset::new(transcripts)?, PlantedTruth { entries: truth }))
}
