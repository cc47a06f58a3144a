//! Course-specific matrix factorization: biases plus a student · course
//! latent inner product, fitted by stochastic gradient descent.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bias::{BiasParams, Rating};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsmfConfig {
    pub latent_dim: usize,
    pub reg: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_scale: f64,
}

impl Default for CsmfConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            reg: 0.001,
            learning_rate: 0.01,
            epochs: 100,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    pub bias: BiasParams,
    pub latent_dim: usize,
    pub student_factors: BTreeMap<String, Vec<f64>>,
    pub course_factors: BTreeMap<String, Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MfParams {
    /// Unclamped prediction. The latent term needs both sides seen in
    /// training; otherwise only the biases contribute.
    pub fn raw(&self, student: &str, course: &str) -> f64 {
        let mut g = self.bias.raw(student, course);
        if let (Some(u), Some(v)) = (
            self.student_factors.get(student),
            self.course_factors.get(course),
        ) {
            g += dot(u, v);
        }
        g
    }

    pub fn predict(&self, student: &str, course: &str) -> f64 {
        self.raw(student, course).clamp(0.0, 4.0)
    }

    /// `Σ_r [(ĝ_r − g_r)² + reg (b_s² + b_c² + ‖u_s‖² + ‖v_c‖²)]`; the
    /// global bias is not penalized.
    pub fn objective(&self, ratings: &[Rating], reg: f64) -> f64 {
        ratings
            .iter()
            .map(|r| {
                let e = self.raw(&r.student, &r.course) - r.grade;
                let u = &self.student_factors[&r.student];
                let v = &self.course_factors[&r.course];
                e * e
                    + reg
                        * (self.bias.student_bias(&r.student).powi(2)
                            + self.bias.course_bias(&r.course).powi(2)
                            + dot(u, u)
                            + dot(v, v))
            })
            .sum()
    }

    /// Analytic gradient of [`objective`](Self::objective), in the same
    /// layout as `self`.
    pub fn gradient(&self, ratings: &[Rating], reg: f64) -> MfParams {
        let mut g = self.zeros_like();
        for r in ratings {
            self.accumulate_record_gradient(r, reg, &mut g);
        }
        g
    }

    fn zeros_like(&self) -> MfParams {
        MfParams {
            bias: BiasParams {
                global: 0.0,
                student: self.bias.student.keys().map(|k| (k.clone(), 0.0)).collect(),
                course: self.bias.course.keys().map(|k| (k.clone(), 0.0)).collect(),
            },
            latent_dim: self.latent_dim,
            student_factors: self
                .student_factors
                .keys()
                .map(|k| (k.clone(), vec![0.0; self.latent_dim]))
                .collect(),
            course_factors: self
                .course_factors
                .keys()
                .map(|k| (k.clone(), vec![0.0; self.latent_dim]))
                .collect(),
        }
    }

    fn accumulate_record_gradient(&self, r: &Rating, reg: f64, g: &mut MfParams) {
        let e = self.raw(&r.student, &r.course) - r.grade;
        let u = &self.student_factors[&r.student];
        let v = &self.course_factors[&r.course];
        g.bias.global += 2.0 * e;
        *g.bias.student.get_mut(&r.student).unwrap() +=
            2.0 * e + 2.0 * reg * self.bias.student_bias(&r.student);
        *g.bias.course.get_mut(&r.course).unwrap() +=
            2.0 * e + 2.0 * reg * self.bias.course_bias(&r.course);
        let gu = g.student_factors.get_mut(&r.student).unwrap();
        for k in 0..self.latent_dim {
            gu[k] += 2.0 * e * v[k] + 2.0 * reg * u[k];
        }
        let gv = g.course_factors.get_mut(&r.course).unwrap();
        for k in 0..self.latent_dim {
            gv[k] += 2.0 * e * u[k] + 2.0 * reg * v[k];
        }
    }

    /// Flat view of every scalar, in a fixed order, for numeric checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.bias.global];
        out.extend(self.bias.student.values());
        out.extend(self.bias.course.values());
        for u in self.student_factors.values() {
            out.extend(u);
        }
        for v in self.course_factors.values() {
            out.extend(v);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("length matches flatten()");
        self.bias.global = next();
        for v in self.bias.student.values_mut() {
            *v = next();
        }
        for v in self.bias.course.values_mut() {
            *v = next();
        }
        for u in self.student_factors.values_mut() {
            for x in u.iter_mut() {
                *x = next();
            }
        }
        for u in self.course_factors.values_mut() {
            for x in u.iter_mut() {
                *x = next();
            }
        }
    }

    /// Randomly initialized parameters covering every key in `ratings`.
    pub fn init(ratings: &[Rating], latent_dim: usize, scale: f64, seed: u64) -> MfParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale.max(f64::MIN_POSITIVE)).expect("valid scale");
        let mut p = MfParams {
            latent_dim,
            ..MfParams::default()
        };
        if !ratings.is_empty() {
            p.bias.global = ratings.iter().map(|r| r.grade).sum::<f64>() / ratings.len() as f64;
        }
        for r in ratings {
            p.bias.student.entry(r.student.clone()).or_insert(0.0);
            p.bias.course.entry(r.course.clone()).or_insert(0.0);
        }
        // Keys are visited in sorted order so initialization is reproducible.
        for k in p.bias.student.keys() {
            let u = (0..latent_dim).map(|_| normal.sample(&mut rng)).collect();
            p.student_factors.insert(k.clone(), u);
        }
        for k in p.bias.course.keys() {
            let v = (0..latent_dim).map(|_| normal.sample(&mut rng)).collect();
            p.course_factors.insert(k.clone(), v);
        }
        p
    }
}

/// SGD over shuffled records; each step follows the gradient of one
/// record's term of [`MfParams::objective`].
pub fn train_csmf(ratings: &[Rating], config: &CsmfConfig, seed: u64) -> MfParams {
    let mut p = MfParams::init(ratings, config.latent_dim, config.init_scale, seed);
    let dim = config.latent_dim;
    // Dense working copies, indexed in the maps' sorted key order.
    let student_index: BTreeMap<&str, usize> =
        p.bias.student.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let course_index: BTreeMap<&str, usize> =
        p.bias.course.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let records: Vec<(usize, usize, f64)> = ratings
        .iter()
        .map(|r| (student_index[r.student.as_str()], course_index[r.course.as_str()], r.grade))
        .collect();
    let mut global = p.bias.global;
    let mut bs: Vec<f64> = p.bias.student.values().copied().collect();
    let mut bc: Vec<f64> = p.bias.course.values().copied().collect();
    let mut us: Vec<f64> = p.student_factors.values().flatten().copied().collect();
    let mut vs: Vec<f64> = p.course_factors.values().flatten().copied().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..records.len()).collect();
    let lr = config.learning_rate;
    let reg = config.reg;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (s, c, g) = records[i];
            let u = &mut us[s * dim..(s + 1) * dim];
            let v = &mut vs[c * dim..(c + 1) * dim];
            let e = global + bs[s] + bc[c] + dot(u, v) - g;
            global -= lr * 2.0 * e;
            bs[s] -= lr * (2.0 * e + 2.0 * reg * bs[s]);
            bc[c] -= lr * (2.0 * e + 2.0 * reg * bc[c]);
            for k in 0..dim {
                let (uk, vk) = (u[k], v[k]);
                u[k] -= lr * (2.0 * e * vk + 2.0 * reg * uk);
                v[k] -= lr * (2.0 * e * uk + 2.0 * reg * vk);
            }
        }
    }

    p.bias.global = global;
    for (slot, v) in p.bias.student.values_mut().zip(bs) {
        *slot = v;
    }
    for (slot, v) in p.bias.course.values_mut().zip(bc) {
        *slot = v;
    }
    for (i, u) in p.student_factors.values_mut().enumerate() {
        u.copy_from_slice(&us[i * dim..(i + 1) * dim]);
    }
    for (i, v) in p.course_factors.values_mut().enumerate() {
        v.copy_from_slice(&vs[i * dim..(i + 1) * dim]);
    }
    p
}
