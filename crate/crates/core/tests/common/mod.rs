#![allow(dead_code)]

use gradegraph::agcn::{Agcn, AgcnConfig, GraphInput};
use gradegraph::domain::{Dataset, Enrollment, Letter, Transcript};
use gradegraph::graphbuild::{normalize_adjacency, CourseGraphInstance};
use gradegraph::numerics::Matrix;
use nalgebra::{DMatrix, DVector};
use gradegraph::train::{accumulate_gradient, loss_value, TapeModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude the denominator stops shrinking. Rounding in the
/// forward pass puts roughly 1e-10 of absolute noise on a central
/// difference at `FD_STEP`, so smaller gradients are judged on absolute
/// agreement (1e-4 × floor = 1e-9).
pub const RELATIVE_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between the tape gradient of the batch loss and
/// central differences, over every scalar of every parameter.
pub fn max_gradient_error<M: TapeModel>(model: &mut M, batch: &[M::Input]) -> f64 {
    let refs: Vec<&M::Input> = batch.iter().collect();
    model.params_mut().zero_grad();
    accumulate_gradient(model, &refs, None).unwrap();
    let analytic: Vec<Matrix> = model.params().iter().map(|p| p.gradient.clone()).collect();

    let mut worst: f64 = 0.0;
    let ids: Vec<_> = model.params().ids().collect();
    for (id, grad) in ids.into_iter().zip(&analytic) {
        for k in 0..grad.len() {
            let original = model.params().get(id).value.data()[k];
            model.params_mut().get_mut(id).value.data_mut()[k] = original + FD_STEP;
            let up = loss_value(model, &refs).unwrap();
            model.params_mut().get_mut(id).value.data_mut()[k] = original - FD_STEP;
            let down = loss_value(model, &refs).unwrap();
            model.params_mut().get_mut(id).value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
    }
    worst
}

/// Moves every parameter away from its initial value (biases start at zero,
/// which would sit on ReLU kinks for all-zero rows).
pub fn jitter_params<M: TapeModel>(model: &mut M, rng: &mut ChaCha8Rng, scale: f64) {
    for p in model.params_mut().iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

/// Random symmetric 0/1 adjacency with a zero diagonal.
pub fn random_adjacency(n: usize, density: f64, rng: &mut impl Rng) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

/// Random graph instance in the standard feature layout. Roughly a third of
/// the nodes are untaken (all-zero rows).
pub fn random_graph(n: usize, rng: &mut impl Rng) -> CourseGraphInstance {
    let mut taken: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    taken[rng.gen_range(0..n)] = true;
    let mut adjacency = random_adjacency(n, 0.5, rng);
    for i in 0..n {
        for j in 0..n {
            if !(taken[i] && taken[j]) {
                adjacency.set(i, j, 0.0);
            }
        }
    }
    let mut features = Matrix::zeros(n, 2);
    let mut grades = vec![None; n];
    for i in 0..n {
        if taken[i] {
            let letter = Letter::ALL[rng.gen_range(0..Letter::ALL.len())];
            features.set(i, 0, letter.value() / 4.0);
            features.set(i, 1, 1.0);
            grades[i] = Some(letter);
        }
    }
    CourseGraphInstance {
        student_id: "s".into(),
        target_course: "T".into(),
        target_term: 9,
        adjacency,
        features,
        grades,
        truth: Some(Letter::ALL[rng.gen_range(0..Letter::ALL.len())]),
    }
}

pub fn graph_input(g: &CourseGraphInstance) -> GraphInput {
    GraphInput::from_instance(g).unwrap()
}

pub fn small_agcn(dim: usize, seed: u64) -> Agcn {
    let config = AgcnConfig {
        dropout_rate: 0.0,
        ..AgcnConfig::with_dim(dim)
    };
    Agcn::new(config, 2, seed).unwrap()
}

pub fn propagation(a: &Matrix) -> Matrix {
    normalize_adjacency(a).unwrap()
}

/// Dataset from `(student, course, term, letter)` rows.
pub fn dataset(rows: &[(&str, &str, u32, Letter)]) -> Dataset {
    let mut by_student: std::collections::BTreeMap<&str, Vec<Enrollment>> = Default::default();
    for &(s, c, t, l) in rows {
        by_student.entry(s).or_default().push(Enrollment::new(c, t, l));
    }
    Dataset::new(
        by_student
            .into_iter()
            .map(|(s, e)| Transcript::new(s, e))
            .collect(),
    )
    .unwrap()
}

/// Least squares through an SVD, with ridge rows appended for the
/// penalized columns.
pub fn ridge_lstsq(design: &[Vec<f64>], y: &[f64], penalized: &[bool], reg: f64) -> Vec<f64> {
    let p = design[0].len();
    let extra: Vec<usize> = (0..p).filter(|&j| penalized[j]).collect();
    let rows = design.len() + extra.len();
    let mut a = DMatrix::<f64>::zeros(rows, p);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, row) in design.iter().enumerate() {
        for j in 0..p {
            a[(i, j)] = row[j];
        }
        b[i] = y[i];
    }
    for (k, &j) in extra.iter().enumerate() {
        a[(design.len() + k, j)] = reg.sqrt();
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12).unwrap().iter().copied().collect()
}
