//! Property tests: permutation symmetry, softmax normalization, CSV
//! round trips and generator invariants.

mod common;

use common::{jitter_params, propagation, random_graph, small_agcn};
use gradegraph::domain::{Dataset, Enrollment, Letter, Transcript};
use gradegraph::graphbuild::normalize_adjacency;
use gradegraph::numerics::{softmax, Matrix};
use gradegraph::synth::{generate, ProgramSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_is_permutation_invariant(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = small_agcn(8, seed);
        jitter_params(&mut model, &mut rng, 0.3);
        let g = random_graph(n, &mut rng);
        let perm = permutation(n, seed ^ 1);
        let a = model.predict(&g).unwrap();
        let b = model.predict(&g.permuted(&perm)).unwrap();
        prop_assert!((a.raw - b.raw).abs() < 1e-9);
        // Row i of the permuted instance is row perm[i] of the original.
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((a.attention[p] - b.attention[i]).abs() < 1e-9);
            for k in 0..a.node_embeddings.cols() {
                prop_assert!((a.node_embeddings.get(p, k) - b.node_embeddings.get(i, k)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalization_commutes_with_relabeling(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_adjacency(n, 0.4, &mut rng);
        let perm = permutation(n, seed);
        let left = normalize_adjacency(&a.permute_symmetric(&perm)).unwrap();
        let right = normalize_adjacency(&a).unwrap().permute_symmetric(&perm);
        prop_assert!(left.max_abs_diff(&right) < 1e-15);
    }

    #[test]
    fn attention_sums_to_one(seed in any::<u64>(), n in 1usize..12, scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = small_agcn(6, seed);
        jitter_params(&mut model, &mut rng, scale.min(5.0));
        let g = random_graph(n, &mut rng);
        let z = model.gcn_forward(&propagation(&g.adjacency), &g.features, false, None).unwrap();
        let alpha = model.attention_forward(&z.scale(scale)).unwrap();
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(alpha.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn softmax_is_shift_invariant(values in prop::collection::vec(-50.0f64..50.0, 1..16), shift in -1e3f64..1e3) {
        let a = softmax(&Matrix::column_vector(&values));
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let b = softmax(&Matrix::column_vector(&shifted));
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_a_fixed_point(
        rows in prop::collection::vec((0usize..6, 0usize..5, 1u32..8, 0usize..11), 1..40)
    ) {
        let mut by_student: std::collections::BTreeMap<usize, Vec<Enrollment>> = Default::default();
        for (s, c, t, l) in rows {
            by_student.entry(s).or_default().push(Enrollment::new(format!("K-{c}"), t, Letter::ALL[l]));
        }
        let data = Dataset::new(
            by_student.into_iter().map(|(s, e)| Transcript::new(format!("st{s}"), e)).collect(),
        ).unwrap();
        let text = data.to_csv_string();
        let back = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        prop_assert_eq!(back.to_csv_string(), text);
        prop_assert_eq!(back.enrollment_count(), data.enrollment_count());
    }

    #[test]
    fn letter_snapping_is_idempotent(v in 0.0f64..4.0) {
        let l = Letter::nearest(v);
        prop_assert_eq!(Letter::nearest(l.value()), l);
        prop_assert!(l != Letter::APlus);
    }
}

#[test]
fn generated_programs_respect_prerequisites() {
    for seed in [1, 2, 3] {
        let spec = ProgramSpec::layered(3, 6, seed);
        let (data, truth) = generate(&spec, 80).unwrap();
        for t in data.transcripts() {
            for e in t.enrollments() {
                assert!((0.0..=4.0).contains(&e.grade()));
                let course = spec.course(&e.course_id).unwrap();
                for p in &course.prerequisites {
                    let before = t
                        .enrollments()
                        .iter()
                        .any(|x| x.course_id == p.course && x.term < e.term);
                    assert!(before, "{} took {} before {}", t.student_id, e.course_id, p.course);
                }
            }
        }
        for cause in &truth.entries {
            let t = data.transcript(&cause.student_id).unwrap();
            for p in &cause.prerequisites {
                assert!(t
                    .enrollments()
                    .iter()
                    .any(|x| x.course_id == p.course && x.term < cause.term));
            }
        }
    }
}
