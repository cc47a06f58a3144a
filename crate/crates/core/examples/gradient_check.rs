//! Compares tape gradients of the AGCN loss with central finite
//! differences on a small random instance.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use gradegraph::agcn::{Agcn, AgcnConfig, GraphInput};
use gradegraph::domain::{Enrollment, Letter, Transcript};
use gradegraph::graphbuild::{build_instance, CourseVocabulary, FeatureSpec};
use gradegraph::train::{accumulate_gradient, loss_value, TapeModel};

const STEP: f64 = 1e-5;

fn main() -> gradegraph::Result<()> {
    let transcript = Transcript::new(
        "s1",
        vec![
            Enrollment::new("A", 1, Letter::BPlus),
            Enrollment::new("B", 1, Letter::C),
            Enrollment::new("C", 2, Letter::AMinus),
            Enrollment::new("T", 3, Letter::B),
        ],
    );
    let vocab = CourseVocabulary::new("T", vec!["A".into(), "B".into(), "C".into(), "D".into()])?;
    let g = build_instance(&transcript, &vocab, 3, FeatureSpec::default())?;
    let input = GraphInput::from_instance(&g)?;

    let config = AgcnConfig {
        dropout_rate: 0.0,
        ..AgcnConfig::with_dim(6)
    };
    let mut model = Agcn::new(config, 2, 3)?;
    // Move biases off zero so no ReLU sits exactly on its kink.
    for p in model.params_mut().iter_mut() {
        for (i, v) in p.value.data_mut().iter_mut().enumerate() {
            *v += 0.05 * ((i % 7) as f64 - 3.5);
        }
    }

    let batch = [&input];
    model.params_mut().zero_grad();
    accumulate_gradient(&mut model, &batch, None)?;

    println!("{:<24} {:>8} {:>12}", "parameter", "entries", "max rel err");
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let grad = model.params().get(id).gradient.clone();
        let mut worst: f64 = 0.0;
        for k in 0..grad.len() {
            let original = model.params().get(id).value.data()[k];
            model.params_mut().get_mut(id).value.data_mut()[k] = original + STEP;
            let up = loss_value(&model, &batch)?;
            model.params_mut().get_mut(id).value.data_mut()[k] = original - STEP;
            let down = loss_value(&model, &batch)?;
            model.params_mut().get_mut(id).value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * STEP);
            let a = grad.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5));
        }
        println!("{:<24} {:>8} {:>12.2e}", model.params().get(id).name, grad.len(), worst);
    }
    Ok(())
}
