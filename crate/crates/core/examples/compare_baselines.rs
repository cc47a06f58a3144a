//! Trains every model on the default synthetic program and compares pooled
//! test-term MAE, then checks how much AGCN attention lands on the planted
//! prerequisites.
//!
//! ```text
//! cargo run --release --example compare_baselines -- [students] [seed]
//! ```

use std::time::Instant;

use gradegraph::experiment;
use gradegraph::metrics::render_text;
use gradegraph::pipeline::{ModelKind, PipelineConfig};
use gradegraph::synth::{generate, ProgramSpec};

fn main() -> gradegraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let students: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let started = Instant::now();
    let (data, truth) = generate(&ProgramSpec::default(), students)?;
    let outcome = experiment::run(&data, Some(&truth), &ModelKind::ALL, &PipelineConfig::default(), seed)?;

    println!(
        "{} students, {} target courses, test term {}",
        students,
        outcome.courses.len(),
        outcome.test_term
    );
    let pooled: Vec<_> = outcome.pooled.values().cloned().collect();
    print!("{}", render_text(&pooled));
    if let Some(f) = &outcome.faithfulness {
        println!(
            "attention: {} instances, planted mass {:.3} vs uniform {:.3} (lift {:.2}), top-3 recall {:.3}",
            f.instances,
            f.mean_planted_mass,
            f.mean_uniform_mass,
            f.lift(),
            f.top3_recall
        );
    }
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
