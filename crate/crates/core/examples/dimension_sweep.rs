//! Selects the AGCN embedding width from {8, 12, 16, 20, 32, 64} by
//! validation MAE, then reports test MAE for the chosen width.
//!
//! ```text
//! cargo run --release --example dimension_sweep -- [course]
//! ```

use gradegraph::domain::chronological_split;
use gradegraph::pipeline::{evaluate, train_model, ModelBody, ModelKind, PipelineConfig};
use gradegraph::synth::{generate, ProgramSpec};

fn main() -> gradegraph::Result<()> {
    let course = std::env::args().nth(1).unwrap_or_else(|| "C-202".to_string());
    let (data, _) = generate(&ProgramSpec::default(), 400)?;
    let split = chronological_split(&data, data.term_count())?;

    let config = PipelineConfig {
        sweep_dims: true,
        ..PipelineConfig::default()
    };
    let trained = train_model(ModelKind::Agcn, &split.training_view(&course), &config, 7)?;
    for line in trained.log.lines().filter(|l| l.starts_with("dim ")) {
        println!("{line}");
    }
    if let ModelBody::Agcn { model } = &trained.artifact.body {
        println!("chosen width {}", model.config().embedding_dim);
    }
    let report = evaluate(&trained.artifact, split.test_instances(&course))?;
    println!("{course} test MAE {:.4} over {} students", report.mae, report.n);
    Ok(())
}
