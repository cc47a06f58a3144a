//! Trains an attention GCN for one target course on synthetic data,
//! scores it on the held-out last term and saves the artifact.
//!
//! ```text
//! cargo run --release --example train_agcn -- [course] [out_dir]
//! ```

use gradegraph::domain::chronological_split;
use gradegraph::metrics::render_text;
use gradegraph::pipeline::{evaluate, train_model, ModelKind, PipelineConfig};
use gradegraph::synth::{generate, ProgramSpec};

fn main() -> gradegraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let course = args.next().unwrap_or_else(|| "C-201".to_string());
    let out = args.next().map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);

    let (data, _) = generate(&ProgramSpec::default(), 400)?;
    let split = chronological_split(&data, data.term_count())?;
    let view = split.training_view(&course);
    println!(
        "{course}: {} training, {} validation instances; test term {}",
        view.train.len(),
        view.validation.len(),
        split.test_term
    );

    let trained = train_model(ModelKind::Agcn, &view, &PipelineConfig::default(), 7)?;
    let epochs = trained.log.lines().filter(|l| l.starts_with("epoch ")).count();
    let summary = trained.log.lines().find(|l| l.starts_with("dim ")).unwrap_or("");
    println!("{epochs} epochs run; {summary}");
    println!("vocabulary: {}", trained.artifact.vocabulary.courses().join(" "));

    let report = evaluate(&trained.artifact, split.test_instances(&course))?;
    print!("{}", render_text(&[report]));

    let path = out.join(format!("{course}.agcn.json"));
    trained.artifact.save(&path)?;
    println!("saved {}", path.display());
    Ok(())
}
