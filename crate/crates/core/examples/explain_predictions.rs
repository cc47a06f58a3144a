//! Explains test-term AGCN predictions by attention score, marking courses
//! the student never took with `N`.
//!
//! ```text
//! cargo run --release --example explain_predictions -- [course] [students]
//! ```

use gradegraph::domain::chronological_split;
use gradegraph::graphbuild::build_for_instance;
use gradegraph::metrics::render_explanations;
use gradegraph::pipeline::{train_model, ModelKind, PipelineConfig};
use gradegraph::synth::{generate, ProgramSpec};

fn main() -> gradegraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let course = args.next().unwrap_or_else(|| "C-301".to_string());
    let shown: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let spec = ProgramSpec::default();
    let (data, truth) = generate(&spec, 400)?;
    let split = chronological_split(&data, data.term_count())?;
    let trained = train_model(ModelKind::Agcn, &split.training_view(&course), &PipelineConfig::default(), 7)?;
    let artifact = &trained.artifact;

    let prerequisites: Vec<String> = spec
        .course(&course)
        .map(|c| c.prerequisites.iter().map(|p| format!("{} ({:.2})", p.course, p.weight)).collect())
        .unwrap_or_default();
    println!("planted prerequisites of {course}: {}", prerequisites.join(", "));

    let mut rows = Vec::new();
    for inst in split.test_instances(&course) {
        if rows.len() == shown {
            break;
        }
        if artifact.predict(inst)?.is_none() {
            continue;
        }
        let g = build_for_instance(inst, &artifact.vocabulary, artifact.features)?;
        rows.push(artifact.explain(&g, 5)?);
    }
    print!("{}", render_explanations(&rows));
    println!("({} planted causes recorded in total)", truth.entries.len());
    Ok(())
}
