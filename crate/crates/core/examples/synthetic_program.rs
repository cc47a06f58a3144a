//! Generates a synthetic program with planted prerequisite effects and
//! writes `grades.csv` and `truth.json`.
//!
//! ```text
//! cargo run --example synthetic_program -- [students] [out_dir]
//! ```

use gradegraph::synth::{generate, ProgramSpec};

fn main() -> gradegraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let students: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let out = args.next().map(std::path::PathBuf::from);

    let spec = ProgramSpec::default();
    println!(
        "{} courses, {} terms, base {:.2}, ability sd {:.2}, noise sd {:.2}",
        spec.courses.len(),
        spec.term_count,
        spec.base_grade,
        spec.ability_sd,
        spec.noise_sd
    );
    for c in spec.courses.iter().filter(|c| !c.prerequisites.is_empty()).take(6) {
        let pre: Vec<String> = c.prerequisites.iter().map(|p| format!("{}×{:.2}", p.course, p.weight)).collect();
        println!("  {} ← {}", c.id, pre.join(" + "));
    }

    let (data, truth) = generate(&spec, students)?;
    println!(
        "{} students, {} enrollments, {} planted causes",
        data.transcripts().len(),
        data.enrollment_count(),
        truth.entries.len()
    );
    if let Some(t) = data.transcripts().first() {
        println!("first transcript ({}):", t.student_id);
        for e in t.enrollments() {
            println!("  term {:>2} {} {}", e.term, e.course_id, e.letter);
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| gradegraph::Error::Io { path: dir.clone(), source: e })?;
        data.save_csv(dir.join("grades.csv"))?;
        std::fs::write(dir.join("truth.json"), truth.to_json())
            .map_err(|e| gradegraph::Error::Io { path: dir.join("truth.json"), source: e })?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
