//! Builds the course graph for one transcript: the vocabulary nodes, the
//! term-to-term adjacency, the `[grade/4, taken]` features and the
//! normalized propagation matrix.
//!
//! ```text
//! cargo run --example course_graph
//! ```

use gradegraph::domain::{Enrollment, Letter, Transcript};
use gradegraph::graphbuild::{build_instance, normalize_adjacency, CourseVocabulary, FeatureSpec};
use gradegraph::numerics::Matrix;

fn print_matrix(name: &str, labels: &[String], m: &Matrix) {
    println!("{name}");
    print!("{:>6}", "");
    for l in labels {
        print!("{l:>7}");
    }
    println!();
    for (r, l) in labels.iter().enumerate() {
        print!("{l:>6}");
        for c in 0..m.cols() {
            print!("{:>7.3}", m.get(r, c));
        }
        println!();
    }
}

fn main() -> gradegraph::Result<()> {
    // Three courses in term 1, two in term 2, two in term 3, target in term 4.
    let taken = [
        ("C1", 1, Letter::A),
        ("C2", 1, Letter::BPlus),
        ("C3", 1, Letter::B),
        ("C4", 2, Letter::AMinus),
        ("C5", 2, Letter::CPlus),
        ("C6", 3, Letter::B),
        ("C7", 3, Letter::BMinus),
        ("T", 4, Letter::B),
    ];
    let transcript = Transcript::new(
        "student",
        taken.iter().map(|&(c, t, l)| Enrollment::new(c, t, l)).collect(),
    );
    let mut courses: Vec<String> = (1..=7).map(|i| format!("C{i}")).collect();
    courses.push("C8".into());
    let vocab = CourseVocabulary::new("T", courses)?;

    let g = build_instance(&transcript, &vocab, 4, FeatureSpec::default())?;
    let labels = vocab.courses().to_vec();
    print_matrix("adjacency (C8 was never taken)", &labels, &g.adjacency);
    println!();
    print_matrix("propagation D^-1/2 (A + I) D^-1/2", &labels, &normalize_adjacency(&g.adjacency)?);
    println!("\nfeatures [grade/4, taken]");
    for (r, l) in labels.iter().enumerate() {
        println!("{l:>6} {:.4} {:.0}", g.features.get(r, 0), g.features.get(r, 1));
    }
    let truth = g.truth.map_or_else(|| "-".to_string(), |l| l.to_string());
    println!("\ntarget {} in term {}, true grade {truth}", g.target_course, g.target_term);
    Ok(())
}
