//! Next-term course grade prediction with attention-based graph
//! convolutional networks.
//!
//! A student's prior courses form a small graph: nodes are the courses of a
//! per-target vocabulary, edges join courses taken in consecutive terms, and
//! node features carry the grade earned. Stacked GCN layers embed each
//! course, an attention layer weights them, and a small MLP regresses the
//! grade in the target course. The attention weights double as an
//! explanation of which prior courses drove the prediction.
//!
//! ```no_run
//! use gradegraph::domain::{chronological_split, Dataset};
//! use gradegraph::pipeline::{evaluate, train_model, ModelKind, PipelineConfig};
//!
//! let data = Dataset::load_csv("grades.csv")?;
//! let split = chronological_split(&data, data.term_count())?;
//! let view = split.training_view("C-301");
//! let trained = train_model(ModelKind::Agcn, &view, &PipelineConfig::default(), 7)?;
//! let report = evaluate(&trained.artifact, split.test_instances("C-301"))?;
//! println!("MAE {:.3}", report.mae);
//! # Ok::<(), gradegraph::Error>(())
//! ```

pub mod agcn;
pub mod baselines;
pub mod cli;
pub mod domain;
mod error;
pub mod experiment;
pub mod graphbuild;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
