//! Command-line front end: `generate`, `train`, `evaluate` and `explain`.
//!
//! Every flag may also be supplied through `--config FILE`, a JSON object
//! whose keys are the flag names in snake case plus an optional `pipeline`
//! object of model hyperparameters. Flags on the command line win.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::agcn::AgcnConfig;
use crate::domain::{chronological_split, Dataset, Letter};
use crate::error::{Error, Result};
use crate::graphbuild::build_instance;
use crate::metrics::{render_explanations, render_text, EvalReport, ExplanationRow};
use crate::pipeline::{predict_all, train_model, ModelArtifact, ModelKind, PipelineConfig};
use crate::synth::{generate, ProgramSpec};

#[derive(Debug, Parser)]
#[command(name = "gradegraph", version, about = "Next-term grade prediction with attention GCNs")]
pub struct Cli {
    /// JSON file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic program: grades.csv and truth.json
    Generate(GenerateArgs),
    /// Train one model per target course
    Train(TrainArgs),
    /// Score trained models on the test term
    Evaluate(EvaluateArgs),
    /// Show attention-based explanations from an AGCN model
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Program specification JSON (defaults to the built-in layered program)
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub students: Option<usize>,
    /// Overrides the seed in the program file
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// A course id or `all`
    #[arg(long)]
    pub target: Option<String>,
    /// agcn | bo | csmf | csr | mlp
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the last term in the data
    #[arg(long)]
    pub test_term: Option<u32>,
    /// Embedding width (AGCN), hidden width (MLP) or latent dimension (CSMF)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Select the width from {8,12,16,20,32,64} on validation MAE
    #[arg(long)]
    pub sweep_dim: bool,
    /// Directory for artifacts and training logs
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Term to evaluate; defaults to the artifact's test term
    #[arg(long)]
    pub test_term: Option<u32>,
    /// Directory holding artifacts; reports are written here too
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Permit evaluation on a term the model was trained on
    #[arg(long)]
    pub allow_train_eval: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Explain one student; all test-term students otherwise
    #[arg(long)]
    pub student: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub test_term: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown model kind '{s}' (agcn|bo|csmf|csr|mlp)")))
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub test_term: Option<u32>,
    pub dim: Option<usize>,
    pub sweep_dim: Option<bool>,
    pub out: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub students: Option<usize>,
    pub student: Option<String>,
    pub top_k: Option<usize>,
    pub allow_train_eval: Option<bool>,
    pub pipeline: Option<PipelineConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Error::parse_json(&path.display().to_string(), &text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Usage(format!("--{name} is required")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn artifact_path(dir: &Path, target: &str, kind: ModelKind) -> PathBuf {
    dir.join(format!("{target}.{kind}.json"))
}

pub fn log_path(dir: &Path, target: &str, kind: ModelKind) -> PathBuf {
    dir.join(format!("{target}.{kind}.log"))
}

pub fn report_path(dir: &Path, target: &str, kind: ModelKind) -> PathBuf {
    dir.join(format!("report.{kind}.{target}.json"))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(a, file, out),
        Command::Train(a) => cmd_train(a, file, out, err),
        Command::Evaluate(a) => cmd_evaluate(a, file, out),
        Command::Explain(a) => cmd_explain(a, file, out),
    }
}

fn cmd_generate(a: GenerateArgs, file: ConfigFile, out: &mut dyn Write) -> Result<()> {
    let mut spec = match a.spec.or(file.spec) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            ProgramSpec::from_json(&text)?
        }
        None => ProgramSpec::default(),
    };
    if let Some(seed) = a.seed.or(file.seed) {
        spec.seed = seed;
    }
    let students = a.students.or(file.students).unwrap_or(400);
    let dir = required(a.out, file.out, "out")?;
    let (data, truth) = generate(&spec, students)?;
    create_dir(&dir)?;
    data.save_csv(dir.join("grades.csv"))?;
    write_file(&dir.join("truth.json"), &truth.to_json())?;
    let _ = writeln!(
        out,
        "wrote {} students, {} enrollments, {} terms to {}",
        data.transcripts().len(),
        data.enrollment_count(),
        data.term_count(),
        dir.display()
    );
    Ok(())
}

fn resolve_test_term(flag: Option<u32>, file: Option<u32>, data: &Dataset) -> u32 {
    flag.or(file).unwrap_or_else(|| data.term_count())
}

fn check_target(data: &Dataset, target: &str) -> Result<()> {
    if data.courses().iter().any(|c| c == target) {
        Ok(())
    } else {
        Err(Error::Validation(format!("target course '{target}' does not occur in the data")))
    }
}

fn cmd_train(
    a: TrainArgs,
    file: ConfigFile,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let data = Dataset::load_csv(required(a.data, file.data, "data")?)?;
    let target = required(a.target, file.target, "target")?;
    let kind = required(a.model, file.model, "model")?;
    let seed = required(a.seed, file.seed, "seed")?;
    let dir = required(a.out, file.out, "out")?;
    let test_term = resolve_test_term(a.test_term, file.test_term, &data);
    let mut config = file.pipeline.unwrap_or_default();
    config.sweep_dims = a.sweep_dim || file.sweep_dim.unwrap_or(config.sweep_dims);
    if let Some(dim) = a.dim.or(file.dim) {
        config.agcn = AgcnConfig {
            dropout_rate: config.agcn.dropout_rate,
            l2_coeff: config.agcn.l2_coeff,
            gcn_layers: config.agcn.gcn_layers,
            ..AgcnConfig::with_dim(dim)
        };
        config.mlp.hidden = vec![dim];
        config.csmf.latent_dim = dim;
    }
    config.agcn.validate()?;

    let split = chronological_split(&data, test_term)?;
    let targets = if target == "all" {
        split.target_courses()
    } else {
        check_target(&data, &target)?;
        vec![target.clone()]
    };
    create_dir(&dir)?;
    let mut trained = 0;
    for course in &targets {
        let view = split.training_view(course);
        // A single named course goes on and fails in training with the count.
        if target == "all" && view.train.len() < config.min_instances {
            let _ = writeln!(
                err,
                "warning: skipping {course}: {} training instances (need {})",
                view.train.len(),
                config.min_instances
            );
            continue;
        }
        let model = train_model(kind, &view, &config, seed)?;
        model.artifact.save(artifact_path(&dir, course, kind))?;
        write_file(&log_path(&dir, course, kind), &model.log)?;
        let _ = writeln!(
            out,
            "{course} {kind}: validation MAE {}",
            model
                .artifact
                .validation_mae
                .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
        );
        trained += 1;
    }
    if trained == 0 {
        return Err(Error::Validation("no target course had enough training instances".into()));
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, file: ConfigFile, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load_csv(required(a.data, file.data, "data")?)?;
    let target = required(a.target, file.target, "target")?;
    let kind = required(a.model, file.model, "model")?;
    let dir = required(a.out, file.out, "out")?;
    let allow = a.allow_train_eval || file.allow_train_eval.unwrap_or(false);

    let artifacts: Vec<ModelArtifact> = if target == "all" {
        let mut found = Vec::new();
        for course in data.courses() {
            let path = artifact_path(&dir, &course, kind);
            if path.exists() {
                found.push(ModelArtifact::load(path)?);
            }
        }
        if found.is_empty() {
            return Err(Error::Validation(format!(
                "no {kind} artifacts in {}",
                dir.display()
            )));
        }
        found
    } else {
        check_target(&data, &target)?;
        vec![ModelArtifact::load(artifact_path(&dir, &target, kind))?]
    };

    let mut reports = Vec::new();
    let mut pooled_truths: Vec<Letter> = Vec::new();
    let mut pooled_preds = Vec::new();
    for artifact in &artifacts {
        let term = a.test_term.or(file.test_term).unwrap_or(artifact.test_term);
        if term < artifact.test_term && !allow {
            return Err(Error::Usage(format!(
                "term {term} precedes the test term {} of {}; the model saw it during training \
                 (pass --allow-train-eval to override)",
                artifact.test_term, artifact.target_course
            )));
        }
        let split = chronological_split(&data, term)?;
        let (truths, preds) = predict_all(artifact, split.test_instances(&artifact.target_course))?;
        if truths.is_empty() {
            continue;
        }
        let report = EvalReport::compute(kind.name(), &artifact.target_course, &truths, &preds)?;
        write_file(&report_path(&dir, &artifact.target_course, kind), &report.to_json())?;
        pooled_truths.extend(truths);
        pooled_preds.extend(preds);
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(Error::Validation("no test instances to evaluate".into()));
    }
    if reports.len() > 1 {
        let pooled = EvalReport::compute(kind.name(), "pooled", &pooled_truths, &pooled_preds)?;
        write_file(&report_path(&dir, "pooled", kind), &pooled.to_json())?;
        reports.push(pooled);
    }
    let _ = write!(out, "{}", render_text(&reports));
    Ok(())
}

fn cmd_explain(a: ExplainArgs, file: ConfigFile, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load_csv(required(a.data, file.data, "data")?)?;
    let target = required(a.target, file.target, "target")?;
    let dir = required(a.out, file.out, "out")?;
    let top_k = a.top_k.or(file.top_k).unwrap_or(5);
    check_target(&data, &target)?;
    let artifact = ModelArtifact::load(artifact_path(&dir, &target, ModelKind::Agcn))?;
    let term = a.test_term.or(file.test_term).unwrap_or(artifact.test_term);

    let students: Vec<String> = match a.student.or(file.student) {
        Some(s) => vec![s],
        None => data
            .transcripts()
            .iter()
            .filter(|t| {
                t.enrollments()
                    .iter()
                    .any(|e| e.term == term && e.course_id == target)
            })
            .map(|t| t.student_id.clone())
            .collect(),
    };
    let mut rows: Vec<ExplanationRow> = Vec::new();
    for id in &students {
        let transcript = data
            .transcript(id)
            .ok_or_else(|| Error::Validation(format!("unknown student '{id}'")))?;
        let graph = match build_instance(transcript, &artifact.vocabulary, term, artifact.features) {
            Ok(g) => g,
            Err(Error::EmptyHistory { .. }) if students.len() > 1 => continue,
            Err(e) => return Err(e),
        };
        rows.push(artifact.explain(&graph, top_k)?);
    }
    let json = serde_json::to_string_pretty(&rows).expect("explanations serialize");
    write_file(&dir.join(format!("explain.{target}.json")), &json)?;
    let _ = write!(out, "{}", render_explanations(&rows));
    Ok(())
}
