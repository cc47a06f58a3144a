//! Per-target-course training, model artifacts and evaluation.
//!
//! A model is always fitted from a [`TrainingView`], which exposes only
//! training and validation instances plus grade records from before the
//! test term. Evaluation then runs the persisted [`ModelArtifact`] on test
//! instances.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agcn::{explain, Agcn, AgcnConfig, GraphInput, EMBEDDING_DIMS};
use crate::baselines::{
    flat_features, ratings_from_records, train_bias_only, train_csmf, train_csr, BiasParams,
    CsmfConfig, CsrModel, FlatInput, MfParams, Mlp, MlpConfig,
};
use crate::domain::{Instance, Letter, TrainingView};
use crate::error::{Error, Result};
use crate::graphbuild::{
    build_for_inference, build_for_instance, build_vocabulary, CourseGraphInstance, CourseVocabulary,
    FeatureSpec,
    DEFAULT_MAX_SIZE, DEFAULT_MIN_SUPPORT,
};
use crate::metrics::{EvalReport, ExplanationRow};
use crate::train::{fit, mean_abs_error, TrainOptions};

pub const ARTIFACT_FORMAT: &str = "gradegraph-model/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Agcn,
    Bo,
    Csmf,
    Csr,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Agcn,
        ModelKind::Bo,
        ModelKind::Csmf,
        ModelKind::Csr,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Agcn => "agcn",
            ModelKind::Bo => "bo",
            ModelKind::Csmf => "csmf",
            ModelKind::Csr => "csr",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything that shapes a training run besides the data and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub agcn: AgcnConfig,
    pub features: FeatureSpec,
    pub mlp: MlpConfig,
    pub csmf: CsmfConfig,
    /// Ridge / bias regularization.
    pub reg: f64,
    pub train: TrainOptions,
    pub min_support: f64,
    pub max_vocabulary: usize,
    pub min_instances: usize,
    /// Try every width in [`EMBEDDING_DIMS`] and keep the validation best.
    pub sweep_dims: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            agcn: AgcnConfig::default(),
            features: FeatureSpec::default(),
            mlp: MlpConfig::default(),
            csmf: CsmfConfig::default(),
            reg: 0.001,
            train: TrainOptions::default(),
            min_support: DEFAULT_MIN_SUPPORT,
            max_vocabulary: DEFAULT_MAX_SIZE,
            min_instances: 20,
            sweep_dims: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelBody {
    Agcn { model: Agcn },
    Bo { params: BiasParams },
    Csmf { params: MfParams },
    Csr { model: CsrModel },
    Mlp { model: Mlp },
}

impl ModelBody {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelBody::Agcn { .. } => ModelKind::Agcn,
            ModelBody::Bo { .. } => ModelKind::Bo,
            ModelBody::Csmf { .. } => ModelKind::Csmf,
            ModelBody::Csr { .. } => ModelKind::Csr,
            ModelBody::Mlp { .. } => ModelKind::Mlp,
        }
    }
}

/// Persisted model for one target course.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub target_course: String,
    pub test_term: u32,
    pub seed: u64,
    pub vocabulary: CourseVocabulary,
    pub features: FeatureSpec,
    pub validation_mae: Option<f64>,
    pub body: ModelBody,
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        self.body.kind()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: ModelArtifact =
            Error::parse_json("model artifact", text)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported artifact format '{}'",
                a.format
            )));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn takes_part(&self, inst: &Instance) -> bool {
        inst.history()
            .iter()
            .any(|e| self.vocabulary.position(&e.course_id).is_some())
    }

    /// Clamped prediction, or `None` when the student took no vocabulary
    /// course and the instance is out of scope for this model.
    pub fn predict(&self, inst: &Instance) -> Result<Option<f64>> {
        if !self.takes_part(inst) {
            return Ok(None);
        }
        let value = match &self.body {
            ModelBody::Agcn { model } => {
                let g = build_for_inference(inst, &self.vocabulary, self.features)?;
                model.predict(&g)?.grade
            }
            ModelBody::Bo { params } => params.predict(&inst.student_id, &self.target_course),
            ModelBody::Csmf { params } => params.predict(&inst.student_id, &self.target_course),
            ModelBody::Csr { model } => {
                model.predict(&flat_features(inst.history(), &self.vocabulary))
            }
            ModelBody::Mlp { model } => {
                model.predict(&flat_features(inst.history(), &self.vocabulary))?
            }
        };
        Ok(Some(value))
    }

    /// Attention explanation for an AGCN artifact on a prebuilt graph. The
    /// true grade is shown when the graph carries one.
    pub fn explain(&self, g: &CourseGraphInstance, top_k: usize) -> Result<ExplanationRow> {
        let ModelBody::Agcn { model } = &self.body else {
            return Err(Error::Usage(format!(
                "explanations need an agcn model, not {}",
                self.kind()
            )));
        };
        let p = model.predict(g)?;
        Ok(ExplanationRow {
            student: g.student_id.clone(),
            target_course: self.target_course.clone(),
            true_grade: g.truth,
            predicted_grade: Letter::nearest(p.grade),
            courses: explain(&p, &self.vocabulary, g, top_k),
        })
    }
}

/// Predictions and truths for every in-scope instance.
pub fn predict_all<'a>(
    artifact: &ModelArtifact,
    instances: impl IntoIterator<Item = &'a Instance>,
) -> Result<(Vec<Letter>, Vec<f64>)> {
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    for inst in instances {
        if let Some(p) = artifact.predict(inst)? {
            truths.push(inst.truth());
            preds.push(p);
        }
    }
    Ok((truths, preds))
}

pub fn evaluate<'a>(
    artifact: &ModelArtifact,
    instances: impl IntoIterator<Item = &'a Instance>,
) -> Result<EvalReport> {
    let (truths, preds) = predict_all(artifact, instances)?;
    if truths.is_empty() {
        return Err(Error::Validation(format!(
            "no evaluable instances for {}",
            artifact.target_course
        )));
    }
    EvalReport::compute(artifact.kind().name(), &artifact.target_course, &truths, &preds)
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub artifact: ModelArtifact,
    pub log: String,
}

fn in_scope<'a>(instances: &[&'a Instance], vocab: &CourseVocabulary) -> Vec<&'a Instance> {
    instances
        .iter()
        .copied()
        .filter(|i| i.history().iter().any(|e| vocab.position(&e.course_id).is_some()))
        .collect()
}

/// Fits one model for `view.target_course`.
pub fn train_model(
    kind: ModelKind,
    view: &TrainingView<'_>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let target = view.target_course.as_str();
    if view.train.len() < config.min_instances {
        return Err(Error::Validation(format!(
            "{target} has {} training instances; at least {} are required",
            view.train.len(),
            config.min_instances
        )));
    }
    let vocab = build_vocabulary(&view.train, target, config.min_support, config.max_vocabulary)?;
    let train = in_scope(&view.train, &vocab);
    let validation = in_scope(&view.validation, &vocab);
    let mut log = String::new();
    let _ = writeln!(
        log,
        "target {target} model {kind} seed {seed} train {} validation {} vocabulary {}",
        train.len(),
        validation.len(),
        vocab.len()
    );

    let (body, validation_mae) = match kind {
        ModelKind::Agcn => {
            let to_inputs = |set: &[&Instance]| -> Result<Vec<GraphInput>> {
                set.iter()
                    .map(|i| GraphInput::from_instance(&build_for_instance(i, &vocab, config.features)?))
                    .collect()
            };
            let train_in = to_inputs(&train)?;
            let val_in = to_inputs(&validation)?;
            let dims: Vec<usize> = if config.sweep_dims {
                EMBEDDING_DIMS.to_vec()
            } else {
                vec![config.agcn.embedding_dim]
            };
            let mut best: Option<(f64, Agcn)> = None;
            for dim in dims {
                let agcn_config = if config.sweep_dims {
                    AgcnConfig {
                        embedding_dim: dim,
                        attention_hidden: dim,
                        head_hidden: dim,
                        ..config.agcn
                    }
                } else {
                    config.agcn
                };
                let mut model = Agcn::new(agcn_config, config.features.width(), seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let outcome = fit(&mut model, &train_in, &val_in, &config.train, &mut rng)?;
                log.push_str(&outcome.log);
                let val = mean_abs_error(&model, &val_in)?;
                let _ = writeln!(log, "dim {dim} val_mae {val:.6} best_epoch {}", outcome.best_epoch);
                if best.as_ref().is_none_or(|(b, _)| val < *b || b.is_nan()) {
                    best = Some((val, model));
                }
            }
            let (val, model) = best.expect("at least one dimension");
            (ModelBody::Agcn { model }, val)
        }
        ModelKind::Mlp => {
            let to_inputs = |set: &[&Instance]| -> Vec<FlatInput> {
                set.iter()
                    .map(|i| FlatInput::new(&flat_features(i.history(), &vocab), i.true_grade()))
                    .collect()
            };
            let train_in = to_inputs(&train);
            let val_in = to_inputs(&validation);
            let widths: Vec<Option<usize>> = if config.sweep_dims {
                EMBEDDING_DIMS.iter().map(|&d| Some(d)).collect()
            } else {
                vec![None]
            };
            let mut best: Option<(f64, Mlp)> = None;
            for width in widths {
                let mut mlp_config = config.mlp.clone();
                if let Some(w) = width {
                    mlp_config.hidden = vec![w];
                }
                let mut model = Mlp::new(mlp_config.clone(), 2 * vocab.len(), seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let outcome = fit(&mut model, &train_in, &val_in, &config.train, &mut rng)?;
                log.push_str(&outcome.log);
                let val = mean_abs_error(&model, &val_in)?;
                let _ = writeln!(
                    log,
                    "hidden {:?} val_mae {val:.6} best_epoch {}",
                    mlp_config.hidden, outcome.best_epoch
                );
                if best.as_ref().is_none_or(|(b, _)| val < *b || b.is_nan()) {
                    best = Some((val, model));
                }
            }
            let (val, model) = best.expect("at least one width");
            (ModelBody::Mlp { model }, val)
        }
        ModelKind::Csr => {
            let xs: Vec<Vec<f64>> = train.iter().map(|i| flat_features(i.history(), &vocab)).collect();
            let ys: Vec<f64> = train.iter().map(|i| i.true_grade()).collect();
            let model = train_csr(&xs, &ys, config.reg)?;
            let val = flat_mae(&validation, &vocab, |x| Ok(model.predict(x)))?;
            let _ = writeln!(log, "reg {} val_mae {val:.6}", config.reg);
            (ModelBody::Csr { model }, val)
        }
        ModelKind::Bo => {
            let validation_term = view.test_term - 1;
            let early = train_bias_only(&ratings_from_records(view.records_before(validation_term)), config.reg);
            let val = factor_mae(&validation, |s| early.predict(s, target));
            let _ = writeln!(log, "reg {} val_mae {val:.6}", config.reg);
            let params = train_bias_only(&ratings_from_records(view.records_before(view.test_term)), config.reg);
            (ModelBody::Bo { params }, val)
        }
        ModelKind::Csmf => {
            let validation_term = view.test_term - 1;
            let early_ratings = ratings_from_records(view.records_before(validation_term));
            let dims: Vec<usize> = if config.sweep_dims {
                EMBEDDING_DIMS.to_vec()
            } else {
                vec![config.csmf.latent_dim]
            };
            let mut best: Option<(f64, usize)> = None;
            for dim in dims {
                let cfg = CsmfConfig {
                    latent_dim: dim,
                    ..config.csmf.clone()
                };
                let early = train_csmf(&early_ratings, &cfg, seed);
                let val = factor_mae(&validation, |s| early.predict(s, target));
                let _ = writeln!(log, "dim {dim} val_mae {val:.6}");
                if best.is_none_or(|(b, _)| val < b || b.is_nan()) {
                    best = Some((val, dim));
                }
            }
            let (val, dim) = best.expect("at least one dimension");
            let cfg = CsmfConfig {
                latent_dim: dim,
                ..config.csmf.clone()
            };
            let params = train_csmf(&ratings_from_records(view.records_before(view.test_term)), &cfg, seed);
            (ModelBody::Csmf { params }, val)
        }
    };

    Ok(TrainedModel {
        artifact: ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            target_course: target.to_string(),
            test_term: view.test_term,
            seed,
            vocabulary: vocab,
            features: config.features,
            validation_mae: validation_mae.is_finite().then_some(validation_mae),
            body,
        },
        log,
    })
}

fn flat_mae(
    set: &[&Instance],
    vocab: &CourseVocabulary,
    predict: impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for i in set {
        total += (predict(&flat_features(i.history(), vocab))? - i.true_grade()).abs();
    }
    Ok(total / set.len() as f64)
}

fn factor_mae(set: &[&Instance], predict: impl Fn(&str) -> f64) -> f64 {
    if set.is_empty() {
        return f64::NAN;
    }
    set.iter()
        .map(|i| (predict(&i.student_id) - i.true_grade()).abs())
        .sum::<f64>()
        / set.len() as f64
}
