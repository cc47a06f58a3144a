//! Synthetic-program experiment: train every model kind on every target
//! course, compare pooled test MAE, and score AGCN attention against the
//! generator's planted prerequisites.

use std::collections::BTreeMap;

use crate::domain::{chronological_split, Dataset, Split};
use crate::error::Result;
use crate::graphbuild::build_for_inference;
use crate::metrics::EvalReport;
use crate::pipeline::{predict_all, train_model, ModelArtifact, ModelBody, ModelKind, PipelineConfig};
use crate::synth::PlantedTruth;

/// How well attention lines up with the planted causes on test instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Faithfulness {
    pub instances: usize,
    /// Mean attention mass on planted prerequisite nodes.
    pub mean_planted_mass: f64,
    /// Mean of `planted / vocabulary size`, the uniform-attention mass.
    pub mean_uniform_mass: f64,
    /// Mean fraction of planted causes found among the top-3 nodes.
    pub top3_recall: f64,
}

impl Faithfulness {
    pub fn lift(&self) -> f64 {
        self.mean_planted_mass / self.mean_uniform_mass
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub test_term: u32,
    pub courses: Vec<String>,
    /// Per-course artifacts, keyed by model kind.
    pub artifacts: BTreeMap<ModelKind, Vec<ModelArtifact>>,
    pub pooled: BTreeMap<ModelKind, EvalReport>,
    pub per_course: BTreeMap<ModelKind, Vec<EvalReport>>,
    pub faithfulness: Option<Faithfulness>,
}

impl ExperimentOutcome {
    pub fn mae(&self, kind: ModelKind) -> f64 {
        self.pooled[&kind].mae
    }
}

/// Courses with enough training instances to fit a model.
pub fn eligible_courses(split: &Split, config: &PipelineConfig) -> Vec<String> {
    split
        .target_courses()
        .into_iter()
        .filter(|c| split.training_view(c).train.len() >= config.min_instances)
        .collect()
}

/// Trains `kinds` on every eligible course of `data` with the last term held
/// out. Courses train in parallel; results do not depend on thread timing.
pub fn run(
    data: &Dataset,
    truth: Option<&PlantedTruth>,
    kinds: &[ModelKind],
    config: &PipelineConfig,
    seed: u64,
) -> Result<ExperimentOutcome> {
    let test_term = data.term_count();
    let split = chronological_split(data, test_term)?;
    let courses = eligible_courses(&split, config);

    let jobs: Vec<(ModelKind, &String)> = kinds
        .iter()
        .flat_map(|&k| courses.iter().map(move |c| (k, c)))
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let mut results: Vec<Option<Result<ModelArtifact>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results.chunks_mut(jobs.len().div_ceil(threads).max(1)).collect();
        let mut start = 0;
        for chunk in chunks {
            let begin = start;
            start += chunk.len();
            let jobs = &jobs;
            let split = &split;
            scope.spawn(move || {
                for (offset, slot) in chunk.iter_mut().enumerate() {
                    let (kind, course) = jobs[begin + offset];
                    let view = split.training_view(course);
                    *slot = Some(train_model(kind, &view, config, seed).map(|t| t.artifact));
                }
            });
        }
    });

    let mut artifacts: BTreeMap<ModelKind, Vec<ModelArtifact>> = BTreeMap::new();
    for ((kind, _), result) in jobs.iter().zip(results) {
        artifacts
            .entry(*kind)
            .or_default()
            .push(result.expect("every job ran")?);
    }

    let mut pooled = BTreeMap::new();
    let mut per_course = BTreeMap::new();
    for (kind, list) in &artifacts {
        let mut all_truths = Vec::new();
        let mut all_preds = Vec::new();
        let mut reports = Vec::new();
        for artifact in list {
            let (truths, preds) = predict_all(artifact, split.test_instances(&artifact.target_course))?;
            if truths.is_empty() {
                continue;
            }
            reports.push(EvalReport::compute(kind.name(), &artifact.target_course, &truths, &preds)?);
            all_truths.extend(truths);
            all_preds.extend(preds);
        }
        pooled.insert(*kind, EvalReport::compute(kind.name(), "pooled", &all_truths, &all_preds)?);
        per_course.insert(*kind, reports);
    }

    let faithfulness = match (truth, artifacts.get(&ModelKind::Agcn)) {
        (Some(truth), Some(list)) => Some(attention_faithfulness(list, &split, truth)?),
        _ => None,
    };

    Ok(ExperimentOutcome {
        test_term,
        courses,
        artifacts,
        pooled,
        per_course,
        faithfulness,
    })
}

/// Scores attention on every test instance whose grade had planted causes.
pub fn attention_faithfulness(
    artifacts: &[ModelArtifact],
    split: &Split,
    truth: &PlantedTruth,
) -> Result<Faithfulness> {
    let mut out = Faithfulness::default();
    for artifact in artifacts {
        let ModelBody::Agcn { model } = &artifact.body else {
            continue;
        };
        for inst in split.test_instances(&artifact.target_course) {
            let Some(cause) = truth.lookup(&inst.student_id, &artifact.target_course) else {
                continue;
            };
            let planted: Vec<usize> = cause
                .prerequisites
                .iter()
                .filter_map(|p| artifact.vocabulary.position(&p.course))
                .collect();
            if planted.is_empty() || artifact.predict(inst)?.is_none() {
                continue;
            }
            let g = build_for_inference(inst, &artifact.vocabulary, artifact.features)?;
            let alpha = model.predict(&g)?.attention;
            let mut order: Vec<usize> = (0..alpha.len()).collect();
            order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
            let top3 = &order[..order.len().min(3)];
            out.instances += 1;
            out.mean_planted_mass += planted.iter().map(|&i| alpha[i]).sum::<f64>();
            out.mean_uniform_mass += planted.len() as f64 / alpha.len() as f64;
            out.top3_recall +=
                planted.iter().filter(|i| top3.contains(i)).count() as f64 / planted.len() as f64;
        }
    }
    if out.instances > 0 {
        let n = out.instances as f64;
        out.mean_planted_mass /= n;
        out.mean_uniform_mass /= n;
        out.top3_recall /= n;
    }
    Ok(out)
}
