//! Attention-based graph convolutional network for grade prediction.
//!
//! Forward pass for one student graph:
//!
//! ```text
//! H⁰ = F
//! Hˡ⁺¹ = ReLU(Â Hˡ Wˡ + bˡ)               (dropout on each layer output while training)
//! Z = Hᴸ
//! eᵢ = w₂ᵀ tanh(W₁ᵀ zᵢ + b₁) + b₂          (shared attention MLP per node)
//! α = softmax(e)
//! v = Σᵢ αᵢ zᵢ
//! ĝ = w₄ᵀ ReLU(W₃ᵀ v + b₃) + b₄
//! ```
//!
//! where `Â` is the normalized adjacency from
//! [`normalize_adjacency`](crate::graphbuild::normalize_adjacency).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Letter;
use crate::error::{Error, Result};
use crate::graphbuild::{normalize_adjacency, CourseGraphInstance, CourseVocabulary};
use crate::numerics::{
    check_rate, dropout_mask, glorot_uniform, Matrix, ParamId, ParamSet, ParamTensor, Tape, Var,
};
use crate::train::{bind_all, TapeModel};

pub const EMBEDDING_DIMS: [usize; 6] = [8, 12, 16, 20, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgcnConfig {
    pub embedding_dim: usize,
    pub gcn_layers: usize,
    pub attention_hidden: usize,
    pub head_hidden: usize,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
}

impl Default for AgcnConfig {
    fn default() -> Self {
        Self::with_dim(16)
    }
}

impl AgcnConfig {
    pub fn with_dim(embedding_dim: usize) -> Self {
        Self {
            embedding_dim,
            gcn_layers: 2,
            attention_hidden: embedding_dim,
            head_hidden: embedding_dim,
            dropout_rate: 0.05,
            l2_coeff: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.attention_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::Config("layer widths must be ≥ 1".into()));
        }
        if self.gcn_layers == 0 {
            return Err(Error::Config("at least one GCN layer is required".into()));
        }
        if self.l2_coeff.is_nan() || self.l2_coeff < 0.0 {
            return Err(Error::Config("l2 coefficient must be ≥ 0".into()));
        }
        check_rate(self.dropout_rate)
    }
}

/// Input of one forward pass: normalized adjacency, features and target.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub propagation: Matrix,
    pub features: Matrix,
    pub target: f64,
}

impl GraphInput {
    pub fn from_instance(g: &CourseGraphInstance) -> Result<Self> {
        Ok(Self {
            propagation: normalize_adjacency(&g.adjacency)?,
            features: g.features.clone(),
            target: g.true_grade().unwrap_or(f64::NAN),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Clamped into [0, 4].
    pub grade: f64,
    pub raw: f64,
    /// One weight per vocabulary course; non-negative, sums to 1.
    pub attention: Vec<f64>,
    pub node_embeddings: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    gcn: Vec<(ParamId, ParamId)>,
    attention_hidden: (ParamId, ParamId),
    attention_out: (ParamId, ParamId),
    head_hidden: (ParamId, ParamId),
    head_out: (ParamId, ParamId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AgcnRepr", into = "AgcnRepr")]
pub struct Agcn {
    config: AgcnConfig,
    feature_dim: usize,
    params: ParamSet,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct AgcnRepr {
    config: AgcnConfig,
    feature_dim: usize,
    params: ParamSet,
}

impl From<Agcn> for AgcnRepr {
    fn from(m: Agcn) -> Self {
        AgcnRepr {
            config: m.config,
            feature_dim: m.feature_dim,
            params: m.params,
        }
    }
}

impl TryFrom<AgcnRepr> for Agcn {
    type Error = Error;

    fn try_from(r: AgcnRepr) -> Result<Self> {
        r.config.validate()?;
        let shapes = param_shapes(&r.config, r.feature_dim);
        if shapes.len() != r.params.len() {
            return Err(Error::Validation(format!(
                "AGCN artifact has {} tensors, expected {}",
                r.params.len(),
                shapes.len()
            )));
        }
        for (t, (name, rows, cols, _)) in r.params.iter().zip(&shapes) {
            if &t.name != name || t.value.shape() != (*rows, *cols) {
                return Err(Error::Validation(format!(
                    "tensor {} has shape {:?}, expected {name} {:?}",
                    t.name,
                    t.value.shape(),
                    (rows, cols)
                )));
            }
        }
        let mut params = r.params;
        params.reset_gradients();
        Ok(Agcn {
            layout: layout(r.config.gcn_layers),
            config: r.config,
            feature_dim: r.feature_dim,
            params,
        })
    }
}

/// (name, rows, cols, is_weight) in parameter order.
fn param_shapes(c: &AgcnConfig, feature_dim: usize) -> Vec<(String, usize, usize, bool)> {
    let mut out = Vec::new();
    for l in 0..c.gcn_layers {
        let fan_in = if l == 0 { feature_dim } else { c.embedding_dim };
        out.push((format!("gcn.{l}.weight"), fan_in, c.embedding_dim, true));
        out.push((format!("gcn.{l}.bias"), 1, c.embedding_dim, false));
    }
    out.push(("attention.hidden.weight".into(), c.embedding_dim, c.attention_hidden, true));
    out.push(("attention.hidden.bias".into(), 1, c.attention_hidden, false));
    out.push(("attention.out.weight".into(), c.attention_hidden, 1, true));
    out.push(("attention.out.bias".into(), 1, 1, false));
    out.push(("head.hidden.weight".into(), c.embedding_dim, c.head_hidden, true));
    out.push(("head.hidden.bias".into(), 1, c.head_hidden, false));
    out.push(("head.out.weight".into(), c.head_hidden, 1, true));
    out.push(("head.out.bias".into(), 1, 1, false));
    out
}

fn layout(gcn_layers: usize) -> Layout {
    let pair = |i: usize| (ParamId(i), ParamId(i + 1));
    let base = 2 * gcn_layers;
    Layout {
        gcn: (0..gcn_layers).map(|l| pair(2 * l)).collect(),
        attention_hidden: pair(base),
        attention_out: pair(base + 2),
        head_hidden: pair(base + 4),
        head_out: pair(base + 6),
    }
}

impl Agcn {
    pub fn new(config: AgcnConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::Config("feature width must be ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, rows, cols, is_weight) in param_shapes(&config, feature_dim) {
            let value = if is_weight {
                glorot_uniform(rows, cols, &mut rng)
            } else {
                Matrix::zeros(rows, cols)
            };
            params.push(ParamTensor::new(name, value, is_weight));
        }
        Ok(Self {
            layout: layout(config.gcn_layers),
            config,
            feature_dim,
            params,
        })
    }

    pub fn config(&self) -> &AgcnConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn check_input(&self, propagation: &Matrix, features: &Matrix) -> Result<()> {
        let n = features.rows();
        if propagation.shape() != (n, n) || features.cols() != self.feature_dim {
            return Err(Error::Dimension {
                op: "agcn input",
                left: propagation.shape(),
                right: features.shape(),
            });
        }
        Ok(())
    }

    fn record_gcn(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        propagation: &Matrix,
        features: &Matrix,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        self.check_input(propagation, features)?;
        let adj = tape.constant(propagation.clone());
        let mut h = tape.constant(features.clone());
        for &(w, b) in &self.layout.gcn {
            let agg = tape.matmul(adj, h)?;
            let lin = tape.matmul(agg, bound[w.0])?;
            let pre = tape.add(lin, bound[b.0])?;
            h = tape.relu(pre);
            if let Some(rng) = rng.as_deref_mut() {
                if self.config.dropout_rate > 0.0 {
                    let (r, c) = tape.value(h).shape();
                    let mask = dropout_mask(r, c, self.config.dropout_rate, rng)?;
                    let mask = tape.constant(mask);
                    h = tape.mul(h, mask)?;
                }
            }
        }
        Ok(h)
    }

    fn record_attention(&self, tape: &mut Tape, bound: &[Var], z: Var) -> Result<Var> {
        let (w1, b1) = self.layout.attention_hidden;
        let (w2, b2) = self.layout.attention_out;
        let hidden = tape.matmul(z, bound[w1.0])?;
        let hidden = tape.add(hidden, bound[b1.0])?;
        let hidden = tape.tanh(hidden);
        let scores = tape.matmul(hidden, bound[w2.0])?;
        let scores = tape.add(scores, bound[b2.0])?;
        Ok(tape.softmax(scores))
    }

    fn record_head(&self, tape: &mut Tape, bound: &[Var], z: Var, alpha: Var) -> Result<Var> {
        let (w3, b3) = self.layout.head_hidden;
        let (w4, b4) = self.layout.head_out;
        let alpha_t = tape.transpose(alpha);
        let pooled = tape.matmul(alpha_t, z)?;
        let hidden = tape.matmul(pooled, bound[w3.0])?;
        let hidden = tape.add(hidden, bound[b3.0])?;
        let hidden = tape.relu(hidden);
        let out = tape.matmul(hidden, bound[w4.0])?;
        tape.add(out, bound[b4.0])
    }

    /// Node embeddings `Z`. Dropout is applied only when `training` and an
    /// `rng` is supplied.
    pub fn gcn_forward(
        &self,
        propagation: &Matrix,
        features: &Matrix,
        training: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = bind_all(&mut tape, &self.params);
        let rng = if training { rng } else { None };
        let z = self.record_gcn(&mut tape, &bound, propagation, features, rng)?;
        Ok(tape.value(z).clone())
    }

    /// Attention weights over the rows of `z`.
    pub fn attention_forward(&self, z: &Matrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = bind_all(&mut tape, &self.params);
        let z = tape.constant(z.clone());
        let alpha = self.record_attention(&mut tape, &bound, z)?;
        Ok(tape.value(alpha).data().to_vec())
    }

    /// Raw head output for pooled `Σ αᵢ zᵢ`.
    pub fn pool_and_predict(&self, z: &Matrix, alpha: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = bind_all(&mut tape, &self.params);
        let zv = tape.constant(z.clone());
        let av = tape.constant(Matrix::column_vector(alpha));
        let out = self.record_head(&mut tape, &bound, zv, av)?;
        Ok(tape.value(out).item())
    }

    pub fn predict(&self, g: &CourseGraphInstance) -> Result<Prediction> {
        self.predict_input(&normalize_adjacency(&g.adjacency)?, &g.features)
    }

    pub fn predict_input(&self, propagation: &Matrix, features: &Matrix) -> Result<Prediction> {
        let mut tape = Tape::new();
        let bound = bind_all(&mut tape, &self.params);
        let z = self.record_gcn(&mut tape, &bound, propagation, features, None)?;
        let alpha = self.record_attention(&mut tape, &bound, z)?;
        let out = self.record_head(&mut tape, &bound, z, alpha)?;
        let raw = tape.value(out).item();
        if !raw.is_finite() {
            return Err(Error::NonFinite("AGCN prediction".into()));
        }
        Ok(Prediction {
            grade: raw.clamp(0.0, 4.0),
            raw,
            attention: tape.value(alpha).data().to_vec(),
            node_embeddings: tape.value(z).clone(),
        })
    }
}

impl TapeModel for Agcn {
    type Input = GraphInput;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn l2_coeff(&self) -> f64 {
        self.config.l2_coeff
    }

    fn record(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        input: &GraphInput,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let z = self.record_gcn(tape, bound, &input.propagation, &input.features, rng)?;
        let alpha = self.record_attention(tape, bound, z)?;
        self.record_head(tape, bound, z, alpha)
    }

    fn target(input: &GraphInput) -> f64 {
        input.target
    }

    fn output_bias(&self) -> Option<ParamId> {
        Some(self.layout.head_out.1)
    }
}

/// One row of an attention explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub course: String,
    /// `None` when the student did not take the course.
    pub grade: Option<Letter>,
    pub score: f64,
}

impl ExplanationEntry {
    /// Letter, or `N` for an untaken course.
    pub fn grade_label(&self) -> String {
        self.grade.map_or_else(|| "N".to_string(), |l| l.to_string())
    }
}

/// The `top_k` courses by attention, ties broken by course id.
pub fn explain(
    p: &Prediction,
    vocab: &CourseVocabulary,
    g: &CourseGraphInstance,
    top_k: usize,
) -> Vec<ExplanationEntry> {
    let mut rows: Vec<ExplanationEntry> = vocab
        .courses()
        .iter()
        .zip(&p.attention)
        .zip(&g.grades)
        .map(|((course, &score), &grade)| ExplanationEntry {
            course: course.clone(),
            grade,
            score,
        })
        .collect();
    rows.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.course.cmp(&b.course)));
    rows.truncate(top_k.max(1));
    rows
}
