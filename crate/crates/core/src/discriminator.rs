//! Hierarchical-attention discriminator scoring each keyphrase of a sequence.
//!
//! The document runs through its own bi-GRU (`h_i`) and every keyphrase
//! through one shared bi-GRU (`k_j`). Each keyphrase attends over the
//! document with scores `k_j . W_a h_i` to get `c_j`, and `e_j = [c_j ; k_j]`.
//! A forward GRU then reads `h_1..h_n` followed by `e_1..e_m` from a zero
//! state, and keyphrase `j` scores `sigmoid(w_f . s_{n+j})`. Document states
//! are zero-padded to the width of `e_j`.

use crate::corpus::{Document, KeyphraseSequence, UNK};
use crate::error::{Error, Result};
use crate::generator::ModelDims;
use crate::graph::{Graph, NodeId};
use crate::gru::{bidirectional, GruNodes, GruSpec};
use crate::params::ParamSet;
use crate::rng::Rng;
use crate::tensor::{sigmoid, softplus, Tensor};

const EMBEDDING: &str = "embedding";
const ATTN_W: &str = "attn.w";
const OUT_W: &str = "out.w";

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    dims: ModelDims,
    params: ParamSet,
}

fn grus(dims: &ModelDims) -> [GruSpec; 5] {
    let (e, h) = (dims.embed_dim, dims.hidden_dim);
    [
        GruSpec::new("doc_fwd", e, h),
        GruSpec::new("doc_bwd", e, h),
        GruSpec::new("kp_fwd", e, h),
        GruSpec::new("kp_bwd", e, h),
        GruSpec::new("top", 4 * h, h),
    ]
}

fn dense_shapes(dims: &ModelDims) -> [(&'static str, Vec<usize>); 3] {
    let h = dims.hidden_dim;
    [
        (EMBEDDING, vec![dims.vocab_size, dims.embed_dim]),
        (ATTN_W, vec![2 * h, 2 * h]),
        (OUT_W, vec![h]),
    ]
}

impl DiscriminatorParams {
    pub fn new(dims: ModelDims, rng: &mut Rng) -> Self {
        let mut params = ParamSet::new();
        for (name, shape) in dense_shapes(&dims) {
            params.init_uniform(name, &shape, rng);
        }
        for spec in grus(&dims) {
            spec.init(&mut params, rng);
        }
        Self { dims, params }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let emb = params.shape_of(EMBEDDING)?;
        let out = params.shape_of(OUT_W)?;
        let dims = ModelDims {
            vocab_size: emb[0],
            embed_dim: emb[1],
            hidden_dim: out[0],
        };
        for (name, shape) in dense_shapes(&dims) {
            let found = params.shape_of(name)?;
            if found != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "discriminator params",
                    lhs: shape,
                    rhs: found.to_vec(),
                });
            }
        }
        for spec in grus(&dims) {
            spec.validate(&params)?;
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn bind(&self, g: &mut Graph) -> Result<DiscriminatorNodes> {
        let p = &self.params;
        let [doc_fwd, doc_bwd, kp_fwd, kp_bwd, top] = grus(&self.dims);
        Ok(DiscriminatorNodes {
            vocab_size: self.dims.vocab_size,
            hidden_dim: self.dims.hidden_dim,
            embedding: p.bind(g, EMBEDDING)?,
            doc_fwd: doc_fwd.bind(g, p)?,
            doc_bwd: doc_bwd.bind(g, p)?,
            kp_fwd: kp_fwd.bind(g, p)?,
            kp_bwd: kp_bwd.bind(g, p)?,
            top: top.bind(g, p)?,
            attn_w: p.bind(g, ATTN_W)?,
            out_w: p.bind(g, OUT_W)?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorNodes {
    vocab_size: usize,
    hidden_dim: usize,
    embedding: NodeId,
    doc_fwd: GruNodes,
    doc_bwd: GruNodes,
    kp_fwd: GruNodes,
    kp_bwd: GruNodes,
    top: GruNodes,
    attn_w: NodeId,
    out_w: NodeId,
}

/// Second-layer states and per-keyphrase logits on a graph.
#[derive(Clone, Debug)]
pub struct ScoreNodes {
    pub states: Vec<NodeId>,
    pub logits: Vec<NodeId>,
}

impl DiscriminatorNodes {
    fn embed_all(&self, g: &mut Graph, ids: &[usize]) -> Result<Vec<NodeId>> {
        ids.iter()
            .map(|&id| g.gather(self.embedding, if id < self.vocab_size { id } else { UNK }))
            .collect()
    }

    pub fn encode_document(&self, g: &mut Graph, doc: &Document) -> Result<Vec<NodeId>> {
        if doc.is_empty() {
            return Err(Error::Input("cannot encode an empty document".into()));
        }
        let inputs = self.embed_all(g, &doc.ids)?;
        Ok(bidirectional(g, &self.doc_fwd, &self.doc_bwd, &inputs)?.states)
    }

    pub fn encode_keyphrases(&self, g: &mut Graph, phrases: &[Vec<usize>]) -> Result<Vec<NodeId>> {
        if phrases.is_empty() {
            return Err(Error::Input("no keyphrases to encode".into()));
        }
        phrases
            .iter()
            .map(|phrase| {
                if phrase.is_empty() {
                    return Err(Error::Input("empty keyphrase".into()));
                }
                let inputs = self.embed_all(g, phrase)?;
                let bi = bidirectional(g, &self.kp_fwd, &self.kp_bwd, &inputs)?;
                g.concat(&[bi.final_forward, bi.final_backward])
            })
            .collect()
    }

    /// Attention weights over the rows of `memory` and the weighted average.
    pub fn context(&self, g: &mut Graph, memory: NodeId, k: NodeId) -> Result<(NodeId, NodeId)> {
        // k^T W_a, then one score per document state
        let query = g.weighted_rows(self.attn_w, k)?;
        let scores = g.matvec(memory, query)?;
        let weights = g.softmax(scores, None)?;
        let context = g.weighted_rows(memory, weights)?;
        Ok((weights, context))
    }

    pub fn score(&self, g: &mut Graph, doc: &Document, phrases: &[Vec<usize>]) -> Result<ScoreNodes> {
        if phrases.is_empty() {
            return Err(Error::Input("cannot score a sequence with no keyphrases".into()));
        }
        let h = self.encode_document(g, doc)?;
        let keys = self.encode_keyphrases(g, phrases)?;
        let memory = g.stack_rows(&h)?;
        let width = 4 * self.hidden_dim;
        let mut inputs = Vec::with_capacity(h.len() + keys.len());
        for &hi in &h {
            inputs.push(g.pad_to(hi, width)?);
        }
        for &k in &keys {
            let (_, c) = self.context(g, memory, k)?;
            inputs.push(g.concat(&[c, k])?);
        }
        let s0 = g.input(Tensor::zeros(&[self.hidden_dim]));
        let states = self.top.run(g, &inputs, s0, false)?;
        let logits = states[h.len()..]
            .iter()
            .map(|&s| g.dot(self.out_w, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreNodes { states, logits })
    }

    /// Per-keyphrase binary cross-entropy terms against `label`.
    pub fn bce_terms(
        &self,
        g: &mut Graph,
        doc: &Document,
        phrases: &[Vec<usize>],
        label: bool,
    ) -> Result<Vec<NodeId>> {
        let scores = self.score(g, doc, phrases)?;
        Ok(scores
            .logits
            .iter()
            .map(|&logit| {
                // -ln sigmoid(x) = softplus(-x); -ln(1 - sigmoid(x)) = softplus(x)
                let x = if label { g.neg(logit) } else { logit };
                g.softplus(x)
            })
            .collect())
    }
}

/// Document-side encoder states `h_i` as plain tensors.
pub fn encode_document(doc: &Document, params: &DiscriminatorParams) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let h = nodes.encode_document(&mut g, doc)?;
    Ok(h.iter().map(|&n| g.value(n).clone()).collect())
}

/// `k_j = [final forward ; final backward]` for each keyphrase.
pub fn encode_keyphrases(phrases: &[Vec<usize>], params: &DiscriminatorParams) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let keys = nodes.encode_keyphrases(&mut g, phrases)?;
    Ok(keys.iter().map(|&n| g.value(n).clone()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextVector {
    pub weights: Vec<f64>,
    pub context: Tensor,
}

pub fn context_vector(h: &[Tensor], k: &Tensor, params: &DiscriminatorParams) -> Result<ContextVector> {
    if h.is_empty() {
        return Err(Error::Input("context over an empty document".into()));
    }
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let rows: Vec<NodeId> = h.iter().map(|t| g.input(t.clone())).collect();
    let memory = g.stack_rows(&rows)?;
    let k = g.input(k.clone());
    let (weights, context) = nodes.context(&mut g, memory, k)?;
    Ok(ContextVector {
        weights: g.value(weights).data().to_vec(),
        context: g.value(context).clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorTrace {
    /// `s_1..s_{n+m}`.
    pub states: Vec<Tensor>,
    /// `D(y_1)..D(y_m)`, each strictly inside (0, 1) barring saturation.
    pub scores: Vec<f64>,
    /// Pre-sigmoid values behind `scores`.
    pub logits: Vec<f64>,
}

pub fn score_sequence(
    doc: &Document,
    phrases: &KeyphraseSequence,
    params: &DiscriminatorParams,
) -> Result<DiscriminatorTrace> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let out = nodes.score(&mut g, doc, &phrases.phrases)?;
    let logits: Vec<f64> = out.logits.iter().map(|&l| g.scalar(l)).collect();
    Ok(DiscriminatorTrace {
        states: out.states.iter().map(|&s| g.value(s).clone()).collect(),
        scores: logits.iter().map(|&l| sigmoid(l)).collect(),
        logits,
    })
}

/// Mean binary cross-entropy over every keyphrase score, curated sequences
/// labelled 1 and generated ones 0.
pub fn disc_loss(real: &[DiscriminatorTrace], fake: &[DiscriminatorTrace]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in real {
        total += t.logits.iter().map(|&l| softplus(-l)).sum::<f64>();
        count += t.logits.len();
    }
    for t in fake {
        total += t.logits.iter().map(|&l| softplus(l)).sum::<f64>();
        count += t.logits.len();
    }
    if count == 0 {
        return Err(Error::Input("discriminator loss over no scores".into()));
    }
    Ok(total / count as f64)
}

/// Anything that can assign a reward in (0, 1) to each keyphrase of a
/// sequence. The discriminator is the reward model used in training; tests
/// plug in hand-built scorers.
pub trait PhraseScorer: Sync {
    fn score_phrases(&self, doc: &Document, phrases: &KeyphraseSequence) -> Result<Vec<f64>>;
}

impl PhraseScorer for DiscriminatorParams {
    fn score_phrases(&self, doc: &Document, phrases: &KeyphraseSequence) -> Result<Vec<f64>> {
        Ok(score_sequence(doc, phrases, self)?.scores)
    }
}
