//! catSeq generator: bi-GRU encoder, attentive GRU decoder and a gated copy
//! mechanism over the document's extended vocabulary.
//!
//! At each decoding step the decoder state `s` attends over the encoder
//! states with multiplicative scores `h_i . (W_att s)`. The output
//! distribution mixes a vocabulary softmax with copy attention:
//!
//! ```text
//! p(w) = g * p_vocab(w) + (1 - g) * sum_{i : x_i = w} a_i
//! g    = sigmoid(w_gate . [s ; ctx] + b_gate)
//! ```
//!
//! so source OOV tokens (extended ids `>= V`) are reachable only by copying.

use rand::RngExt;

use crate::corpus::{Document, KeyphraseSequence, BOS, EOS, SEP, UNK};
use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, NodeId};
use crate::gru::{bidirectional, GruNodes, GruSpec};
use crate::params::ParamSet;
use crate::rng::{sample_index, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            vocab_size: 10_000,
            embed_dim: 64,
            hidden_dim: 128,
        }
    }
}

const EMBEDDING: &str = "embedding";
const INIT_W: &str = "init.w";
const INIT_B: &str = "init.b";
const ATTN_W: &str = "attn.w";
const OUT_W: &str = "out.w";
const OUT_B: &str = "out.b";
const GATE_W: &str = "gate.w";
const GATE_B: &str = "gate.b";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    dims: ModelDims,
    params: ParamSet,
}

fn grus(dims: &ModelDims) -> [GruSpec; 3] {
    [
        GruSpec::new("enc_fwd", dims.embed_dim, dims.hidden_dim),
        GruSpec::new("enc_bwd", dims.embed_dim, dims.hidden_dim),
        GruSpec::new("dec", dims.embed_dim, dims.hidden_dim),
    ]
}

fn dense_shapes(dims: &ModelDims) -> [(&'static str, Vec<usize>, bool); 8] {
    let (v, e, h) = (dims.vocab_size, dims.embed_dim, dims.hidden_dim);
    // (name, shape, is_weight)
    [
        (EMBEDDING, vec![v, e], true),
        (INIT_W, vec![h, 2 * h], true),
        (INIT_B, vec![h], false),
        (ATTN_W, vec![2 * h, h], true),
        (OUT_W, vec![v, 3 * h], true),
        (OUT_B, vec![v], false),
        (GATE_W, vec![3 * h], true),
        (GATE_B, vec![1], false),
    ]
}

impl GeneratorParams {
    /// Weights uniform in (-0.1, 0.1), biases zero.
    pub fn new(dims: ModelDims, rng: &mut Rng) -> Self {
        let mut params = ParamSet::new();
        for (name, shape, weight) in dense_shapes(&dims) {
            if weight {
                params.init_uniform(name, &shape, rng);
            } else {
                params.init_zeros(name, &shape);
            }
        }
        for spec in grus(&dims) {
            spec.init(&mut params, rng);
        }
        Self { dims, params }
    }

    /// Wraps an existing parameter set, inferring and checking dimensions.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let emb = params.shape_of(EMBEDDING)?;
        let init = params.shape_of(INIT_W)?;
        let dims = ModelDims {
            vocab_size: emb[0],
            embed_dim: emb[1],
            hidden_dim: init[0],
        };
        for (name, shape, _) in dense_shapes(&dims) {
            let found = params.shape_of(name)?;
            if found != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "generator params",
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

    pub fn bind(&self, g: &mut Graph) -> Result<GeneratorNodes> {
        let p = &self.params;
        let [enc_fwd, enc_bwd, dec] = grus(&self.dims);
        Ok(GeneratorNodes {
            vocab_size: self.dims.vocab_size,
            embedding: p.bind(g, EMBEDDING)?,
            enc_fwd: enc_fwd.bind(g, p)?,
            enc_bwd: enc_bwd.bind(g, p)?,
            dec: dec.bind(g, p)?,
            init_w: p.bind(g, INIT_W)?,
            init_b: p.bind(g, INIT_B)?,
            attn_w: p.bind(g, ATTN_W)?,
            out_w: p.bind(g, OUT_W)?,
            out_b: p.bind(g, OUT_B)?,
            gate_w: p.bind(g, GATE_W)?,
            gate_b: p.bind(g, GATE_B)?,
        })
    }
}

/// Generator parameters bound on a graph.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorNodes {
    vocab_size: usize,
    embedding: NodeId,
    enc_fwd: GruNodes,
    enc_bwd: GruNodes,
    dec: GruNodes,
    init_w: NodeId,
    init_b: NodeId,
    attn_w: NodeId,
    out_w: NodeId,
    out_b: NodeId,
    gate_w: NodeId,
    gate_b: NodeId,
}

/// Encoder output on a graph.
#[derive(Clone, Debug)]
pub struct EncodedNodes {
    pub states: Vec<NodeId>,
    /// States stacked into an `[n, 2 * hidden]` matrix.
    pub memory: NodeId,
    pub initial_state: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct StepNodes {
    pub dist: NodeId,
    pub state: NodeId,
    pub attention: NodeId,
}

impl GeneratorNodes {
    fn embed(&self, g: &mut Graph, id: usize) -> Result<NodeId> {
        let row = if id < self.vocab_size { id } else { UNK };
        g.gather(self.embedding, row)
    }

    pub fn encode(&self, g: &mut Graph, doc: &Document) -> Result<EncodedNodes> {
        if doc.is_empty() {
            return Err(Error::Input("cannot encode an empty document".into()));
        }
        let inputs = doc
            .ids
            .iter()
            .map(|&id| self.embed(g, id))
            .collect::<Result<Vec<_>>>()?;
        let bi = bidirectional(g, &self.enc_fwd, &self.enc_bwd, &inputs)?;
        let memory = g.stack_rows(&bi.states)?;
        let finals = g.concat(&[bi.final_forward, bi.final_backward])?;
        let proj = g.matvec(self.init_w, finals)?;
        let pre = g.add(proj, self.init_b)?;
        let initial_state = g.tanh(pre);
        Ok(EncodedNodes {
            states: bi.states,
            memory,
            initial_state,
        })
    }

    pub fn step(
        &self,
        g: &mut Graph,
        enc: &EncodedNodes,
        doc: &Document,
        state: NodeId,
        prev: usize,
    ) -> Result<StepNodes> {
        let ext_size = doc.extended_size();
        if prev >= ext_size {
            return Err(Error::Dimension {
                op: "decode_step",
                lhs: vec![prev],
                rhs: vec![ext_size],
            });
        }
        let x = self.embed(g, prev)?;
        let s = self.dec.step(g, x, state)?;

        let query = g.matvec(self.attn_w, s)?;
        let scores = g.matvec(enc.memory, query)?;
        let attention = g.softmax(scores, None)?;
        let context = g.weighted_rows(enc.memory, attention)?;
        let features = g.concat(&[s, context])?;

        let logits = g.matvec(self.out_w, features)?;
        let logits = g.add(logits, self.out_b)?;
        let vocab_dist = g.softmax(logits, None)?;

        let gate_pre = g.dot(self.gate_w, features)?;
        let gate_pre = g.add(gate_pre, self.gate_b)?;
        let gate = g.sigmoid(gate_pre);

        let padded = g.pad_to(vocab_dist, ext_size)?;
        let generated = g.scale_by(padded, gate)?;
        let copy_gate = g.one_minus(gate);
        let copy_weights = g.scale_by(attention, copy_gate)?;
        let copied = g.scatter_add(copy_weights, &doc.extended_ids, ext_size)?;
        let dist = g.add(generated, copied)?;
        Ok(StepNodes {
            dist,
            state: s,
            attention,
        })
    }

    /// `ln p(token_t)` for each position, feeding the previous gold token.
    pub fn sequence_log_probs(
        &self,
        g: &mut Graph,
        doc: &Document,
        tokens: &[usize],
    ) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
        let enc = self.encode(g, doc)?;
        let mut state = enc.initial_state;
        let mut prev = BOS;
        let mut log_probs = Vec::with_capacity(tokens.len());
        let mut dists = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            let step = self.step(g, &enc, doc, state, prev)?;
            let p = g.pick(step.dist, tok)?;
            log_probs.push(g.ln(p));
            dists.push(step.dist);
            state = step.state;
            prev = tok;
        }
        Ok((log_probs, dists))
    }

    /// Mean negative log-likelihood of `target` under teacher forcing.
    pub fn nll(&self, g: &mut Graph, doc: &Document, target: &[usize]) -> Result<NllNodes> {
        if target.is_empty() {
            return Err(Error::Input("zero-length target".into()));
        }
        let (log_probs, dists) = self.sequence_log_probs(g, doc, target)?;
        let mean = g.mean(&log_probs)?;
        let loss = g.neg(mean);
        Ok(NllNodes { loss, dists })
    }
}

pub struct NllNodes {
    pub loss: NodeId,
    pub dists: Vec<NodeId>,
}

/// Encoder output as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentEncoding {
    /// `h_i = [forward_i ; backward_i]`, one per source token.
    pub states: Vec<Tensor>,
    pub initial_state: Tensor,
}

pub fn encode_document(doc: &Document, params: &GeneratorParams) -> Result<DocumentEncoding> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let enc = nodes.encode(&mut g, doc)?;
    Ok(DocumentEncoding {
        states: enc.states.iter().map(|&s| g.value(s).clone()).collect(),
        initial_state: g.value(enc.initial_state).clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeStep {
    /// Distribution over the extended vocabulary `V + |oov|`.
    pub dist: Vec<f64>,
    pub state: Tensor,
    pub attention: Vec<f64>,
}

pub fn decode_step(
    state: &Tensor,
    prev_token: usize,
    enc: &DocumentEncoding,
    doc: &Document,
    params: &GeneratorParams,
) -> Result<DecodeStep> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let states: Vec<NodeId> = enc.states.iter().map(|s| g.input(s.clone())).collect();
    let memory = g.stack_rows(&states)?;
    let initial_state = g.input(enc.initial_state.clone());
    let enc_nodes = EncodedNodes {
        states,
        memory,
        initial_state,
    };
    let s = g.input(state.clone());
    let step = nodes.step(&mut g, &enc_nodes, doc, s, prev_token)?;
    Ok(DecodeStep {
        dist: g.value(step.dist).data().to_vec(),
        state: g.value(step.state).clone(),
        attention: g.value(step.attention).data().to_vec(),
    })
}

pub fn teacher_forced_nll(doc: &Document, target: &[usize], params: &GeneratorParams) -> Result<f64> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let out = nodes.nll(&mut g, doc, target)?;
    Ok(g.scalar(out.loss))
}

/// Teacher-forced loss, its gradients, and how many positions the model's
/// argmax already gets right.
#[derive(Clone, Debug)]
pub struct NllResult {
    pub loss: f64,
    pub grads: Gradients,
    pub correct: usize,
    pub total: usize,
}

pub fn teacher_forced_grads(
    doc: &Document,
    target: &[usize],
    params: &GeneratorParams,
) -> Result<NllResult> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let out = nodes.nll(&mut g, doc, target)?;
    let grads = g.backward(out.loss)?;
    let correct = out
        .dists
        .iter()
        .zip(target)
        .filter(|(&d, &t)| argmax(g.value(d).data()) == t)
        .count();
    Ok(NllResult {
        loss: g.scalar(out.loss),
        grads,
        correct,
        total: target.len(),
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeLimits {
    /// Maximum number of emitted tokens, delimiters included.
    pub max_len: usize,
    pub max_phrase_len: usize,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        Self {
            max_len: 40,
            max_phrase_len: 6,
        }
    }
}

/// Splits emitted tokens into phrases and assigns every emitted token to
/// one phrase group: a phrase's tokens plus the delimiter that closes it.
/// Delimiters that close nothing (leading or doubled separators) join the
/// next phrase, or the last one when none follows.
pub fn group_tokens(tokens: &[usize], max_phrase_len: usize) -> (KeyphraseSequence, Vec<Vec<usize>>) {
    let mut phrases: Vec<Vec<usize>> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut phrase = Vec::new();
    let mut group = Vec::new();
    let mut stray = Vec::new();
    for (i, &tok) in tokens.iter().enumerate() {
        if tok == SEP || tok == EOS {
            if phrase.is_empty() {
                stray.push(i);
            } else {
                group.push(i);
                phrases.push(std::mem::take(&mut phrase));
                groups.push(std::mem::take(&mut group));
            }
            if tok == EOS {
                break;
            }
        } else {
            if phrase.is_empty() {
                group.append(&mut stray);
            }
            phrase.push(tok);
            group.push(i);
        }
    }
    if !phrase.is_empty() {
        phrases.push(phrase);
        groups.push(group);
    }
    if let Some(last) = groups.last_mut() {
        last.append(&mut stray);
    }
    let mut seq = KeyphraseSequence::new(phrases);
    seq.truncate_phrases(max_phrase_len);
    (seq, groups)
}

enum Choice<'a> {
    Greedy,
    Sample(&'a mut Rng),
}

/// Emitted tokens and the probability each had when it was chosen.
fn run_decoder(
    doc: &Document,
    params: &GeneratorParams,
    max_len: usize,
    mut choice: Choice<'_>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut g = Graph::new();
    let nodes = params.bind(&mut g)?;
    let enc = nodes.encode(&mut g, doc)?;
    let mut state = enc.initial_state;
    let mut prev = BOS;
    let mut tokens = Vec::new();
    let mut probs = Vec::new();
    for _ in 0..max_len {
        let step = nodes.step(&mut g, &enc, doc, state, prev)?;
        let dist = g.value(step.dist).data();
        let tok = match &mut choice {
            Choice::Greedy => argmax(dist),
            Choice::Sample(rng) => sample_index(dist, rng),
        };
        probs.push(dist[tok]);
        tokens.push(tok);
        if tok == EOS {
            break;
        }
        state = step.state;
        prev = tok;
    }
    Ok((tokens, probs))
}

/// Argmax decoding until EOS or `max_len` tokens.
pub fn greedy_decode(
    doc: &Document,
    params: &GeneratorParams,
    limits: DecodeLimits,
) -> Result<KeyphraseSequence> {
    if limits.max_len == 0 {
        return Err(Error::Input("max_len must be at least 1".into()));
    }
    let (tokens, _) = run_decoder(doc, params, limits.max_len, Choice::Greedy)?;
    Ok(group_tokens(&tokens, limits.max_phrase_len).0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSequence {
    pub sequence: KeyphraseSequence,
    /// Every emitted token, delimiters included.
    pub tokens: Vec<usize>,
    /// `ln p` of each emitted token when it was drawn.
    pub log_probs: Vec<f64>,
    /// Indices into `tokens`, one group per phrase of `sequence`.
    pub groups: Vec<Vec<usize>>,
}

impl SampledSequence {
    pub fn group_log_probs(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| self.log_probs[i]).sum())
            .collect()
    }

    pub fn total_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

/// Ancestral sampling from the decoder distribution.
pub fn sample_decode(
    doc: &Document,
    params: &GeneratorParams,
    limits: DecodeLimits,
    rng: &mut Rng,
) -> Result<SampledSequence> {
    if limits.max_len == 0 {
        return Err(Error::Input("max_len must be at least 1".into()));
    }
    let (tokens, probs) = run_decoder(doc, params, limits.max_len, Choice::Sample(rng))?;
    let (sequence, groups) = group_tokens(&tokens, limits.max_phrase_len);
    Ok(SampledSequence {
        sequence,
        log_probs: probs.iter().map(|p| p.ln()).collect(),
        tokens,
        groups,
    })
}

/// Perturbs every weight by a uniform draw in `(-scale, scale)`; used to move
/// test fixtures away from symmetric points.
pub fn jitter(params: &mut ParamSet, scale: f64, rng: &mut Rng) {
    for name in params.names().cloned().collect::<Vec<_>>() {
        for v in params.get_mut(&name).expect("name exists").data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}
