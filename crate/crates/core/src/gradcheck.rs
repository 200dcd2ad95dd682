//! Central finite-difference verification of the tape gradients.
//!
//! Every differentiable graph operation is checked in isolation on small
//! random inputs, and the three training losses are checked end to end on
//! tiny model dimensions.

use std::fmt;

use rand::RngExt;

use crate::corpus::{encode_tokens, KeyphraseSequence, Vocabulary};
use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generator::{sample_decode, DecodeLimits, GeneratorParams, ModelDims};
use crate::graph::{Gradients, Graph, NodeId};
use crate::gru::GruSpec;
use crate::params::ParamSet;
use crate::rng::{seeded, Rng};
use crate::tensor::Tensor;
use crate::training::reinforce_grads;

pub const FD_EPSILON: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
const CHECK_SCALE: f64 = 1.0;

/// Names of every check, in report order.
pub const CHECK_NAMES: [&str; 17] = [
    "matvec",
    "matmul",
    "add_sub_mul",
    "affine",
    "sigmoid",
    "tanh",
    "ln",
    "softplus",
    "scale_by",
    "concat_gather_pick",
    "softmax",
    "stack_weighted_rows",
    "dot",
    "scatter_add_pad",
    "gru_cell",
    "generator_nll",
    "discriminator_bce",
];

/// The policy-gradient surrogate is checked last, after the per-op checks.
pub const RL_CHECK: &str = "rl_surrogate";

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdCheck {
    pub name: String,
    /// Number of scalar parameters compared.
    pub entries: usize,
    pub max_rel_error: f64,
    /// Parameter holding the worst entry.
    pub worst_param: String,
}

impl FdCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < FD_TOLERANCE
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<FdCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(FdCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &FdCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>8} {:>14}  {:<24} status", "check", "entries", "max rel err", "worst param")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<22} {:>8} {:>14.3e}  {:<24} {}",
                c.name,
                c.entries,
                c.max_rel_error,
                c.worst_param,
                if c.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compares the analytic gradients returned by `eval` with central
/// differences of its loss, for every element of every tensor in `params`.
/// `eval` must be a pure function of the parameter values.
pub fn fd_check<F>(name: &str, params: &ParamSet, eval: F) -> Result<FdCheck>
where
    F: Fn(&ParamSet) -> Result<(f64, Gradients)>,
{
    checked(false, name, params, eval)
}

/// `fd_check`, optionally with every analytic gradient scaled by 1.01.
fn checked<F>(corrupt: bool, name: &str, params: &ParamSet, eval: F) -> Result<FdCheck>
where
    F: Fn(&ParamSet) -> Result<(f64, Gradients)>,
{
    let (_, mut grads) = eval(params)?;
    if corrupt {
        grads.scale(1.01);
    }
    fd_check_against(name, params, &grads, |p| eval(p).map(|(l, _)| l))
}

fn fd_check_against<F>(name: &str, params: &ParamSet, grads: &Gradients, loss: F) -> Result<FdCheck>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut check = FdCheck {
        name: name.to_string(),
        entries: 0,
        max_rel_error: 0.0,
        worst_param: String::new(),
    };
    let mut probe = params.clone();
    for (pname, value) in params.iter() {
        let analytic = grads
            .get(pname)
            .ok_or_else(|| Error::Input(format!("no gradient reported for {pname}")))?;
        for i in 0..value.len() {
            let x = value.data()[i];
            probe.get_mut(pname)?.data_mut()[i] = x + FD_EPSILON;
            let plus = loss(&probe)?;
            probe.get_mut(pname)?.data_mut()[i] = x - FD_EPSILON;
            let minus = loss(&probe)?;
            probe.get_mut(pname)?.data_mut()[i] = x;
            let numeric = (plus - minus) / (2.0 * FD_EPSILON);
            let err = relative_error(analytic.data()[i], numeric);
            if !err.is_finite() {
                return Err(Error::Numeric(format!("{name}: gradient of {pname}")));
            }
            check.entries += 1;
            if err > check.max_rel_error || check.worst_param.is_empty() {
                check.max_rel_error = check.max_rel_error.max(err);
                check.worst_param = pname.clone();
            }
        }
    }
    Ok(check)
}

/// Binds every tensor of `params` on a fresh graph, builds a scalar loss
/// with `build` and returns it with its gradients.
fn graph_eval<F>(params: &ParamSet, build: F) -> Result<(f64, Gradients)>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let nodes = params
        .names()
        .map(|n| params.bind(&mut g, n))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut g, &nodes)?;
    Ok((g.scalar(loss), g.backward(loss)?))
}

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Inputs named `x0, x1, ...` so that bind order matches argument order.
fn inputs(specs: &[(&[usize], f64, f64)], rng: &mut Rng) -> ParamSet {
    let mut set = ParamSet::new();
    for (i, (shape, lo, hi)) in specs.iter().enumerate() {
        set.insert(format!("x{i}"), random(shape, *lo, *hi, rng));
    }
    set
}

/// Reduces an arbitrary node to a scalar with fixed random weights, so that
/// every output element carries a distinct sensitivity.
fn project(g: &mut Graph, v: NodeId, rng_seed: u64) -> Result<NodeId> {
    let n = g.value(v).len();
    let w = random(&[n], -1.0, 1.0, &mut seeded(rng_seed));
    let w = g.input(w);
    g.dot(v, w)
}

fn op_check<F>(corrupt: bool, name: &str, set: &ParamSet, seed: u64, build: F) -> Result<FdCheck>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    checked(corrupt, name, set, |p| {
        graph_eval(p, |g, x| {
            let out = build(g, x)?;
            project(g, out, seed)
        })
    })
}

fn check_op(name: &str, corrupt: bool, rng: &mut Rng) -> Result<FdCheck> {
    let seed = rng.random();
    match name {
        "matvec" => op_check(corrupt, name, &inputs(&[(&[3, 4], -1.0, 1.0), (&[4], -1.0, 1.0)], rng), seed, |g, x| {
            g.matvec(x[0], x[1])
        }),
        "matmul" => op_check(corrupt, name, &inputs(&[(&[2, 3], -1.0, 1.0), (&[3, 2], -1.0, 1.0)], rng), seed, |g, x| {
            g.matmul(x[0], x[1])
        }),
        "add_sub_mul" => op_check(corrupt, name, &inputs(&[(&[4], -1.0, 1.0), (&[4], -1.0, 1.0)], rng), seed, |g, x| {
            let s = g.add(x[0], x[1])?;
            let d = g.sub(x[0], x[1])?;
            g.mul(s, d)
        }),
        "affine" => op_check(corrupt, name, &inputs(&[(&[4], -1.0, 1.0)], rng), seed, |g, x| {
            let a = g.affine(x[0], -1.7, 0.3);
            let b = g.one_minus(a);
            Ok(g.neg(b))
        }),
        "sigmoid" => op_check(corrupt, name, &inputs(&[(&[5], -3.0, 3.0)], rng), seed, |g, x| Ok(g.sigmoid(x[0]))),
        "tanh" => op_check(corrupt, name, &inputs(&[(&[5], -2.0, 2.0)], rng), seed, |g, x| Ok(g.tanh(x[0]))),
        "ln" => op_check(corrupt, name, &inputs(&[(&[5], 0.2, 3.0)], rng), seed, |g, x| Ok(g.ln(x[0]))),
        "softplus" => op_check(corrupt, name, &inputs(&[(&[5], -4.0, 4.0)], rng), seed, |g, x| Ok(g.softplus(x[0]))),
        "scale_by" => op_check(corrupt, name, &inputs(&[(&[4], -1.0, 1.0), (&[1], -1.0, 1.0)], rng), seed, |g, x| {
            g.scale_by(x[0], x[1])
        }),
        "concat_gather_pick" => {
            let set = inputs(&[(&[3, 4], -1.0, 1.0), (&[2], -1.0, 1.0)], rng);
            op_check(corrupt, name, &set, seed, |g, x| {
                let row = g.gather(x[0], 1)?;
                let other = g.gather(x[0], 2)?;
                let joined = g.concat(&[row, x[1], other])?;
                let a = g.pick(joined, 5)?;
                let b = g.pick(joined, 0)?;
                let ab = g.mul(a, b)?;
                let tail = g.scale_by(joined, ab)?;
                g.add(joined, tail)
            })
        }
        "softmax" => op_check(corrupt, name, &inputs(&[(&[5], -2.0, 2.0)], rng), seed, |g, x| {
            g.softmax(x[0], Some(&[true, true, false, true, true]))
        }),
        "stack_weighted_rows" => {
            let set = inputs(&[(&[3], -1.0, 1.0), (&[3], -1.0, 1.0), (&[2], -1.0, 1.0)], rng);
            op_check(corrupt, name, &set, seed, |g, x| {
                let m = g.stack_rows(&[x[0], x[1]])?;
                g.weighted_rows(m, x[2])
            })
        }
        "dot" => op_check(corrupt, name, &inputs(&[(&[4], -1.0, 1.0), (&[4], -1.0, 1.0)], rng), seed, |g, x| {
            let d = g.dot(x[0], x[1])?;
            let sq = g.mul(d, d)?;
            g.add(sq, d)
        }),
        "scatter_add_pad" => op_check(corrupt, name, &inputs(&[(&[3], -1.0, 1.0), (&[4], -1.0, 1.0)], rng), seed, |g, x| {
            let padded = g.pad_to(x[0], 6)?;
            let scattered = g.scatter_add(x[1], &[0, 2, 2, 5], 6)?;
            let both = g.mul(padded, scattered)?;
            let sum = g.sum(&[both, scattered])?;
            let parts = [g.pick(sum, 0)?, g.pick(sum, 2)?, g.pick(sum, 5)?];
            g.mean(&parts)
        }),
        "gru_cell" => {
            let spec = GruSpec::new("gru", 3, 4);
            let mut set = ParamSet::new();
            spec.init(&mut set, rng);
            // Non-zero biases so every bias gradient path is exercised.
            for (pname, t) in set.clone().iter() {
                if pname.contains(".b_") {
                    set.insert(pname.clone(), random(t.shape(), -0.5, 0.5, rng));
                }
            }
            let x = random(&[3], -1.0, 1.0, rng);
            let h0 = random(&[4], -1.0, 1.0, rng);
            set.insert("h0", h0);
            checked(corrupt, name, &set, |p| {
                let mut g = Graph::new();
                let cell = spec.bind(&mut g, p)?;
                let xs = g.input(x.clone());
                let h = p.bind(&mut g, "h0")?;
                let h1 = cell.step(&mut g, xs, h)?;
                let h2 = cell.step(&mut g, xs, h1)?;
                let loss = project(&mut g, h2, seed)?;
                Ok((g.scalar(loss), g.backward(loss)?))
            })
        }
        "generator_nll" => {
            let (vocab, dims) = tiny_vocab();
            let gen = GeneratorParams::new(dims, rng);
            let doc = tiny_doc(&vocab);
            // Includes a copy-only (out-of-vocabulary) target.
            let target = vec![doc.extended_ids[6], 4, doc.extended_ids[1], doc.extended_ids[2], 3];
            checked(corrupt, name, &check_point(gen.params(), rng), |p| {
                let gen = GeneratorParams::from_params(p.clone())?;
                let mut g = Graph::new();
                let nodes = gen.bind(&mut g)?;
                let nll = nodes.nll(&mut g, &doc, &target)?;
                Ok((g.scalar(nll.loss), g.backward(nll.loss)?))
            })
        }
        "discriminator_bce" => {
            let (vocab, dims) = tiny_vocab();
            let disc = DiscriminatorParams::new(dims, rng);
            let doc = tiny_doc(&vocab);
            let real = KeyphraseSequence::new(vec![vec![doc.extended_ids[1], doc.extended_ids[2]], vec![doc.extended_ids[6]]]);
            let fake = KeyphraseSequence::new(vec![vec![9, 10, 11]]);
            checked(corrupt, name, &check_point(disc.params(), rng), |p| {
                let disc = DiscriminatorParams::from_params(p.clone())?;
                let mut g = Graph::new();
                let nodes = disc.bind(&mut g)?;
                let mut terms = nodes.bce_terms(&mut g, &doc, &real.phrases, true)?;
                terms.extend(nodes.bce_terms(&mut g, &doc, &fake.phrases, false)?);
                let loss = g.mean(&terms)?;
                Ok((g.scalar(loss), g.backward(loss)?))
            })
        }
        RL_CHECK => {
            let (vocab, dims) = tiny_vocab();
            let gen = GeneratorParams::new(dims, rng);
            let doc = tiny_doc(&vocab);
            let limits = DecodeLimits {
                max_len: 8,
                max_phrase_len: 6,
            };
            let mut sample_rng = seeded(rng.random());
            let sampled = loop {
                let s = sample_decode(&doc, &gen, limits, &mut sample_rng)?;
                if s.sequence.len() >= 2 {
                    break s;
                }
            };
            let advantages: Vec<f64> = (0..sampled.groups.len()).map(|i| 0.4 - 0.3 * i as f64).collect();
            checked(corrupt, name, &check_point(gen.params(), rng), |p| {
                let gen = GeneratorParams::from_params(p.clone())?;
                reinforce_grads(&doc, &gen, &sampled, &advantages)
            })
        }
        other => Err(Error::Config(format!("unknown gradient check {other:?}"))),
    }
}

fn tiny_vocab() -> (Vocabulary, ModelDims) {
    let vocab = Vocabulary::build("graph neural search model data learn network tree".split(' '), 13)
        .expect("fixed vocabulary");
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 4,
        hidden_dim: 5,
    };
    (vocab, dims)
}

fn tiny_doc(vocab: &Vocabulary) -> crate::corpus::Document {
    let tokens = "graph search over neural network models quadtree";
    encode_tokens(tokens.split(' ').map(str::to_string).collect(), vocab)
}

/// Redraws every parameter from `U(-CHECK_SCALE, CHECK_SCALE)`. At the
/// training init many recurrent-gate gradients are around 1e-7, below what
/// central differences resolve on an O(1) loss, so the end-to-end checks run
/// at a point where every path carries a measurable gradient.
fn check_point(params: &ParamSet, rng: &mut Rng) -> ParamSet {
    let mut out = ParamSet::new();
    for (name, t) in params.iter() {
        out.insert(name.clone(), random(t.shape(), -CHECK_SCALE, CHECK_SCALE, rng));
    }
    out
}

/// Runs every check. `corrupt` names a check whose analytic gradients are
/// deliberately perturbed, to prove that a broken backward pass is caught.
pub fn run_gradchecks(seed: u64, corrupt: Option<&str>) -> Result<GradcheckReport> {
    let all: Vec<&str> = CHECK_NAMES.iter().copied().chain([RL_CHECK]).collect();
    if let Some(c) = corrupt {
        if !all.contains(&c) {
            return Err(Error::Config(format!("unknown gradient check {c:?}")));
        }
    }
    let mut report = GradcheckReport::default();
    for (i, name) in all.into_iter().enumerate() {
        let mut rng = crate::rng::derived(seed, i as u64);
        report.checks.push(check_op(name, corrupt == Some(name), &mut rng)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_gradient_six_at_three() {
        let mut set = ParamSet::new();
        set.insert("x", Tensor::vector(vec![3.0]));
        let check = fd_check("square", &set, |p| {
            graph_eval(p, |g, x| {
                let sq = g.mul(x[0], x[0])?;
                g.pick(sq, 0)
            })
        })
        .unwrap();
        assert!(check.passed());
        let (_, grads) = graph_eval(&set, |g, x| {
            let sq = g.mul(x[0], x[0])?;
            g.pick(sq, 0)
        })
        .unwrap();
        assert!((grads.get("x").unwrap().data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut set = ParamSet::new();
        set.insert("a_used", Tensor::vector(vec![0.5, -0.2]));
        set.insert("b_unused", Tensor::vector(vec![1.0]));
        let (_, grads) = graph_eval(&set, |g, x| g.dot(x[0], x[0])).unwrap();
        assert_eq!(grads.get("b_unused").unwrap().data(), &[0.0]);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn every_check_passes() {
        let report = run_gradchecks(7, None).unwrap();
        assert!(report.checks.len() >= 10);
        assert!(report.passed(), "\n{report}");
    }

    #[test]
    fn corruption_is_caught_and_named() {
        let report = run_gradchecks(7, Some("softmax")).unwrap();
        let failed: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["softmax"]);
        assert!(run_gradchecks(7, Some("nonsense")).is_err());
    }
}
