//! Gated recurrent unit.
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r * h) + b_n)
//! h' = (1 - z) * h + z * n
//! ```
//!
//! The reset gate multiplies the previous state before the recurrent matrix.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;

const GATES: [&str; 3] = ["z", "r", "n"];

/// Names and sizes of one GRU's nine tensors inside a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruSpec {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruSpec {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
        }
    }

    fn name(&self, kind: &str, gate: &str) -> String {
        format!("{}.{}_{}", self.prefix, kind, gate)
    }

    pub fn init(&self, set: &mut ParamSet, rng: &mut Rng) {
        for gate in GATES {
            set.init_uniform(self.name("w", gate), &[self.hidden_dim, self.input_dim], rng);
            set.init_uniform(self.name("u", gate), &[self.hidden_dim, self.hidden_dim], rng);
            set.init_zeros(self.name("b", gate), &[self.hidden_dim]);
        }
    }

    pub fn validate(&self, set: &ParamSet) -> Result<()> {
        for gate in GATES {
            let expected = [
                (self.name("w", gate), vec![self.hidden_dim, self.input_dim]),
                (self.name("u", gate), vec![self.hidden_dim, self.hidden_dim]),
                (self.name("b", gate), vec![self.hidden_dim]),
            ];
            for (name, shape) in expected {
                let found = set.shape_of(&name)?;
                if found != shape.as_slice() {
                    return Err(Error::Dimension {
                        op: "gru params",
                        lhs: shape,
                        rhs: found.to_vec(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn bind(&self, graph: &mut Graph, set: &ParamSet) -> Result<GruNodes> {
        let mut ids = Vec::with_capacity(9);
        for gate in GATES {
            ids.push(set.bind(graph, &self.name("w", gate))?);
            ids.push(set.bind(graph, &self.name("u", gate))?);
            ids.push(set.bind(graph, &self.name("b", gate))?);
        }
        Ok(GruNodes {
            w: [ids[0], ids[3], ids[6]],
            u: [ids[1], ids[4], ids[7]],
            b: [ids[2], ids[5], ids[8]],
            hidden_dim: self.hidden_dim,
        })
    }
}

/// A GRU bound on a graph.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    w: [NodeId; 3],
    u: [NodeId; 3],
    b: [NodeId; 3],
    hidden_dim: usize,
}

impl GruNodes {
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId) -> Result<NodeId> {
        let gate = |g: &mut Graph, i: usize, recurrent: NodeId| -> Result<NodeId> {
            let wx = g.matvec(self.w[i], x)?;
            let uh = g.matvec(self.u[i], recurrent)?;
            let s = g.add(wx, uh)?;
            g.add(s, self.b[i])
        };
        let z_pre = gate(g, 0, h)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, 1, h)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h)?;
        let n_pre = gate(g, 2, rh)?;
        let n = g.tanh(n_pre);
        let keep = g.one_minus(z);
        let old = g.mul(keep, h)?;
        let new = g.mul(z, n)?;
        g.add(old, new)
    }

    /// Runs over `inputs` starting from `h0`; returns one state per input,
    /// in input order even when `reverse` is set.
    pub fn run(
        &self,
        g: &mut Graph,
        inputs: &[NodeId],
        h0: NodeId,
        reverse: bool,
    ) -> Result<Vec<NodeId>> {
        let mut states = vec![h0; inputs.len()];
        let mut h = h0;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..inputs.len()).rev())
        } else {
            Box::new(0..inputs.len())
        };
        for i in order {
            h = self.step(g, inputs[i], h)?;
            states[i] = h;
        }
        Ok(states)
    }
}

/// Bidirectional run over a sequence.
#[derive(Clone, Debug)]
pub struct BiStates {
    /// `[forward_i ; backward_i]` per position.
    pub states: Vec<NodeId>,
    pub final_forward: NodeId,
    pub final_backward: NodeId,
}

pub fn bidirectional(
    g: &mut Graph,
    forward: &GruNodes,
    backward: &GruNodes,
    inputs: &[NodeId],
) -> Result<BiStates> {
    if inputs.is_empty() {
        return Err(Error::Input("bidirectional GRU over an empty sequence".into()));
    }
    let zero_f = g.input(Tensor::zeros(&[forward.hidden_dim]));
    let zero_b = g.input(Tensor::zeros(&[backward.hidden_dim]));
    let fwd = forward.run(g, inputs, zero_f, false)?;
    let bwd = backward.run(g, inputs, zero_b, true)?;
    let states = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(BiStates {
        states,
        final_forward: *fwd.last().expect("non-empty"),
        final_backward: bwd[0],
    })
}

/// One GRU step on plain tensors, using the GRU named `prefix` in `params`.
pub fn gru_cell(x: &Tensor, h_prev: &Tensor, params: &ParamSet, prefix: &str) -> Result<Tensor> {
    let w = params.shape_of(&format!("{prefix}.w_z"))?;
    let spec = GruSpec::new(prefix, w[1], w[0]);
    spec.validate(params)?;
    if x.shape() != [spec.input_dim] || h_prev.shape() != [spec.hidden_dim] {
        return Err(Error::Dimension {
            op: "gru_cell",
            lhs: vec![spec.input_dim, spec.hidden_dim],
            rhs: vec![x.len(), h_prev.len()],
        });
    }
    let mut g = Graph::new();
    let nodes = spec.bind(&mut g, params)?;
    let xi = g.input(x.clone());
    let hi = g.input(h_prev.clone());
    let out = nodes.step(&mut g, xi, hi)?;
    Ok(g.value(out).clone())
}
