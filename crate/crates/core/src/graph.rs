//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape once in reverse. Trainable tensors enter through
//! [`Graph::param`] under a name, and gradients come back keyed by that name.
//! Parameters are shared by `Arc`, so binding a large embedding table does not
//! copy it.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatVec(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Ln(NodeId),
    Softplus(NodeId),
    ScaleBy(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Gather(NodeId, usize),
    Pick(NodeId, usize),
    Softmax(NodeId),
    StackRows(Vec<NodeId>),
    WeightedRows(NodeId, NodeId),
    Dot(NodeId, NodeId),
    ScatterAdd(NodeId, Vec<usize>),
    PadTo(NodeId),
    Sum(Vec<NodeId>),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Named gradients, one entry for every parameter bound on the graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.by_name.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.by_name.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.by_name.keys()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Adds `other` into `self`, inserting names that are not yet present.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.by_name {
            match self.by_name.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => {
                    self.by_name.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.by_name.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.by_name
            .values()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the
    /// norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub(crate) fn insert(&mut self, name: String, grad: Tensor) {
        self.by_name.insert(name, grad);
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.push_shared(Arc::new(value), op)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// A constant leaf; no gradient is reported for it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Binds a trainable tensor. Binding the same name twice returns the
    /// first node.
    pub fn param(&mut self, name: &str, value: Arc<Tensor>) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push_shared(value, Op::Param);
        self.params.insert(name.to_string(), id);
        id
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// `[m, k] x [k] -> [m]`
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::Dimension {
                op: "matvec",
                lhs: ws.to_vec(),
                rhs: xs.to_vec(),
            });
        }
        let out = tensor::matmul(self.value(w), self.value(x))?;
        Ok(self.push(out, Op::MatVec(w, x)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(b).len() != 2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.same_shape(name, a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let src = self.value(a);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(out, op)
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        self.map(a, |v| scale * v + shift, Op::Affine(a, scale))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 0.0)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, tensor::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::ln, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.map(a, tensor::softplus, Op::Softplus(a))
    }

    /// Multiplies every element of `v` by the scalar node `s`.
    pub fn scale_by(&mut self, v: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(Error::Dimension {
                op: "scale_by",
                lhs: self.shape(v).to_vec(),
                rhs: self.shape(s).to_vec(),
            });
        }
        let k = self.scalar(s);
        let src = self.value(v);
        let data = src.data().iter().map(|&x| x * k).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        Ok(self.push(out, Op::ScaleBy(v, s)))
    }

    /// Concatenates flat vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Input("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Row `row` of a matrix, as a vector (embedding lookup).
    pub fn gather(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape().len() != 2 || row >= t.rows() {
            return Err(Error::Dimension {
                op: "gather",
                lhs: t.shape().to_vec(),
                rhs: vec![row],
            });
        }
        let out = Tensor::vector(t.row(row).to_vec());
        Ok(self.push(out, Op::Gather(table, row)))
    }

    /// Element `index` as a scalar node.
    pub fn pick(&mut self, v: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(v);
        if index >= t.len() {
            return Err(Error::Dimension {
                op: "pick",
                lhs: t.shape().to_vec(),
                rhs: vec![index],
            });
        }
        let out = Tensor::scalar(t.data()[index]);
        Ok(self.push(out, Op::Pick(v, index)))
    }

    pub fn softmax(&mut self, v: NodeId, mask: Option<&[bool]>) -> Result<NodeId> {
        let probs = tensor::softmax(self.data(v), mask)?;
        let out = Tensor::new(self.shape(v).to_vec(), probs)?;
        Ok(self.push(out, Op::Softmax(v)))
    }

    /// Stacks equal-length vectors into an `[n, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Input("stack of nothing".into()))?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(d * rows.len());
        for &r in rows {
            if self.value(r).len() != d {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: vec![d],
                    rhs: self.shape(r).to_vec(),
                });
            }
            data.extend_from_slice(self.data(r));
        }
        let out = Tensor::new(vec![rows.len(), d], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    /// `sum_i w_i * rows_i` for an `[n, d]` matrix and `[n]` weights.
    pub fn weighted_rows(&mut self, rows: NodeId, weights: NodeId) -> Result<NodeId> {
        let (ms, ws) = (self.shape(rows), self.shape(weights));
        if ms.len() != 2 || ws.len() != 1 || ms[0] != ws[0] {
            return Err(Error::Dimension {
                op: "weighted_rows",
                lhs: ms.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (n, d) = (ms[0], ms[1]);
        let m = self.value(rows);
        let w = self.data(weights);
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, &h) in out.iter_mut().zip(m.row(i)) {
                *o += w[i] * h;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::WeightedRows(rows, weights)))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::Dimension {
                op: "dot",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    /// Output of length `size` where `out[indices[i]] += src[i]`.
    pub fn scatter_add(&mut self, src: NodeId, indices: &[usize], size: usize) -> Result<NodeId> {
        let s = self.data(src);
        if s.len() != indices.len() || indices.iter().any(|&i| i >= size) {
            return Err(Error::Dimension {
                op: "scatter_add",
                lhs: vec![s.len()],
                rhs: vec![indices.len(), size],
            });
        }
        let mut out = vec![0.0; size];
        for (&i, &v) in indices.iter().zip(s) {
            out[i] += v;
        }
        Ok(self.push(Tensor::vector(out), Op::ScatterAdd(src, indices.to_vec())))
    }

    /// Extends a vector with zeros up to `size`.
    pub fn pad_to(&mut self, v: NodeId, size: usize) -> Result<NodeId> {
        let s = self.data(v);
        if s.len() > size {
            return Err(Error::Dimension {
                op: "pad_to",
                lhs: vec![s.len()],
                rhs: vec![size],
            });
        }
        let mut out = s.to_vec();
        out.resize(size, 0.0);
        Ok(self.push(Tensor::vector(out), Op::PadTo(v)))
    }

    /// Sum of same-shaped nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Input("sum of nothing".into()))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            self.same_shape("sum", first, p)?;
            for (a, b) in acc.data_mut().iter_mut().zip(self.data(p)) {
                *a += b;
            }
        }
        Ok(self.push(acc, Op::Sum(parts.to_vec())))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let total = self.sum(parts)?;
        Ok(self.affine(total, 1.0 / parts.len() as f64, 0.0))
    }

    /// Reverse sweep from a scalar `loss`. Every bound parameter gets an
    /// entry; parameters the loss does not reach get exact zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Dimension {
                op: "backward",
                lhs: lv.shape().to_vec(),
                rhs: vec![1],
            });
        }
        if !lv.item().is_finite() {
            return Err(Error::Numeric("loss".into()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut out = Gradients::default();
        for (name, id) in &self.params {
            let shape = self.shape(*id).to_vec();
            let grad = match grads.get_mut(id.0).and_then(Option::take) {
                Some(data) => Tensor::new(shape, data)?,
                None => Tensor::zeros(&shape),
            };
            if !grad.is_finite() {
                return Err(Error::Numeric(format!("gradient of {name}")));
            }
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatVec(w, x) => {
                let wt = self.value(*w);
                let xd = self.data(*x);
                let (m, k) = (wt.rows(), wt.cols());
                let gw = slot(grads, *w, m * k);
                for i in 0..m {
                    if g[i] == 0.0 {
                        continue;
                    }
                    let row = &mut gw[i * k..(i + 1) * k];
                    for (r, &xv) in row.iter_mut().zip(xd) {
                        *r += g[i] * xv;
                    }
                }
                let gx = slot(grads, *x, k);
                for i in 0..m {
                    if g[i] == 0.0 {
                        continue;
                    }
                    for (o, &wv) in gx.iter_mut().zip(wt.row(i)) {
                        *o += g[i] * wv;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let (m, k, n) = (at.rows(), at.cols(), bt.cols());
                let ga = slot(grads, *a, m * k);
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bt.data()[p * n + j];
                        }
                        ga[i * k + p] += s;
                    }
                }
                let gb = slot(grads, *b, k * n);
                for i in 0..m {
                    for p in 0..k {
                        let av = at.data()[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                add_into(slot(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                for (o, &v) in slot(grads, *b, g.len()).iter_mut().zip(g) {
                    *o -= v;
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                for ((o, &v), &bv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(bd) {
                    *o += v * bv;
                }
                for ((o, &v), &av) in slot(grads, *b, g.len()).iter_mut().zip(g).zip(ad) {
                    *o += v * av;
                }
            }
            Op::Affine(a, scale) => {
                for (o, &v) in slot(grads, *a, g.len()).iter_mut().zip(g) {
                    *o += scale * v;
                }
            }
            Op::Sigmoid(a) => {
                for ((o, &v), &s) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *o += v * s * (1.0 - s);
                }
            }
            Op::Tanh(a) => {
                for ((o, &v), &t) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *o += v * (1.0 - t * t);
                }
            }
            Op::Ln(a) => {
                let x = self.data(*a);
                for ((o, &v), &xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    *o += v / xv;
                }
            }
            Op::Softplus(a) => {
                let x = self.data(*a);
                for ((o, &v), &xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    *o += v * tensor::sigmoid(xv);
                }
            }
            Op::ScaleBy(v, s) => {
                let k = self.scalar(*s);
                let vd = self.data(*v);
                for (o, &gv) in slot(grads, *v, g.len()).iter_mut().zip(g) {
                    *o += gv * k;
                }
                let ds: f64 = g.iter().zip(vd).map(|(a, b)| a * b).sum();
                slot(grads, *s, 1)[0] += ds;
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    add_into(slot(grads, p, n), &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Gather(table, row) => {
                let t = self.value(*table);
                let d = t.cols();
                let gt = slot(grads, *table, t.len());
                add_into(&mut gt[row * d..(row + 1) * d], g);
            }
            Op::Pick(v, index) => {
                let n = self.value(*v).len();
                slot(grads, *v, n)[*index] += g[0];
            }
            Op::Softmax(v) => {
                let inner: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for ((o, &gv), &p) in slot(grads, *v, g.len()).iter_mut().zip(g).zip(y) {
                    *o += p * (gv - inner);
                }
            }
            Op::StackRows(rows) => {
                let d = self.value(rows[0]).len();
                for (i, &r) in rows.iter().enumerate() {
                    add_into(slot(grads, r, d), &g[i * d..(i + 1) * d]);
                }
            }
            Op::WeightedRows(rows, weights) => {
                let m = self.value(*rows);
                let (n, d) = (m.rows(), m.cols());
                let w = self.data(*weights);
                let gm = slot(grads, *rows, n * d);
                for i in 0..n {
                    for (o, &gv) in gm[i * d..(i + 1) * d].iter_mut().zip(g) {
                        *o += w[i] * gv;
                    }
                }
                let gw = slot(grads, *weights, n);
                for i in 0..n {
                    gw[i] += m.row(i).iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Op::Dot(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                for (o, &bv) in slot(grads, *a, ad.len()).iter_mut().zip(bd) {
                    *o += g[0] * bv;
                }
                for (o, &av) in slot(grads, *b, bd.len()).iter_mut().zip(ad) {
                    *o += g[0] * av;
                }
            }
            Op::ScatterAdd(src, indices) => {
                let gs = slot(grads, *src, indices.len());
                for (o, &i) in gs.iter_mut().zip(indices) {
                    *o += g[i];
                }
            }
            Op::PadTo(v) => {
                let n = self.value(*v).len();
                add_into(slot(grads, *v, n), &g[..n]);
            }
            Op::Sum(parts) => {
                for &p in parts {
                    add_into(slot(grads, p, g.len()), g);
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(g: &mut Graph, name: &str, t: Tensor) -> NodeId {
        g.param(name, Arc::new(t))
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = p(&mut g, "x", Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get("x").unwrap().item(), 6.0);
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let mut g = Graph::new();
        let x = p(&mut g, "x", Tensor::scalar(2.0));
        let _unused = p(&mut g, "p", Tensor::vector(vec![1.0, 2.0]));
        let y = g.tanh(x);
        let grads = g.backward(y).unwrap();
        assert!(grads.get("p").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(grads.len(), 2);
    }

    #[test]
    fn rebinding_a_name_reuses_node() {
        let mut g = Graph::new();
        let a = p(&mut g, "w", Tensor::scalar(1.0));
        let b = p(&mut g, "w", Tensor::scalar(5.0));
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let mut g = Graph::new();
        let x = p(&mut g, "x", Tensor::scalar(0.0));
        let y = g.ln(x);
        assert!(matches!(g.backward(y), Err(Error::Numeric(_))));
    }

    #[test]
    fn matvec_shape_error() {
        let mut g = Graph::new();
        let w = g.input(Tensor::zeros(&[2, 3]));
        let x = g.input(Tensor::zeros(&[2]));
        assert!(g.matvec(w, x).is_err());
    }

    #[test]
    fn clip_norm_rescales() {
        let mut grads = Gradients::default();
        grads.insert("a".into(), Tensor::vector(vec![3.0, 4.0]));
        let before = grads.clip_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
    }
}
