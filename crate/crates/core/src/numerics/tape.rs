//! Reverse-mode automatic differentiation over a dynamically built tape.
//!
//! Every primitive records its output value and its inputs. A forward pass
//! appends nodes in topological order, so [`Tape::backward`] only has to walk
//! the node list in reverse, pushing each node's gradient into its inputs.
//!
//! Parameters enter the tape as leaves through [`Tape::param`]; a parameter is
//! copied at most once per tape, so recurrent reuse of the same weights
//! accumulates into a single leaf gradient.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    MatTVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Stack(Vec<NodeId>),
    Softmax(NodeId),
    LogSumExp(NodeId),
    SumSquares(NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Cosine(NodeId, NodeId),
    Normalize(NodeId, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: HashMap<ParamId, NodeId>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_leaves: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    /// Gradient with respect to `node`, or `None` when the loss does not depend on it.
    pub fn wrt(&self, node: NodeId) -> Option<&[f64]> {
        self.grads[node.0].as_deref()
    }

    /// Adds leaf gradients into the matching parameter accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(pid, node) in &self.param_leaves {
            if let Some(g) = &self.grads[node.0] {
                let p = store.get_mut(pid);
                for (acc, v) in p.grad.data_mut().iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
    }
}

fn check(name: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(name))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Numerically stable softmax of a non-empty slice.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax"));
    }
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Cosine similarity of two equal-length vectors; errors on a zero vector.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "cosine",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn vec_of(&self, id: NodeId, op: &'static str) -> Result<&[f64]> {
        let t = &self.nodes[id.0].value;
        if t.shape().len() > 1 {
            return Err(Error::shape(op, format!("expected a vector, got {:?}", t.shape())));
        }
        Ok(t.data())
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        let value = check("constant", value)?;
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Result<NodeId> {
        if data.is_empty() {
            return Err(Error::shape("constant", "empty vector"));
        }
        self.constant(Tensor::vector(data))
    }

    /// A differentiable leaf that is not tied to a parameter store.
    pub fn variable(&mut self, value: Tensor) -> Result<NodeId> {
        let value = check("variable", value)?;
        Ok(self.push(value, Op::Leaf, true))
    }

    /// Copy of `id` with the gradient path cut.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.nodes[id.0].value.clone();
        self.push(value, Op::Leaf, false)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_leaves.get(&id) {
            return node;
        }
        let p = store.get(id);
        let node = self.push(p.value.clone(), Op::Leaf, !p.frozen);
        self.param_leaves.insert(id, node);
        node
    }

    /// `W x` for a matrix `W` of shape `[r, c]` and a vector `x` of length `c`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let wt = &self.nodes[w.0].value;
        let xv = self.vec_of(x, "matvec")?;
        if !wt.is_matrix() || wt.cols() != xv.len() {
            return Err(Error::shape(
                "matvec",
                format!("{:?} times vector of length {}", wt.shape(), xv.len()),
            ));
        }
        let (r, c) = (wt.rows(), wt.cols());
        let wd = wt.data();
        let out: Vec<f64> = (0..r)
            .map(|i| {
                let row = &wd[i * c..(i + 1) * c];
                row.iter().zip(xv).map(|(a, b)| a * b).sum()
            })
            .collect();
        let v = check("matvec", Tensor::vector(out))?;
        let rg = self.rg(&[w, x]);
        Ok(self.push(v, Op::MatVec(w, x), rg))
    }

    /// `Mᵀ x` for a matrix `M` of shape `[r, c]` and a vector `x` of length `r`.
    pub fn mat_t_vec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let mt = &self.nodes[m.0].value;
        let xv = self.vec_of(x, "mat_t_vec")?;
        if !mt.is_matrix() || mt.rows() != xv.len() {
            return Err(Error::shape(
                "mat_t_vec",
                format!("{:?} transposed times vector of length {}", mt.shape(), xv.len()),
            ));
        }
        let (r, c) = (mt.rows(), mt.cols());
        let md = mt.data();
        let mut out = vec![0.0; c];
        for i in 0..r {
            let xi = xv[i];
            for (o, m) in out.iter_mut().zip(&md[i * c..(i + 1) * c]) {
                *o += m * xi;
            }
        }
        let v = check("mat_t_vec", Tensor::vector(out))?;
        let rg = self.rg(&[m, x]);
        Ok(self.push(v, Op::MatTVec(m, x), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = if ta.shape() == tb.shape() {
            ta.shape().to_vec()
        } else if ta.is_scalar() && tb.is_scalar() {
            Vec::new()
        } else {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        };
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let v = check(name, Tensor::new(shape, data)?)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let t = &self.nodes[a.0].value;
        let data: Vec<f64> = t.data().iter().map(|x| f(*x)).collect();
        let v = check(name, Tensor::new(t.shape().to_vec(), data)?)?;
        let rg = self.rg(&[a]);
        Ok(self.push(v, op, rg))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.unary("scale", a, |x| x * s, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    /// Concatenates vectors (or scalars) into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.vec_of(p, "concat")?);
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.vec_of(a, "slice")?;
        if len == 0 || start + len > v.len() {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) of length {}", start + len, v.len()),
            ));
        }
        let out = Tensor::vector(v[start..start + len].to_vec());
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Slice(a, start), rg))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::shape("stack", "no rows"));
        }
        let width = self.vec_of(rows[0], "stack")?.len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let v = self.vec_of(r, "stack")?;
            if v.len() != width {
                return Err(Error::shape("stack", format!("row widths {width} and {}", v.len())));
            }
            data.extend_from_slice(v);
        }
        let t = Tensor::matrix(rows.len(), width, data)?;
        let rg = self.rg(rows);
        Ok(self.push(t, Op::Stack(rows.to_vec()), rg))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = softmax(self.vec_of(a, "softmax")?)?;
        let t = check("softmax", Tensor::vector(v))?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Softmax(a), rg))
    }

    /// `log Σ exp(a_i)`, computed with max subtraction.
    pub fn log_sum_exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = log_sum_exp(self.vec_of(a, "log_sum_exp")?);
        let t = check("log_sum_exp", Tensor::scalar(v))?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::LogSumExp(a), rg))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.sum_squares();
        let t = check("sum_squares", Tensor::scalar(v))?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::SumSquares(a), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.data().iter().sum();
        let t = check("sum", Tensor::scalar(v))?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Sum(a), rg))
    }

    /// Sum of scalar nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let c = self.concat(terms)?;
        self.sum(c)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.vec_of(a, "dot")?, self.vec_of(b, "dot")?);
        if x.len() != y.len() {
            return Err(Error::shape("dot", format!("lengths {} and {}", x.len(), y.len())));
        }
        let v: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let t = check("dot", Tensor::scalar(v))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Dot(a, b), rg))
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = cosine_similarity(self.vec_of(a, "cosine")?, self.vec_of(b, "cosine")?)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(v), Op::Cosine(a, b), rg))
    }

    /// `a / sqrt(|a|^2 + eps^2)`; smooth at zero, unlike [`Tape::cosine`].
    pub fn normalize(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("normalize eps must be positive".into()));
        }
        let x = self.vec_of(a, "normalize")?;
        let r = (x.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt();
        let t = check("normalize", Tensor::vector(x.iter().map(|v| v / r).collect()))?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Normalize(a, eps), rg))
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.nodes[loss.0].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        let mut param_leaves: Vec<(ParamId, NodeId)> =
            self.param_leaves.iter().map(|(p, n)| (*p, *n)).collect();
        param_leaves.sort_by_key(|(p, _)| p.index());
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            param_leaves,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |id: NodeId| self.nodes[id.0].value.data();
        let needs = |id: NodeId| self.nodes[id.0].requires_grad;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatVec(w, x) => {
                let (wt, xv) = (&self.nodes[w.0].value, val(*x));
                let c = wt.cols();
                acc(*w, &mut |gw| {
                    for (i, gi) in g.iter().enumerate() {
                        if *gi != 0.0 {
                            for (d, xj) in gw[i * c..(i + 1) * c].iter_mut().zip(xv) {
                                *d += gi * xj;
                            }
                        }
                    }
                });
                if needs(*x) {
                    let wd = wt.data();
                    acc(*x, &mut |gx| {
                        for (i, gi) in g.iter().enumerate() {
                            for (d, w) in gx.iter_mut().zip(&wd[i * c..(i + 1) * c]) {
                                *d += gi * w;
                            }
                        }
                    });
                }
            }
            Op::MatTVec(m, x) => {
                let (mt, xv) = (&self.nodes[m.0].value, val(*x));
                let c = mt.cols();
                acc(*m, &mut |gm| {
                    for (i, xi) in xv.iter().enumerate() {
                        for (d, gj) in gm[i * c..(i + 1) * c].iter_mut().zip(g) {
                            *d += xi * gj;
                        }
                    }
                });
                if needs(*x) {
                    let md = mt.data();
                    acc(*x, &mut |gx| {
                        for (i, d) in gx.iter_mut().enumerate() {
                            *d += md[i * c..(i + 1) * c]
                                .iter()
                                .zip(g)
                                .map(|(m, gj)| m * gj)
                                .sum::<f64>();
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, v)| *d += v));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, v)| *d += v));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, v)| *d += v));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, v)| *d -= v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gi * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((d, gi), x) in gb.iter_mut().zip(g).zip(av) {
                        *d += gi * x;
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, v)| *d += s * v));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += gi * yi;
                    }
                });
            }
            Op::Log(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        *d += gi / xi;
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    let seg = &g[offset..offset + n];
                    acc(*p, &mut |gp| gp.iter_mut().zip(seg).for_each(|(d, v)| *d += v));
                    offset += n;
                }
            }
            Op::Slice(a, start) => {
                let start = *start;
                acc(*a, &mut |ga| {
                    for (d, v) in ga[start..start + g.len()].iter_mut().zip(g) {
                        *d += v;
                    }
                });
            }
            Op::Stack(rows) => {
                let width = node.value.cols();
                for (i, r) in rows.iter().enumerate() {
                    let seg = &g[i * width..(i + 1) * width];
                    acc(*r, &mut |gr| gr.iter_mut().zip(seg).for_each(|(d, v)| *d += v));
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let gy: f64 = g.iter().zip(y).map(|(p, q)| p * q).sum();
                acc(*a, &mut |ga| {
                    for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += yi * (gi - gy);
                    }
                });
            }
            Op::LogSumExp(a) => {
                let p = softmax(val(*a)).expect("finite by construction");
                acc(*a, &mut |ga| {
                    for (d, pi) in ga.iter_mut().zip(&p) {
                        *d += g[0] * pi;
                    }
                });
            }
            Op::SumSquares(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for (d, xi) in ga.iter_mut().zip(x) {
                        *d += 2.0 * g[0] * xi;
                    }
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |ga| ga.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| ga.iter_mut().zip(bv).for_each(|(d, y)| *d += g[0] * y));
                acc(*b, &mut |gb| gb.iter_mut().zip(av).for_each(|(d, x)| *d += g[0] * x));
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (na, nb) = (norm(av), norm(bv));
                let s: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
                acc(*a, &mut |ga| {
                    for ((d, x), y) in ga.iter_mut().zip(av).zip(bv) {
                        *d += g[0] * (y / (na * nb) - s * x / (na * na));
                    }
                });
                acc(*b, &mut |gb| {
                    for ((d, x), y) in gb.iter_mut().zip(av).zip(bv) {
                        *d += g[0] * (x / (na * nb) - s * y / (nb * nb));
                    }
                });
            }
            Op::Normalize(a, eps) => {
                let x = val(*a);
                let r = (x.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt();
                let xg: f64 = x.iter().zip(g).map(|(p, q)| p * q).sum();
                acc(*a, &mut |ga| {
                    for ((d, xi), gi) in ga.iter_mut().zip(x).zip(g) {
                        *d += gi / r - xi * xg / (r * r * r);
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_empty_is_error() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap().abs() < 1e-15);
        assert!((cosine_similarity(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn sum_of_parameter_gives_ones() {
        let mut store = ParamStore::new();
        let id = store
            .add("w", Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let loss = tape.sum(w).unwrap();
        let grads = tape.backward(loss).unwrap();
        grads.accumulate_into(&mut store);
        assert_eq!(store.get(id).grad.data(), &[1.0; 4]);
    }

    #[test]
    fn detached_branch_gets_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = tape.variable(Tensor::vector(vec![3.0, 4.0])).unwrap();
        let yd = tape.detach(y);
        let p = tape.mul(x, yd).unwrap();
        let loss = tape.sum(p).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), &[3.0, 4.0]);
        assert!(grads.wrt(y).is_none());
        assert!(grads.wrt(yd).is_none());
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let b = store.add("b", Tensor::vector(vec![5.0])).unwrap();
        let mut tape = Tape::new();
        let na = tape.param(&store, a);
        let _nb = tape.param(&store, b);
        let loss = tape.sum_squares(na).unwrap();
        tape.backward(loss).unwrap().accumulate_into(&mut store);
        assert_eq!(store.get(a).grad.data(), &[2.0, 4.0]);
        assert_eq!(store.get(b).grad.data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn non_finite_trips_error() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![0.0])).unwrap();
        assert!(matches!(tape.ln(x), Err(Error::NonFinite("log"))));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let w = tape.variable(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap()).unwrap();
        let x = tape.variable(Tensor::vector(vec![0.0; 2])).unwrap();
        assert!(matches!(tape.matvec(w, x), Err(Error::Shape { .. })));
        let y = tape.variable(Tensor::vector(vec![0.0; 3])).unwrap();
        assert!(tape.add(x, y).is_err());
    }

    #[test]
    fn shared_param_accumulates_once_per_use() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![2.0])).unwrap();
        let mut tape = Tape::new();
        let w1 = tape.param(&store, id);
        let w2 = tape.param(&store, id);
        assert_eq!(w1, w2);
        let p = tape.mul(w1, w2).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap().accumulate_into(&mut store);
        assert_eq!(store.get(id).grad.data(), &[4.0]);
    }

    #[test]
    fn normalize_gradient_matches_finite_difference() {
        let mut store = ParamStore::new();
        store.add("v", Tensor::vector(vec![0.3, -1.2, 0.7])).unwrap();
        let r = crate::numerics::grad_check(&mut store, 1e-6, 1e-6, |tape, store| {
            let v = tape.param(store, store.id("v").unwrap());
            let u = tape.normalize(v, 0.5)?;
            let w = tape.constant_vec(vec![1.0, 2.0, -0.5])?;
            let d = tape.dot(u, w)?;
            tape.mul(d, d)
        })
        .unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn normalize_zero_vector_is_finite() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let u = tape.normalize(x, 1e-8).unwrap();
        assert_eq!(tape.value(u).data(), &[0.0, 0.0]);
    }
}
