//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] evaluates eagerly and records each operation. Parameters are
//! borrowed from a [`ParameterStore`]; [`Tape::backward`] walks the record in
//! reverse and accumulates parameter gradients into a [`GradBuffer`].

use super::{GradBuffer, NnError, ParamId, ParameterStore, Tensor};
use crate::locnet::{score_mu, score_sigma};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Local derivative given the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Logistic function, split by sign so neither branch overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Act { x: NodeId, kind: Activation },
    Floor { x: NodeId, min: f64 },
    Concat { a: NodeId, b: NodeId },
    MeanRows { x: NodeId, rows: usize },
    PrefixMean { x: NodeId },
    PairAdd { a: NodeId, b: NodeId },
    CausalAttend { scores: NodeId, values: NodeId, weights: Vec<f64> },
    MaskRows { x: NodeId, mask: Vec<f64> },
    SoftmaxCrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    GaussianLogDensity { mu: NodeId, sigma: NodeId, x: f64 },
    SquaredError { x: NodeId, target: f64 },
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
    kinks: Vec<bool>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct NodeGrads {
    grads: Vec<Option<Tensor>>,
}

impl NodeGrads {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

fn shape_err(op: &'static str, detail: String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

/// Index of pair `(target i, source j <= i)` in the packed lower triangle.
#[inline]
pub fn pair_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            kinks: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.value(*p),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    /// Sign pattern of every relu input and floor comparison so far.
    pub fn kink_signature(&self) -> &[bool] {
        &self.kinks
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value: Some(value), op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.index()] {
            return n;
        }
        self.nodes.push(Node { value: None, op: Op::Param(id), requires_grad: true });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.index()] = Some(n);
        n
    }

    /// `y = x W + b` for `x: [n, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, NnError> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[0] {
            return Err(shape_err(
                "linear",
                format!("x {:?} vs W {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (n, din, dout) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
        let mut out = vec![0.0; n * dout];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != dout {
                return Err(shape_err("linear", format!("bias {:?} vs d_out {dout}", bv.shape())));
            }
            for r in 0..n {
                out[r * dout..(r + 1) * dout].copy_from_slice(bv.data());
            }
        }
        let (xd, wd) = (xv.data(), wv.data());
        for r in 0..n {
            let orow = &mut out[r * dout..(r + 1) * dout];
            for k in 0..din {
                let xk = xd[r * din + k];
                if xk == 0.0 {
                    continue;
                }
                let wrow = &wd[k * dout..(k + 1) * dout];
                for (o, wv) in orow.iter_mut().zip(wrow) {
                    *o += xk * wv;
                }
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.needs(&deps);
        Ok(self.push(Tensor::matrix(n, dout, out)?, Op::Linear { x, w, b }, rg))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let xv = self.value(x);
        let data: Vec<f64> = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let pattern: Vec<bool> = match kind {
            Activation::Relu => xv.data().iter().map(|&v| v > 0.0).collect(),
            _ => Vec::new(),
        };
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.kinks.extend(pattern);
        let rg = self.needs(&[x]);
        self.push(t, Op::Act { x, kind }, rg)
    }

    /// Elementwise `max(x, min)`.
    pub fn floor(&mut self, x: NodeId, min: f64) -> NodeId {
        let xv = self.value(x);
        let data: Vec<f64> = xv.data().iter().map(|&v| v.max(min)).collect();
        let pattern: Vec<bool> = xv.data().iter().map(|&v| v > min).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.kinks.extend(pattern);
        let rg = self.needs(&[x]);
        self.push(t, Op::Floor { x, min }, rg)
    }

    /// Column-wise concatenation of two row-aligned matrices.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let (n, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Vec::with_capacity(n * (ca + cb));
        for r in 0..n {
            out.extend_from_slice(av.row(r));
            out.extend_from_slice(bv.row(r));
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(n, ca + cb, out)?, Op::Concat { a, b }, rg))
    }

    /// Column means over the first `rows` rows, as a `[1, d]` row.
    pub fn mean_rows(&mut self, x: NodeId, rows: usize) -> Result<NodeId, NnError> {
        let xv = self.value(x);
        if rows == 0 {
            return Err(NnError::EmptyInput("mean_rows"));
        }
        if rows > xv.rows() {
            return Err(shape_err("mean_rows", format!("{rows} rows of {:?}", xv.shape())));
        }
        let d = xv.cols();
        let mut out = vec![0.0; d];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let inv = rows as f64;
        out.iter_mut().for_each(|o| *o /= inv);
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::row_vector(out), Op::MeanRows { x, rows }, rg))
    }

    /// Row `i` of the output is the mean of input rows `0..=i`.
    pub fn prefix_mean(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        if n == 0 {
            return Err(NnError::EmptyInput("prefix_mean"));
        }
        let mut sum = vec![0.0; d];
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for (s, v) in sum.iter_mut().zip(xv.row(r)) {
                *s += v;
            }
            let count = (r + 1) as f64;
            out.extend(sum.iter().map(|s| s / count));
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(n, d, out)?, Op::PrefixMean { x }, rg))
    }

    /// Packed lower-triangle pair rows: row `(i, j <= i)` is `a[j] + b[i]`.
    pub fn pair_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("pair_add", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let (n, d) = (av.rows(), av.cols());
        let pairs = n * (n + 1) / 2;
        let mut out = Vec::with_capacity(pairs * d);
        for i in 0..n {
            let bi = bv.row(i);
            for j in 0..=i {
                out.extend(av.row(j).iter().zip(bi).map(|(x, y)| x + y));
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(pairs, d, out)?, Op::PairAdd { a, b }, rg))
    }

    /// For each target `i`, softmax over the packed scores of sources `j <= i`,
    /// then the weighted sum of `values[j]`.
    pub fn causal_attend(&mut self, scores: NodeId, values: NodeId) -> Result<NodeId, NnError> {
        let (sv, vv) = (self.value(scores), self.value(values));
        let (n, d) = (vv.rows(), vv.cols());
        if sv.cols() != 1 || sv.rows() != n * (n + 1) / 2 {
            return Err(shape_err(
                "causal_attend",
                format!("scores {:?} for {n} values", sv.shape()),
            ));
        }
        let s = sv.data();
        let mut weights = vec![0.0; s.len()];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let base = pair_index(i, 0);
            let seg = &s[base..=base + i];
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (w, &x) in weights[base..=base + i].iter_mut().zip(seg) {
                *w = (x - max).exp();
                z += *w;
            }
            let orow = &mut out[i * d..(i + 1) * d];
            for j in 0..=i {
                let w = &mut weights[base + j];
                *w /= z;
                for (o, v) in orow.iter_mut().zip(vv.row(j)) {
                    *o += *w * v;
                }
            }
        }
        let rg = self.needs(&[scores, values]);
        Ok(self.push(
            Tensor::matrix(n, d, out)?,
            Op::CausalAttend { scores, values, weights },
            rg,
        ))
    }

    /// `mask^T x` as a `[1, d]` row.
    pub fn mask_rows(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId, NnError> {
        let xv = self.value(x);
        if mask.len() != xv.rows() {
            return Err(shape_err("mask_rows", format!("mask {} vs {:?}", mask.len(), xv.shape())));
        }
        let d = xv.cols();
        let mut out = vec![0.0; d];
        for (r, &m) in mask.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(xv.row(r)) {
                *o += m * v;
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::row_vector(out), Op::MaskRows { x, mask }, rg))
    }

    /// Scalar `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId, NnError> {
        let lv = self.value(logits);
        if lv.rows() != 1 || label >= lv.cols() {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("logits {:?}, label {label}", lv.shape()),
            ));
        }
        let ce = softmax_cross_entropy(lv.data(), label);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(ce.loss),
            Op::SoftmaxCrossEntropy { logits, label, probs: ce.probs },
            rg,
        ))
    }

    /// Scalar `log N(x; mu, sigma)` for scalar `mu`, `sigma` nodes and a fixed sample `x`.
    pub fn gaussian_log_density(&mut self, mu: NodeId, sigma: NodeId, x: f64) -> Result<NodeId, NnError> {
        let (m, s) = (self.value(mu), self.value(sigma));
        if m.len() != 1 || s.len() != 1 {
            return Err(shape_err("gaussian_log_density", "mu and sigma must be scalars".into()));
        }
        let value = gaussian_log_density(x, m.item(), s.item());
        let rg = self.needs(&[mu, sigma]);
        Ok(self.push(Tensor::scalar(value), Op::GaussianLogDensity { mu, sigma, x }, rg))
    }

    /// Scalar `0.5 (x - target)^2`.
    pub fn squared_error(&mut self, x: NodeId, target: f64) -> Result<NodeId, NnError> {
        let xv = self.value(x);
        if xv.len() != 1 {
            return Err(shape_err("squared_error", format!("{:?}", xv.shape())));
        }
        let d = xv.item() - target;
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(0.5 * d * d), Op::SquaredError { x, target }, rg))
    }

    /// Scalar `sum_i w_i * node_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> Result<NodeId, NnError> {
        let mut total = 0.0;
        for &(id, w) in &terms {
            let v = self.value(id);
            if v.len() != 1 {
                return Err(shape_err("weighted_sum", format!("term {:?}", v.shape())));
            }
            total += w * v.item();
        }
        let ids: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        let rg = self.needs(&ids);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms }, rg))
    }

    /// Propagates `seeds` (upstream gradients) back through the record,
    /// adding parameter gradients into `buf`.
    pub fn backward(&self, seeds: &[(NodeId, Tensor)], buf: &mut GradBuffer) -> Result<NodeGrads, NnError> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            if g.len() != self.value(*id).len() {
                return Err(shape_err("backward", format!("seed {:?} for {:?}", g.shape(), self.value(*id).shape())));
            }
            accumulate(&mut grads, *id, g.clone(), self);
        }
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(owned) = grads[i].take() else { continue };
            let g = &owned;
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => buf.get_mut(*p).add_assign(g),
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, din, dout) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
                    let gd = g.data();
                    if self.nodes[w.0].requires_grad {
                        let mut dw = vec![0.0; din * dout];
                        let xd = xv.data();
                        for r in 0..n {
                            let grow = &gd[r * dout..(r + 1) * dout];
                            for k in 0..din {
                                let xk = xd[r * din + k];
                                if xk == 0.0 {
                                    continue;
                                }
                                for (d, gv) in dw[k * dout..(k + 1) * dout].iter_mut().zip(grow) {
                                    *d += xk * gv;
                                }
                            }
                        }
                        let t = Tensor::new(wv.shape().to_vec(), dw)?;
                        add_grad(&mut grads, *w, t);
                    }
                    if let Some(b) = b {
                        if self.nodes[b.0].requires_grad {
                            let mut db = vec![0.0; dout];
                            for r in 0..n {
                                for (d, gv) in db.iter_mut().zip(&gd[r * dout..(r + 1) * dout]) {
                                    *d += gv;
                                }
                            }
                            let t = Tensor::new(self.value(*b).shape().to_vec(), db)?;
                            add_grad(&mut grads, *b, t);
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let wd = wv.data();
                        let mut dx = vec![0.0; n * din];
                        for r in 0..n {
                            let grow = &gd[r * dout..(r + 1) * dout];
                            for k in 0..din {
                                let wrow = &wd[k * dout..(k + 1) * dout];
                                dx[r * din + k] = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                            }
                        }
                        let t = Tensor::new(xv.shape().to_vec(), dx)?;
                        add_grad(&mut grads, *x, t);
                    }
                }
                Op::Act { x, kind } => {
                    let xv = self.value(*x);
                    let yv = node.value.as_ref().expect("activation value");
                    let dx: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(xv.data().iter().zip(yv.data()))
                        .map(|(gv, (&xi, &yi))| gv * kind.derivative(xi, yi))
                        .collect();
                    add_grad(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::Floor { x, min } => {
                    let xv = self.value(*x);
                    let dx: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gv, &xi)| if xi > *min { *gv } else { 0.0 })
                        .collect();
                    add_grad(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::Concat { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, ca, cb) = (av.rows(), av.cols(), bv.cols());
                    let mut da = Vec::with_capacity(n * ca);
                    let mut db = Vec::with_capacity(n * cb);
                    for r in 0..n {
                        let row = g.row(r);
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    if self.nodes[a.0].requires_grad {
                        add_grad(&mut grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                    }
                    if self.nodes[b.0].requires_grad {
                        add_grad(&mut grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                    }
                }
                Op::MeanRows { x, rows } => {
                    let xv = self.value(*x);
                    let d = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    let inv = *rows as f64;
                    for r in 0..*rows {
                        for (o, gv) in dx[r * d..(r + 1) * d].iter_mut().zip(g.data()) {
                            *o = gv / inv;
                        }
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::PrefixMean { x } => {
                    let xv = self.value(*x);
                    let (n, d) = (xv.rows(), xv.cols());
                    // dx[j] = sum_{i >= j} g[i] / (i + 1), a suffix sum.
                    let mut dx = vec![0.0; n * d];
                    let mut acc = vec![0.0; d];
                    for i in (0..n).rev() {
                        let count = (i + 1) as f64;
                        for (a, gv) in acc.iter_mut().zip(g.row(i)) {
                            *a += gv / count;
                        }
                        dx[i * d..(i + 1) * d].copy_from_slice(&acc);
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::PairAdd { a, b } => {
                    let av = self.value(*a);
                    let (n, d) = (av.rows(), av.cols());
                    let mut da = vec![0.0; n * d];
                    let mut db = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..=i {
                            let grow = g.row(pair_index(i, j));
                            for c in 0..d {
                                da[j * d + c] += grow[c];
                                db[i * d + c] += grow[c];
                            }
                        }
                    }
                    if self.nodes[a.0].requires_grad {
                        add_grad(&mut grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                    }
                    if self.nodes[b.0].requires_grad {
                        add_grad(&mut grads, *b, Tensor::new(av.shape().to_vec(), db)?);
                    }
                }
                Op::CausalAttend { scores, values, weights } => {
                    let vv = self.value(*values);
                    let (n, d) = (vv.rows(), vv.cols());
                    let mut dv = vec![0.0; n * d];
                    let mut ds = vec![0.0; weights.len()];
                    for i in 0..n {
                        let base = pair_index(i, 0);
                        let grow = g.row(i);
                        let mut dot = 0.0;
                        for j in 0..=i {
                            let w = weights[base + j];
                            let dw: f64 = grow.iter().zip(vv.row(j)).map(|(a, b)| a * b).sum();
                            ds[base + j] = dw;
                            dot += w * dw;
                            for (o, gv) in dv[j * d..(j + 1) * d].iter_mut().zip(grow) {
                                *o += w * gv;
                            }
                        }
                        for j in 0..=i {
                            ds[base + j] = weights[base + j] * (ds[base + j] - dot);
                        }
                    }
                    if self.nodes[values.0].requires_grad {
                        add_grad(&mut grads, *values, Tensor::new(vv.shape().to_vec(), dv)?);
                    }
                    if self.nodes[scores.0].requires_grad {
                        let sshape = self.value(*scores).shape().to_vec();
                        add_grad(&mut grads, *scores, Tensor::new(sshape, ds)?);
                    }
                }
                Op::MaskRows { x, mask } => {
                    let xv = self.value(*x);
                    let d = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    for (r, &m) in mask.iter().enumerate() {
                        if m == 0.0 {
                            continue;
                        }
                        for (o, gv) in dx[r * d..(r + 1) * d].iter_mut().zip(g.data()) {
                            *o = m * gv;
                        }
                    }
                    add_grad(&mut grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                Op::SoftmaxCrossEntropy { logits, label, probs } => {
                    let gv = g.item();
                    let mut dl: Vec<f64> = probs.iter().map(|p| gv * p).collect();
                    dl[*label] -= gv;
                    let shape = self.value(*logits).shape().to_vec();
                    add_grad(&mut grads, *logits, Tensor::new(shape, dl)?);
                }
                Op::GaussianLogDensity { mu, sigma, x } => {
                    let gv = g.item();
                    let (m, s) = (self.value(*mu).item(), self.value(*sigma).item());
                    if self.nodes[mu.0].requires_grad {
                        add_grad(&mut grads, *mu, Tensor::scalar(gv * score_mu(*x, m, s)));
                    }
                    if self.nodes[sigma.0].requires_grad {
                        add_grad(&mut grads, *sigma, Tensor::scalar(gv * score_sigma(*x, m, s)));
                    }
                }
                Op::SquaredError { x, target } => {
                    let d = self.value(*x).item() - target;
                    add_grad(&mut grads, *x, Tensor::scalar(g.item() * d));
                }
                Op::WeightedSum { terms } => {
                    let gv = g.item();
                    for &(id, w) in terms {
                        if self.nodes[id.0].requires_grad {
                            add_grad(&mut grads, id, Tensor::scalar(gv * w));
                        }
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(owned);
            }
        }
        Ok(NodeGrads { grads })
    }

    /// Backward from a scalar node with unit seed.
    pub fn backward_scalar(&self, loss: NodeId, buf: &mut GradBuffer) -> Result<NodeGrads, NnError> {
        self.backward(&[(loss, Tensor::scalar(1.0))], buf)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor, tape: &Tape<'_>) {
    let shape = tape.value(id).shape().to_vec();
    let g = Tensor::new(shape, g.into_data()).expect("seed length checked");
    add_grad(grads, id, g);
}

fn add_grad(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Vec<f64>,
}

impl CrossEntropy {
    /// `d loss / d logits = probs - one_hot(label)`.
    pub fn grad(&self, label: usize) -> Vec<f64> {
        let mut g = self.probs.clone();
        g[label] -= 1.0;
        g
    }
}

/// Max-shifted softmax probabilities.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> CrossEntropy {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = z.ln() + max;
    let probs = logits.iter().map(|l| (l - log_z).exp()).collect();
    CrossEntropy { loss: log_z - logits[label], probs }
}

pub fn gaussian_log_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
}
