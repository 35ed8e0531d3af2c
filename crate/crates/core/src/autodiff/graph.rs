//! Reverse-mode automatic differentiation over a linear record of
//! matrix operations. Nodes are appended in forward order, so the
//! record is already topologically sorted; backward is a single
//! reverse sweep.

use crate::autodiff::tensor::{matmul_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Elementwise sum; rhs may be a `[1, n]` row broadcast over the rows of lhs.
    Add(NodeId, NodeId),
    Relu(NodeId),
    /// Row-wise softmax over the last dimension.
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    },
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    Scale(NodeId, f64),
    Sum(NodeId),
    /// Mean over rows of -log softmax(logits)[label].
    CrossEntropy { logits: NodeId, labels: Vec<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
}

/// A single forward computation record. One graph per forward pass;
/// parameters live outside and are re-inserted as leaves each pass.
pub struct Graph {
    nodes: Vec<Node>,
    flops: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), flops: 0 }
    }

    /// Approximate floating-point operation count of the forward pass so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a tracked node, if backward has reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push_unchecked(Op::Leaf, value, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn push_unchecked(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value, grad: None, requires_grad });
        id
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool, name: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        Ok(self.push_unchecked(op, value, requires_grad))
    }

    fn requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn need_matrix(&self, id: NodeId, name: &'static str) -> Result<()> {
        if !self.value(id).is_matrix() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: expected 2-D tensor, got shape {:?}",
                self.value(id).shape()
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.need_matrix(a, "matmul")?;
        self.need_matrix(b, "matmul")?;
        let (m, k) = (self.value(a).rows(), self.value(a).cols());
        let (k2, n) = (self.value(b).rows(), self.value(b).cols());
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul: inner dims {k} vs {k2}"
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(self.value(a).data(), self.value(b).data(), m, k, n, out.data_mut());
        self.flops += 2 * (m * k * n) as u64;
        let rg = self.requires(&[a, b]);
        self.push(Op::MatMul(a, b), out, rg, "matmul")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        let broadcast = sa.len() == 2
            && sb.len() == 2
            && sb[0] == 1
            && sa[1] == sb[1]
            && sa[0] != 1;
        if sa != sb && !broadcast {
            return Err(Error::ShapeMismatch(format!("add: {sa:?} vs {sb:?}")));
        }
        let bv = self.value(b).data();
        let mut out = self.value(a).clone();
        if broadcast {
            let n = sb[1];
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v += bv[i % n];
            }
        } else {
            for (v, w) in out.data_mut().iter_mut().zip(bv.iter()) {
                *v += w;
            }
        }
        self.flops += out.len() as u64;
        let rg = self.requires(&[a, b]);
        self.push(Op::Add(a, b), out, rg, "add")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.flops += out.len() as u64;
        let rg = self.requires(&[a]);
        self.push(Op::Relu(a), out, rg, "relu")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v *= c;
        }
        self.flops += out.len() as u64;
        let rg = self.requires(&[a]);
        self.push(Op::Scale(a, c), out, rg, "scale")
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.need_matrix(a, "softmax")?;
        let n = self.value(a).cols();
        if n == 0 {
            return Err(Error::ShapeMismatch("softmax: empty last dimension".into()));
        }
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            softmax_row(row);
        }
        self.flops += 4 * out.len() as u64;
        let rg = self.requires(&[a]);
        self.push(Op::Softmax(a), out, rg, "softmax")
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        self.need_matrix(x, "layer_norm")?;
        let n = self.value(x).cols();
        for (id, what) in [(gamma, "gamma"), (beta, "beta")] {
            let s = self.value(id).shape();
            if s != [1, n] {
                return Err(Error::ShapeMismatch(format!(
                    "layer_norm: {what} shape {s:?}, expected [1, {n}]"
                )));
            }
        }
        let gv = self.value(gamma).data().to_vec();
        let bv = self.value(beta).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(n) {
            let (mu, var) = mean_var(row);
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                row[j] = gv[j] * (row[j] - mu) * inv + bv[j];
            }
        }
        self.flops += 6 * out.len() as u64;
        let rg = self.requires(&[x, gamma, beta]);
        self.push(Op::LayerNorm { x, gamma, beta, eps }, out, rg, "layer_norm")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.need_matrix(a, "transpose")?;
        let out = self.value(a).transposed();
        let rg = self.requires(&[a]);
        self.push(Op::Transpose(a), out, rg, "transpose")
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.need_matrix(a, "gather_rows")?;
        let (r, c) = (self.value(a).rows(), self.value(a).cols());
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::IndexOutOfRange(format!(
                    "gather_rows: row {i} of {r}"
                )));
            }
            data.extend_from_slice(&self.value(a).data()[i * c..(i + 1) * c]);
        }
        let out = Tensor::from_vec(&[indices.len(), c], data)?;
        let rg = self.requires(&[a]);
        self.push(Op::GatherRows(a, indices.to_vec()), out, rg, "gather_rows")
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch("concat_rows: no inputs".into()));
        }
        let c = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            self.need_matrix(p, "concat_rows")?;
            if self.value(p).cols() != c {
                return Err(Error::ShapeMismatch(format!(
                    "concat_rows: {} vs {} columns",
                    self.value(p).cols(),
                    c
                )));
            }
            rows += self.value(p).rows();
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(&[rows, c], data)?;
        let rg = self.requires(parts);
        self.push(Op::ConcatRows(parts.to_vec()), out, rg, "concat_rows")
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> Result<NodeId> {
        self.need_matrix(a, "slice_cols")?;
        let (r, c) = (self.value(a).rows(), self.value(a).cols());
        if start + width > c {
            return Err(Error::IndexOutOfRange(format!(
                "slice_cols: [{start}, {}) of {c}",
                start + width
            )));
        }
        let mut data = Vec::with_capacity(r * width);
        for i in 0..r {
            data.extend_from_slice(&self.value(a).data()[i * c + start..i * c + start + width]);
        }
        let out = Tensor::from_vec(&[r, width], data)?;
        let rg = self.requires(&[a]);
        self.push(Op::SliceCols(a, start, width), out, rg, "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch("concat_cols: no inputs".into()));
        }
        let r = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            self.need_matrix(p, "concat_cols")?;
            if self.value(p).rows() != r {
                return Err(Error::ShapeMismatch(format!(
                    "concat_cols: {} vs {} rows",
                    self.value(p).rows(),
                    r
                )));
            }
            total += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.value(p).cols();
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let out = Tensor::from_vec(&[r, total], data)?;
        let rg = self.requires(parts);
        self.push(Op::ConcatCols(parts.to_vec()), out, rg, "concat_cols")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(a).data().iter().sum();
        self.flops += self.value(a).len() as u64;
        let rg = self.requires(&[a]);
        self.push(Op::Sum(a), Tensor::scalar(total), rg, "sum")
    }

    /// Mean over the batch of -log softmax(logits)[label], fused for stability.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.need_matrix(logits, "cross_entropy")?;
        let (b, k) = (self.value(logits).rows(), self.value(logits).cols());
        if labels.len() != b {
            return Err(Error::LengthMismatch(labels.len(), b));
        }
        if b == 0 {
            return Err(Error::EmptyDataset);
        }
        for &l in labels {
            if l >= k {
                return Err(Error::LabelOutOfRange(l, k));
            }
        }
        let mut total = 0.0;
        for (row, &label) in self.value(logits).data().chunks(k).zip(labels.iter()) {
            total += log_sum_exp(row) - row[label];
        }
        let loss = Tensor::scalar(total / b as f64);
        self.flops += 5 * (b * k) as u64;
        let rg = self.requires(&[logits]);
        self.push(
            Op::CrossEntropy { logits, labels: labels.to_vec() },
            loss,
            rg,
            "cross_entropy",
        )
    }

    /// Propagates d(loss)/d(node) into every tracked node reachable from
    /// `loss`. Repeated calls accumulate into the persistent grad buffers.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::NotScalar(self.value(loss).shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut buf: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        buf[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match buf[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut buf)?;
            let node = &mut self.nodes[idx];
            let acc = node
                .grad
                .get_or_insert_with(|| Tensor::zeros(&g.shape().to_vec()));
            for (a, b) in acc.data_mut().iter_mut().zip(g.data().iter()) {
                *a += b;
            }
        }
        Ok(())
    }

    fn accumulate(buf: &mut [Option<Tensor>], id: NodeId, shape: &[usize], add: impl FnOnce(&mut Tensor)) {
        let slot = buf[id.0].get_or_insert_with(|| Tensor::zeros(shape));
        add(slot);
    }

    fn propagate(&self, idx: usize, g: &Tensor, buf: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if self.nodes[a.0].requires_grad {
                    let bt = bv.transposed();
                    Self::accumulate(buf, *a, av.shape(), |ga| {
                        matmul_acc(g.data(), bt.data(), m, n, k, ga.data_mut());
                    });
                }
                if self.nodes[b.0].requires_grad {
                    let at = av.transposed();
                    Self::accumulate(buf, *b, bv.shape(), |gb| {
                        matmul_acc(at.data(), g.data(), k, m, n, gb.data_mut());
                    });
                }
            }
            Op::Add(a, b) => {
                if self.nodes[a.0].requires_grad {
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for (x, y) in ga.data_mut().iter_mut().zip(g.data()) {
                            *x += y;
                        }
                    });
                }
                if self.nodes[b.0].requires_grad {
                    let bs = self.value(*b).shape().to_vec();
                    if bs == g.shape() {
                        Self::accumulate(buf, *b, &bs, |gb| {
                            for (x, y) in gb.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        });
                    } else {
                        // broadcast row: column-sum the upstream gradient
                        let n = bs[1];
                        Self::accumulate(buf, *b, &bs, |gb| {
                            for (i, y) in g.data().iter().enumerate() {
                                gb.data_mut()[i % n] += y;
                            }
                        });
                    }
                }
            }
            Op::Relu(a) => {
                if self.nodes[a.0].requires_grad {
                    let xv = self.value(*a);
                    Self::accumulate(buf, *a, xv.shape(), |ga| {
                        for i in 0..ga.len() {
                            if xv.data()[i] > 0.0 {
                                ga.data_mut()[i] += g.data()[i];
                            }
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = &node.value;
                    let n = y.cols();
                    Self::accumulate(buf, *a, y.shape(), |ga| {
                        for r in 0..y.rows() {
                            let yr = &y.data()[r * n..(r + 1) * n];
                            let gr = &g.data()[r * n..(r + 1) * n];
                            let dot: f64 = yr.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                            let out = &mut ga.data_mut()[r * n..(r + 1) * n];
                            for j in 0..n {
                                out[j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    });
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xv = self.value(*x);
                let n = xv.cols();
                let gv = self.value(*gamma).data();
                if self.nodes[beta.0].requires_grad {
                    Self::accumulate(buf, *beta, &[1, n], |gb| {
                        for (i, y) in g.data().iter().enumerate() {
                            gb.data_mut()[i % n] += y;
                        }
                    });
                }
                if self.nodes[gamma.0].requires_grad {
                    Self::accumulate(buf, *gamma, &[1, n], |gg| {
                        for r in 0..xv.rows() {
                            let row = &xv.data()[r * n..(r + 1) * n];
                            let (mu, var) = mean_var(row);
                            let inv = 1.0 / (var + eps).sqrt();
                            for j in 0..n {
                                gg.data_mut()[j] += g.data()[r * n + j] * (row[j] - mu) * inv;
                            }
                        }
                    });
                }
                if self.nodes[x.0].requires_grad {
                    Self::accumulate(buf, *x, xv.shape(), |gx| {
                        for r in 0..xv.rows() {
                            let row = &xv.data()[r * n..(r + 1) * n];
                            let (mu, var) = mean_var(row);
                            let inv = 1.0 / (var + eps).sqrt();
                            let xhat: Vec<f64> = row.iter().map(|v| (v - mu) * inv).collect();
                            let dxhat: Vec<f64> = (0..n)
                                .map(|j| g.data()[r * n + j] * gv[j])
                                .collect();
                            let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / n as f64;
                            let mean_dxhat_xhat: f64 =
                                dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                            let out = &mut gx.data_mut()[r * n..(r + 1) * n];
                            for j in 0..n {
                                out[j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                            }
                        }
                    });
                }
            }
            Op::Transpose(a) => {
                if self.nodes[a.0].requires_grad {
                    let gt = g.transposed();
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for (x, y) in ga.data_mut().iter_mut().zip(gt.data()) {
                            *x += y;
                        }
                    });
                }
            }
            Op::GatherRows(a, indices) => {
                if self.nodes[a.0].requires_grad {
                    let c = self.value(*a).cols();
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for (pos, &src) in indices.iter().enumerate() {
                            for j in 0..c {
                                ga.data_mut()[src * c + j] += g.data()[pos * c + j];
                            }
                        }
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let block = pv.len();
                    if self.nodes[p.0].requires_grad {
                        Self::accumulate(buf, p, pv.shape(), |gp| {
                            for (x, y) in gp
                                .data_mut()
                                .iter_mut()
                                .zip(&g.data()[offset..offset + block])
                            {
                                *x += y;
                            }
                        });
                    }
                    offset += block;
                }
            }
            Op::SliceCols(a, start, width) => {
                if self.nodes[a.0].requires_grad {
                    let c = self.value(*a).cols();
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for i in 0..g.rows() {
                            for j in 0..*width {
                                ga.data_mut()[i * c + start + j] += g.data()[i * width + j];
                            }
                        }
                    });
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let (r, c) = (pv.rows(), pv.cols());
                    if self.nodes[p.0].requires_grad {
                        Self::accumulate(buf, p, pv.shape(), |gp| {
                            for i in 0..r {
                                for j in 0..c {
                                    gp.data_mut()[i * c + j] += g.data()[i * total + offset + j];
                                }
                            }
                        });
                    }
                    offset += c;
                }
            }
            Op::Scale(a, c) => {
                if self.nodes[a.0].requires_grad {
                    let cc = *c;
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for (x, y) in ga.data_mut().iter_mut().zip(g.data()) {
                            *x += cc * y;
                        }
                    });
                }
            }
            Op::Sum(a) => {
                if self.nodes[a.0].requires_grad {
                    let gs = g.item();
                    Self::accumulate(buf, *a, self.value(*a).shape(), |ga| {
                        for x in ga.data_mut() {
                            *x += gs;
                        }
                    });
                }
            }
            Op::CrossEntropy { logits, labels } => {
                if self.nodes[logits.0].requires_grad {
                    let lv = self.value(*logits);
                    let (b, k) = (lv.rows(), lv.cols());
                    let gs = g.item() / b as f64;
                    Self::accumulate(buf, *logits, lv.shape(), |gl| {
                        for (r, &label) in labels.iter().enumerate() {
                            let mut probs = lv.data()[r * k..(r + 1) * k].to_vec();
                            softmax_row(&mut probs);
                            let out = &mut gl.data_mut()[r * k..(r + 1) * k];
                            for j in 0..k {
                                let delta = if j == label { 1.0 } else { 0.0 };
                                out[j] += gs * (probs[j] - delta);
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mu = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var)
}
