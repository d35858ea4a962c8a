use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    /// Both operands share the full shape.
    None,
    /// `b` is a `1 x n` row applied to every row of `a`.
    RowB,
    /// `a` is a `1 x 1` scalar.
    ScalarA,
    /// `b` is a `1 x 1` scalar.
    ScalarB,
}

enum Op {
    Leaf { src: Option<Tensor> },
    Constant,
    Matmul { a: NodeId, b: NodeId },
    /// `a @ b^T`; `b` is stored row-major like `a`, so both dot products
    /// run over contiguous rows.
    MatmulNT { a: NodeId, b: NodeId },
    Transpose { x: NodeId },
    Add { a: NodeId, b: NodeId, bcast: Broadcast },
    Mul { a: NodeId, b: NodeId, bcast: Broadcast },
    Neg { x: NodeId },
    Exp { x: NodeId },
    Gelu { x: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    SoftmaxRows { x: NodeId, temp: f64 },
    Embedding { table: NodeId, ids: Vec<usize> },
    ConcatRows { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    SliceRows { x: NodeId, start: usize },
    SliceCols { x: NodeId, start: usize },
    MeanRows { x: NodeId },
    L2NormalizeRows { x: NodeId },
    CrossEntropy { logits: NodeId, labels: Vec<usize>, temp: f64 },
    SumAll { x: NodeId },
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// Saved forward intermediates some backward rules need (softmax
    /// probabilities, layer-norm statistics, row norms).
    aux: Vec<f64>,
    needs_grad: bool,
}

/// An ordered record of executed primitives.
///
/// Values live on the tape; [`Tensor`] leaves are copied in once via
/// [`Tape::leaf`] and receive gradients back when [`Tape::backward`] runs.
/// A tape and its nodes are confined to the thread that builds them; a new
/// forward pass gets a new tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, data: Vec<f64>, aux: Vec<f64>, needs_grad: bool) -> NodeId {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node { op, rows, cols, data, aux, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    /// Register an external tensor as a leaf. Values are copied onto the
    /// tape; if the tensor requires gradients, `backward` accumulates into
    /// its grad buffer.
    pub fn leaf(&mut self, t: &Tensor) -> Result<NodeId> {
        let (rows, cols) = t.matrix_dims().ok_or_else(|| {
            Error::shape("leaf", format!("rank-{} tensor; tape ops are matrices", t.shape().len()))
        })?;
        let needs = t.requires_grad();
        Ok(self.push(Op::Leaf { src: Some(t.clone()) }, rows, cols, t.data(), vec![], needs))
    }

    /// A matrix constant that never receives gradients.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<NodeId> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "constant",
                format!("{}x{} wants {} values, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        Ok(self.push(Op::Constant, rows, cols, data, vec![], false))
    }

    pub fn scalar_constant(&mut self, v: f64) -> NodeId {
        self.constant(1, 1, vec![v]).expect("scalar shape")
    }

    // ── elementwise and broadcast arithmetic ────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        let bcast = if (ar, ac) == (br, bc) {
            Broadcast::None
        } else if br == 1 && bc == ac {
            Broadcast::RowB
        } else {
            return Err(Error::shape("add", format!("{}x{} + {}x{}", ar, ac, br, bc)));
        };
        let av = &self.node(a).data;
        let bv = &self.node(b).data;
        let data: Vec<f64> = match bcast {
            Broadcast::None => av.iter().zip(bv).map(|(x, y)| x + y).collect(),
            Broadcast::RowB => {
                let mut out = av.clone();
                for r in 0..ar {
                    for c in 0..ac {
                        out[r * ac + c] += bv[c];
                    }
                }
                out
            }
            _ => unreachable!(),
        };
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::Add { a, b, bcast }, ar, ac, data, vec![], needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        let bcast = if (ar, ac) == (br, bc) {
            Broadcast::None
        } else if (br, bc) == (1, 1) {
            Broadcast::ScalarB
        } else if (ar, ac) == (1, 1) {
            Broadcast::ScalarA
        } else {
            return Err(Error::shape("mul", format!("{}x{} * {}x{}", ar, ac, br, bc)));
        };
        let av = &self.node(a).data;
        let bv = &self.node(b).data;
        let (rows, cols, data): (usize, usize, Vec<f64>) = match bcast {
            Broadcast::None => (ar, ac, av.iter().zip(bv).map(|(x, y)| x * y).collect()),
            Broadcast::ScalarB => {
                let s = bv[0];
                (ar, ac, av.iter().map(|x| x * s).collect())
            }
            Broadcast::ScalarA => {
                let s = av[0];
                (br, bc, bv.iter().map(|x| x * s).collect())
            }
            _ => unreachable!(),
        };
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::Mul { a, b, bcast }, rows, cols, data, vec![], needs))
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.node(x).data.iter().map(|v| -v).collect();
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::Neg { x }, r, c, data, vec![], needs))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.node(x).data.iter().map(|v| v.exp()).collect();
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::Exp { x }, r, c, data, vec![], needs))
    }

    /// GELU with the tanh approximation used throughout small transformer
    /// stacks; smooth, so finite differences check it cleanly.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self
            .node(x)
            .data
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::Gelu { x }, r, c, data, vec![], needs))
    }

    // ── matrix products ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{}x{} @ {}x{}", m, k, k2, n)));
        }
        let mut data = vec![0.0; m * n];
        mm_nn_acc(&self.node(a).data, &self.node(b).data, m, k, n, &mut data);
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::Matmul { a, b }, m, n, data, vec![], needs))
    }

    /// `a @ b^T` for `a: m x k`, `b: n x k`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("{}x{} @ ({}x{})^T", m, k, n, k2)));
        }
        let mut data = vec![0.0; m * n];
        mm_nt_acc(&self.node(a).data, &self.node(b).data, m, k, n, &mut data);
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Op::MatmulNT { a, b }, m, n, data, vec![], needs))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let src = &self.node(x).data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::Transpose { x }, c, r, data, vec![], needs))
    }

    // ── normalization and attention pieces ──────────────────────────────

    /// Per-row layer normalization with learned gain and bias (`1 x n`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        for (name, id) in [("gain", gain), ("bias", bias)] {
            let (gr, gc) = self.dims(id);
            if (gr, gc) != (1, c) {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{} is {}x{}, input rows are 1x{}", name, gr, gc, c),
                ));
            }
        }
        let xv = &self.node(x).data;
        let gv = &self.node(gain).data;
        let bv = &self.node(bias).data;
        let mut data = vec![0.0; r * c];
        // aux: normalized values (r*c) then per-row inverse stddev (r).
        let mut aux = vec![0.0; r * c + r];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            aux[r * c + i] = inv;
            for j in 0..c {
                let xhat = (row[j] - mean) * inv;
                aux[i * c + j] = xhat;
                data[i * c + j] = gv[j] * xhat + bv[j];
            }
        }
        let needs =
            self.node(x).needs_grad || self.node(gain).needs_grad || self.node(bias).needs_grad;
        Ok(self.push(Op::LayerNorm { x, gain, bias }, r, c, data, aux, needs))
    }

    /// Row-wise softmax of `x / temp`. `temp` must be positive and finite.
    pub fn softmax_rows(&mut self, x: NodeId, temp: f64) -> Result<NodeId> {
        self.softmax_rows_impl(x, temp, None)
    }

    /// Masked row-wise softmax: positions with `mask == false` get exactly
    /// zero probability and drop out of the normalization. Each row must
    /// keep at least one allowed position. Used for causal attention.
    pub fn softmax_rows_masked(&mut self, x: NodeId, temp: f64, mask: Vec<bool>) -> Result<NodeId> {
        self.softmax_rows_impl(x, temp, Some(mask))
    }

    fn softmax_rows_impl(&mut self, x: NodeId, temp: f64, mask: Option<Vec<bool>>) -> Result<NodeId> {
        if !(temp.is_finite() && temp > 0.0) {
            return Err(Error::input("softmax_rows", format!("temperature {} must be > 0", temp)));
        }
        let (r, c) = self.dims(x);
        if let Some(m) = &mask {
            if m.len() != r * c {
                return Err(Error::shape(
                    "softmax_rows",
                    format!("mask length {} for {}x{} input", m.len(), r, c),
                ));
            }
            for i in 0..r {
                if !m[i * c..(i + 1) * c].iter().any(|&b| b) {
                    return Err(Error::input("softmax_rows", format!("row {} fully masked", i)));
                }
            }
        }
        let xv = &self.node(x).data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let allowed = |j: usize| mask.as_ref().map_or(true, |m| m[i * c + j]);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..c {
                if allowed(j) && row[j] > mx {
                    mx = row[j];
                }
            }
            let mut sum = 0.0;
            for j in 0..c {
                if allowed(j) {
                    let e = ((row[j] - mx) / temp).exp();
                    data[i * c + j] = e;
                    sum += e;
                }
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::SoftmaxRows { x, temp }, r, c, data, vec![], needs))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (v, d) = self.dims(table);
        if ids.is_empty() {
            return Err(Error::input("embedding", "empty id sequence"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::input(
                "embedding",
                format!("id {} out of range for table with {} rows", bad, v),
            ));
        }
        let tv = &self.node(table).data;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let needs = self.node(table).needs_grad;
        Ok(self.push(Op::Embedding { table, ids: ids.to_vec() }, ids.len(), d, data, vec![], needs))
    }

    // ── shape plumbing ──────────────────────────────────────────────────

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::input("concat_rows", "no inputs"));
        }
        let (_, c) = self.dims(parts[0]);
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(Error::shape("concat_rows", format!("column counts {} vs {}", c, pc)));
            }
            rows += pr;
        }
        let mut data = Vec::with_capacity(rows * c);
        let mut needs = false;
        for &p in parts {
            data.extend_from_slice(&self.node(p).data);
            needs |= self.node(p).needs_grad;
        }
        Ok(self.push(Op::ConcatRows { parts: parts.to_vec() }, rows, c, data, vec![], needs))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::input("concat_cols", "no inputs"));
        }
        let (r, _) = self.dims(parts[0]);
        let mut cols = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(Error::shape("concat_cols", format!("row counts {} vs {}", r, pr)));
            }
            cols += pc;
        }
        let mut data = vec![0.0; r * cols];
        let mut needs = false;
        let mut off = 0;
        for &p in parts {
            let (_, pc) = self.dims(p);
            let pv = &self.node(p).data;
            for i in 0..r {
                data[i * cols + off..i * cols + off + pc].copy_from_slice(&pv[i * pc..(i + 1) * pc]);
            }
            off += pc;
            needs |= self.node(p).needs_grad;
        }
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, r, cols, data, vec![], needs))
    }

    /// Rows `start..end` (half-open).
    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        if start >= end || end > r {
            return Err(Error::shape("slice_rows", format!("{}..{} of {} rows", start, end, r)));
        }
        let data = self.node(x).data[start * c..end * c].to_vec();
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::SliceRows { x, start }, end - start, c, data, vec![], needs))
    }

    /// Columns `start..end` (half-open).
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        if start >= end || end > c {
            return Err(Error::shape("slice_cols", format!("{}..{} of {} cols", start, end, c)));
        }
        let xv = &self.node(x).data;
        let w = end - start;
        let mut data = vec![0.0; r * w];
        for i in 0..r {
            data[i * w..(i + 1) * w].copy_from_slice(&xv[i * c + start..i * c + end]);
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::SliceCols { x, start }, r, w, data, vec![], needs))
    }

    /// Mean over the row axis: `m x n` → `1 x n`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let xv = &self.node(x).data;
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += xv[i * c + j];
            }
        }
        for v in &mut data {
            *v /= r as f64;
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::MeanRows { x }, 1, c, data, vec![], needs))
    }

    /// Scale each row to unit Euclidean norm. A row of exact zeros is an
    /// error: a zero embedding always indicates an upstream bug.
    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        let xv = &self.node(x).data;
        let mut data = vec![0.0; r * c];
        let mut aux = vec![0.0; r];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::input("l2_normalize_rows", format!("row {} is all zeros", i)));
            }
            aux[i] = norm;
            for j in 0..c {
                data[i * c + j] = row[j] / norm;
            }
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::L2NormalizeRows { x }, r, c, data, aux, needs))
    }

    /// Mean over rows of the cross-entropy between `softmax(row / temp)`
    /// and an integer label per row. Numerically stable log-sum-exp.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize], temp: f64) -> Result<NodeId> {
        if !(temp.is_finite() && temp > 0.0) {
            return Err(Error::input("cross_entropy", format!("temperature {} must be > 0", temp)));
        }
        let (r, c) = self.dims(logits);
        if labels.len() != r {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), r),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::input(
                "cross_entropy",
                format!("label {} out of range for {} classes", bad, c),
            ));
        }
        let xv = &self.node(logits).data;
        // aux: softmax probabilities, needed by the backward rule.
        let mut aux = vec![0.0; r * c];
        let mut total = 0.0;
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / temp;
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] / temp - mx).exp();
                aux[i * c + j] = e;
                sum += e;
            }
            let lse = mx + sum.ln();
            for j in 0..c {
                aux[i * c + j] /= sum;
            }
            total += lse - row[labels[i]] / temp;
        }
        let data = vec![total / r as f64];
        let needs = self.node(logits).needs_grad;
        Ok(self.push(
            Op::CrossEntropy { logits, labels: labels.to_vec(), temp },
            1,
            1,
            data,
            aux,
            needs,
        ))
    }

    /// Sum of all entries: `m x n` → `1 x 1`.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.node(x).data.iter().sum();
        let needs = self.node(x).needs_grad;
        Ok(self.push(Op::SumAll { x }, 1, 1, vec![s], vec![], needs))
    }

    // ── reverse pass ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Visits each recorded op exactly
    /// once in reverse order (the record is topologically ordered by
    /// construction) and accumulates `d loss / d leaf` into every
    /// grad-requiring leaf tensor. Leaves the loss does not depend on get a
    /// zero-filled grad buffer. Calling `backward` again without resetting
    /// tensor grads adds another copy of the gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let ln = self.node(loss);
        if ln.rows * ln.cols != 1 {
            return Err(Error::input(
                "backward",
                format!("loss must be a scalar, got {}x{}", ln.rows, ln.cols),
            ));
        }
        // Every grad-requiring leaf ends up with a buffer even when the
        // loss never touches it.
        for node in &self.nodes {
            if let Op::Leaf { src: Some(t) } = &node.op {
                if t.requires_grad() {
                    t.ensure_grad();
                }
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let (r, c) = (node.rows, node.cols);
            match &node.op {
                Op::Constant => {}
                Op::Leaf { src } => {
                    if let Some(t) = src {
                        if t.requires_grad() {
                            t.accumulate_grad(&g);
                        }
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, k) = self.dims(*a);
                    let n = c;
                    if self.nodes[a.0].needs_grad {
                        let mut da = vec![0.0; m * k];
                        mm_nt_acc(&g, &self.nodes[b.0].data, m, n, k, &mut da);
                        acc_into(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = vec![0.0; k * n];
                        mm_tn_acc(&self.nodes[a.0].data, &g, m, k, n, &mut db);
                        acc_into(&mut grads, *b, db);
                    }
                }
                Op::MatmulNT { a, b } => {
                    // out = a @ b^T, a: m x k, b: n x k, g: m x n
                    let (m, k) = self.dims(*a);
                    let n = c;
                    if self.nodes[a.0].needs_grad {
                        let mut da = vec![0.0; m * k];
                        mm_nn_acc(&g, &self.nodes[b.0].data, m, n, k, &mut da);
                        acc_into(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = vec![0.0; n * k];
                        mm_tn_acc(&g, &self.nodes[a.0].data, m, n, k, &mut db);
                        acc_into(&mut grads, *b, db);
                    }
                }
                Op::Transpose { x } => {
                    let (xr, xc) = self.dims(*x);
                    let mut dx = vec![0.0; xr * xc];
                    for i in 0..r {
                        for j in 0..c {
                            dx[j * xc + i] = g[i * c + j];
                        }
                    }
                    acc_into(&mut grads, *x, dx);
                }
                Op::Add { a, b, bcast } => {
                    if self.nodes[a.0].needs_grad {
                        acc_into(&mut grads, *a, g.clone());
                    }
                    if self.nodes[b.0].needs_grad {
                        match bcast {
                            Broadcast::None => acc_into(&mut grads, *b, g.clone()),
                            Broadcast::RowB => {
                                let mut db = vec![0.0; c];
                                for i in 0..r {
                                    for j in 0..c {
                                        db[j] += g[i * c + j];
                                    }
                                }
                                acc_into(&mut grads, *b, db);
                            }
                            _ => unreachable!(),
                        }
                    }
                }
                Op::Mul { a, b, bcast } => {
                    let av = &self.nodes[a.0].data;
                    let bv = &self.nodes[b.0].data;
                    match bcast {
                        Broadcast::None => {
                            if self.nodes[a.0].needs_grad {
                                let da: Vec<f64> = g.iter().zip(bv).map(|(gv, y)| gv * y).collect();
                                acc_into(&mut grads, *a, da);
                            }
                            if self.nodes[b.0].needs_grad {
                                let db: Vec<f64> = g.iter().zip(av).map(|(gv, x)| gv * x).collect();
                                acc_into(&mut grads, *b, db);
                            }
                        }
                        Broadcast::ScalarB => {
                            if self.nodes[a.0].needs_grad {
                                let s = bv[0];
                                let da: Vec<f64> = g.iter().map(|gv| gv * s).collect();
                                acc_into(&mut grads, *a, da);
                            }
                            if self.nodes[b.0].needs_grad {
                                let ds = g.iter().zip(av).map(|(gv, x)| gv * x).sum();
                                acc_into(&mut grads, *b, vec![ds]);
                            }
                        }
                        Broadcast::ScalarA => {
                            if self.nodes[b.0].needs_grad {
                                let s = av[0];
                                let db: Vec<f64> = g.iter().map(|gv| gv * s).collect();
                                acc_into(&mut grads, *b, db);
                            }
                            if self.nodes[a.0].needs_grad {
                                let ds = g.iter().zip(bv).map(|(gv, y)| gv * y).sum();
                                acc_into(&mut grads, *a, vec![ds]);
                            }
                        }
                        Broadcast::RowB => unreachable!(),
                    }
                }
                Op::Neg { x } => {
                    let dx: Vec<f64> = g.iter().map(|v| -v).collect();
                    acc_into(&mut grads, *x, dx);
                }
                Op::Exp { x } => {
                    let dx: Vec<f64> = g.iter().zip(&node.data).map(|(gv, y)| gv * y).collect();
                    acc_into(&mut grads, *x, dx);
                }
                Op::Gelu { x } => {
                    let xv = &self.nodes[x.0].data;
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xv)
                        .map(|(gv, &v)| {
                            let u = GELU_C * (v + GELU_A * v * v * v);
                            let t = u.tanh();
                            let sech2 = 1.0 - t * t;
                            gv * (0.5 * (1.0 + t)
                                + 0.5 * v * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * v * v))
                        })
                        .collect();
                    acc_into(&mut grads, *x, dx);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let gv = &self.nodes[gain.0].data;
                    let xhat = &node.aux[..r * c];
                    let invs = &node.aux[r * c..];
                    if self.nodes[x.0].needs_grad {
                        let mut dx = vec![0.0; r * c];
                        for i in 0..r {
                            let mut mean_dxhat = 0.0;
                            let mut mean_dxhat_xhat = 0.0;
                            for j in 0..c {
                                let dxh = g[i * c + j] * gv[j];
                                mean_dxhat += dxh;
                                mean_dxhat_xhat += dxh * xhat[i * c + j];
                            }
                            mean_dxhat /= c as f64;
                            mean_dxhat_xhat /= c as f64;
                            for j in 0..c {
                                let dxh = g[i * c + j] * gv[j];
                                dx[i * c + j] = invs[i]
                                    * (dxh - mean_dxhat - xhat[i * c + j] * mean_dxhat_xhat);
                            }
                        }
                        acc_into(&mut grads, *x, dx);
                    }
                    if self.nodes[gain.0].needs_grad {
                        let mut dg = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                dg[j] += g[i * c + j] * xhat[i * c + j];
                            }
                        }
                        acc_into(&mut grads, *gain, dg);
                    }
                    if self.nodes[bias.0].needs_grad {
                        let mut db = vec![0.0; c];
                        for i in 0..r {
                            for j in 0..c {
                                db[j] += g[i * c + j];
                            }
                        }
                        acc_into(&mut grads, *bias, db);
                    }
                }
                Op::SoftmaxRows { x, temp } => {
                    // dx_j = y_j (g_j - sum_k g_k y_k) / temp; masked
                    // positions have y = 0 and contribute nothing.
                    let y = &node.data;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 =
                            (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            dx[i * c + j] = y[i * c + j] * (g[i * c + j] - dot) / temp;
                        }
                    }
                    acc_into(&mut grads, *x, dx);
                }
                Op::Embedding { table, ids } => {
                    let (_, d) = self.dims(*table);
                    let (vr, _) = self.dims(*table);
                    let mut dt = vec![0.0; vr * d];
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[row * d + j];
                        }
                    }
                    acc_into(&mut grads, *table, dt);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let (pr, pc) = self.dims(p);
                        if self.nodes[p.0].needs_grad {
                            let dp = g[off..off + pr * pc].to_vec();
                            acc_into(&mut grads, p, dp);
                        }
                        off += pr * pc;
                    }
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let (pr, pc) = self.dims(p);
                        if self.nodes[p.0].needs_grad {
                            let mut dp = vec![0.0; pr * pc];
                            for i in 0..pr {
                                dp[i * pc..(i + 1) * pc]
                                    .copy_from_slice(&g[i * c + off..i * c + off + pc]);
                            }
                            acc_into(&mut grads, p, dp);
                        }
                        off += pc;
                    }
                }
                Op::SliceRows { x, start } => {
                    let (xr, xc) = self.dims(*x);
                    let mut dx = vec![0.0; xr * xc];
                    dx[start * xc..start * xc + r * c].copy_from_slice(&g);
                    acc_into(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let (xr, xc) = self.dims(*x);
                    let mut dx = vec![0.0; xr * xc];
                    for i in 0..r {
                        dx[i * xc + start..i * xc + start + c].copy_from_slice(&g[i * c..(i + 1) * c]);
                    }
                    acc_into(&mut grads, *x, dx);
                }
                Op::MeanRows { x } => {
                    let (xr, xc) = self.dims(*x);
                    let mut dx = vec![0.0; xr * xc];
                    for i in 0..xr {
                        for j in 0..xc {
                            dx[i * xc + j] = g[j] / xr as f64;
                        }
                    }
                    acc_into(&mut grads, *x, dx);
                }
                Op::L2NormalizeRows { x } => {
                    let y = &node.data;
                    let norms = &node.aux;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 = (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum();
                        for j in 0..c {
                            dx[i * c + j] = (g[i * c + j] - y[i * c + j] * dot) / norms[i];
                        }
                    }
                    acc_into(&mut grads, *x, dx);
                }
                Op::CrossEntropy { logits, labels, temp } => {
                    let (lr, lc) = self.dims(*logits);
                    let probs = &node.aux;
                    let seed = g[0];
                    let scale = seed / (lr as f64 * temp);
                    let mut dl = vec![0.0; lr * lc];
                    for i in 0..lr {
                        for j in 0..lc {
                            let target = if labels[i] == j { 1.0 } else { 0.0 };
                            dl[i * lc + j] = scale * (probs[i * lc + j] - target);
                        }
                    }
                    acc_into(&mut grads, *logits, dl);
                }
                Op::SumAll { x } => {
                    let (xr, xc) = self.dims(*x);
                    acc_into(&mut grads, *x, vec![g[0]; xr * xc]);
                }
            }
        }
        Ok(())
    }

}

fn acc_into(grads: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
    match &mut grads[id.0] {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(&delta) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// `out += a @ b` for `a: m x k`, `b: k x n`.
fn mm_nn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// `out += a @ b^T` for `a: m x k`, `b: n x k`.
fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for kk in 0..k {
                s += arow[kk] * brow[kk];
            }
            orow[j] += s;
        }
    }
}

/// `out += a^T @ b` for `a: m x k`, `b: m x n`, out: `k x n`.
fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}
