//! Dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Storage is f64, row-major, flat `Vec<f64>`. A [`Tape`] records every
//! operation of a forward pass; [`Tape::backward`] walks the record in
//! reverse and accumulates gradients into each tracked tensor. Tapes are
//! built fresh per training step and thrown away afterwards.
//!
//! Shape mismatches are programmer errors and panic with both shapes in
//! the message. Recoverable failures (non-finite gradients) are `Result`s.

mod adamw;
mod gradcheck;

pub use adamw::{adamw_step, AdamWState};
pub use gradcheck::{central_difference_grads, grad_check};

use std::rc::Rc;

/// Dense tensor: flat row-major values plus shape metadata.
///
/// `grad` is populated by [`Tape::backward`] for nodes with
/// `requires_grad`, and always has the same length as `data`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match value count {}",
            shape,
            data.len()
        );
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Extent pair of a 2-D tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected 2-D tensor, got shape {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }
}

/// Handle into a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

/// Boolean attention mask over a `[rows, cols]` score matrix.
///
/// `true` entries participate; `false` entries are excluded from the
/// score computation, the softmax normalization and the value sum.
#[derive(Clone, Debug)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    bits: Vec<bool>,
    unmasked: usize,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        assert_eq!(rows * cols, bits.len(), "mask bits {} do not fill {rows}x{cols}", bits.len());
        let unmasked = bits.iter().filter(|&&b| b).count();
        Mask { rows, cols, bits, unmasked }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    /// Number of `true` entries over the whole mask.
    pub fn unmasked_count(&self) -> usize {
        self.unmasked
    }
}

enum Op {
    Leaf,
    Add { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, factor: f64 },
    MatMul { a: TensorId, b: TensorId },
    BroadcastRow { row: TensorId, copies: usize },
    Gelu { a: TensorId },
    LayerNorm { x: TensorId, scale: TensorId, offset: TensorId, eps: f64 },
    MaskedScores { q: TensorId, k: TensorId, mask: Rc<Mask>, scale: f64 },
    MaskedSoftmax { logits: TensorId, mask: Rc<Mask> },
    MaskedAggregate { probs: TensorId, v: TensorId, mask: Rc<Mask> },
    Rotary { a: TensorId, positions: Rc<Vec<usize>>, negate: bool },
    ConcatRows { a: TensorId, b: TensorId },
    ConcatCols { parts: Vec<TensorId> },
    GatherRows { a: TensorId, rows: Rc<Vec<usize>> },
    CrossEntropyRows { logits: TensorId, labels: Rc<Vec<usize>> },
    Mean { a: TensorId },
    Sum { a: TensorId },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Records a forward computation and differentiates it in reverse.
///
/// The tape also counts forward multiply-accumulate operations for the
/// matmul-family ops (projections, attention scores, attention value
/// sums); elementwise ops and normalizations are not counted.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    forward_macs: u64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Forward multiply-accumulate count of everything recorded so far.
    pub fn forward_macs(&self) -> u64 {
        self.forward_macs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node { tensor, op });
        TensorId(self.nodes.len() - 1)
    }

    fn node(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    /// Insert a tracked leaf (parameter or input requiring gradient).
    pub fn param(&mut self, tensor: Tensor) -> TensorId {
        let t = tensor.with_grad();
        self.push(t, Op::Leaf)
    }

    /// Insert an untracked leaf (constant input).
    pub fn constant(&mut self, tensor: Tensor) -> TensorId {
        let mut t = tensor;
        t.requires_grad = false;
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.node(id).data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.node(id).shape
    }

    /// Gradient of the last backward pass w.r.t. node `id`.
    pub fn grad(&self, id: TensorId) -> &[f64] {
        self.nodes[id.0]
            .tensor
            .grad
            .as_deref()
            .expect("gradient not computed; run backward() over a tape containing this node")
    }

    fn track(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.node(*id).requires_grad)
    }

    // ── Elementwise and shape ops ───────────────────────────────────────

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.node(a), self.node(b));
        assert_eq!(ta.shape, tb.shape, "add: shape {:?} vs {:?}", ta.shape, tb.shape);
        let data: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let mut t = Tensor::new(ta.shape.clone(), data);
        t.requires_grad = self.track(&[a, b]);
        self.push(t, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.node(a), self.node(b));
        assert_eq!(ta.shape, tb.shape, "mul: shape {:?} vs {:?}", ta.shape, tb.shape);
        let data: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let mut t = Tensor::new(ta.shape.clone(), data);
        t.requires_grad = self.track(&[a, b]);
        self.push(t, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let ta = self.node(a);
        let data: Vec<f64> = ta.data.iter().map(|x| x * factor).collect();
        let mut t = Tensor::new(ta.shape.clone(), data);
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::Scale { a, factor })
    }

    /// Repeat a `[d]` vector as the rows of a `[copies, d]` matrix.
    pub fn broadcast_row(&mut self, row: TensorId, copies: usize) -> TensorId {
        let tr = self.node(row);
        assert_eq!(tr.shape.len(), 1, "broadcast_row: expected 1-D row, got {:?}", tr.shape);
        let d = tr.shape[0];
        let mut data = Vec::with_capacity(copies * d);
        for _ in 0..copies {
            data.extend_from_slice(&tr.data);
        }
        let mut t = Tensor::new(vec![copies, d], data);
        t.requires_grad = self.track(&[row]);
        self.push(t, Op::BroadcastRow { row, copies })
    }

    /// Stack `a` on top of `b` (matching column counts).
    pub fn concat_rows(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.node(a), self.node(b));
        let (ra, ca) = ta.dims2();
        let (rb, cb) = tb.dims2();
        assert_eq!(ca, cb, "concat_rows: column mismatch {:?} vs {:?}", ta.shape, tb.shape);
        let mut data = Vec::with_capacity((ra + rb) * ca);
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        let mut t = Tensor::new(vec![ra + rb, ca], data);
        t.requires_grad = self.track(&[a, b]);
        self.push(t, Op::ConcatRows { a, b })
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.node(parts[0]).dims2().0;
        let total_cols: usize = parts.iter().map(|p| self.node(*p).dims2().1).sum();
        for p in parts {
            let (r, _) = self.node(*p).dims2();
            assert_eq!(r, rows, "concat_cols: row mismatch {r} vs {rows}");
        }
        let mut data = vec![0.0; rows * total_cols];
        let mut col = 0;
        for p in parts {
            let tp = self.node(*p);
            let (_, c) = tp.dims2();
            for r in 0..rows {
                data[r * total_cols + col..r * total_cols + col + c]
                    .copy_from_slice(&tp.data[r * c..(r + 1) * c]);
            }
            col += c;
        }
        let mut t = Tensor::new(vec![rows, total_cols], data);
        t.requires_grad = self.track(parts);
        self.push(t, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Select rows of a matrix by index (repeats allowed).
    pub fn gather_rows(&mut self, a: TensorId, rows: Vec<usize>) -> TensorId {
        let ta = self.node(a);
        let (r, c) = ta.dims2();
        for &i in &rows {
            assert!(i < r, "gather_rows: row {i} out of range for {:?}", ta.shape);
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in &rows {
            data.extend_from_slice(&ta.data[i * c..(i + 1) * c]);
        }
        let mut t = Tensor::new(vec![rows.len(), c], data);
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::GatherRows { a, rows: Rc::new(rows) })
    }

    // ── Linear algebra ──────────────────────────────────────────────────

    /// Standard matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.node(a), self.node(b));
        let (m, ka) = ta.dims2();
        let (kb, n) = tb.dims2();
        assert_eq!(ka, kb, "matmul: inner extents differ, {:?} x {:?}", ta.shape, tb.shape);
        let data = matmul_raw(&ta.data, &tb.data, m, ka, n);
        self.forward_macs += (m * ka * n) as u64;
        let mut t = Tensor::new(vec![m, n], data);
        t.requires_grad = self.track(&[a, b]);
        self.push(t, Op::MatMul { a, b })
    }

    // ── Nonlinearities ──────────────────────────────────────────────────

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let ta = self.node(a);
        let data: Vec<f64> = ta.data.iter().map(|&x| gelu_fwd(x)).collect();
        let mut t = Tensor::new(ta.shape.clone(), data);
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::Gelu { a })
    }

    /// Per-row normalization over the last axis, then affine scale/offset.
    pub fn layer_norm(&mut self, x: TensorId, scale: TensorId, offset: TensorId, eps: f64) -> TensorId {
        let (tx, ts, to) = (self.node(x), self.node(scale), self.node(offset));
        let d = *tx.shape.last().expect("layer_norm: empty shape");
        assert_eq!(ts.shape, vec![d], "layer_norm: scale shape {:?} vs width {d}", ts.shape);
        assert_eq!(to.shape, vec![d], "layer_norm: offset shape {:?} vs width {d}", to.shape);
        let mut data = vec![0.0; tx.data.len()];
        for (row, out) in tx.data.chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for i in 0..d {
                out[i] = (row[i] - mean) * inv_std * ts.data[i] + to.data[i];
            }
        }
        let mut t = Tensor::new(tx.shape.clone(), data);
        t.requires_grad = self.track(&[x, scale, offset]);
        self.push(t, Op::LayerNorm { x, scale, offset, eps })
    }

    // ── Attention kernels ───────────────────────────────────────────────

    /// Scaled dot products `scale * q . k` at unmasked positions only.
    /// Masked entries are set to -inf and never computed.
    pub fn masked_scores(&mut self, q: TensorId, k: TensorId, mask: &Rc<Mask>, scale: f64) -> TensorId {
        let (tq, tk) = (self.node(q), self.node(k));
        let (t, dq) = tq.dims2();
        let (tp, dk) = tk.dims2();
        assert_eq!(dq, dk, "masked_scores: key width mismatch {:?} vs {:?}", tq.shape, tk.shape);
        assert_eq!((mask.rows, mask.cols), (t, tp), "masked_scores: mask {}x{} vs scores {t}x{tp}", mask.rows, mask.cols);
        let mut data = vec![f64::NEG_INFINITY; t * tp];
        for r in 0..t {
            let qrow = &tq.data[r * dq..(r + 1) * dq];
            let mrow = mask.row(r);
            let out = &mut data[r * tp..(r + 1) * tp];
            for c in 0..tp {
                if mrow[c] {
                    let krow = &tk.data[c * dk..(c + 1) * dk];
                    out[c] = scale * dot(qrow, krow);
                }
            }
        }
        self.forward_macs += (mask.unmasked_count() * dq) as u64;
        let mut out = Tensor::new(vec![t, tp], data);
        out.requires_grad = self.track(&[q, k]);
        self.push(out, Op::MaskedScores { q, k, mask: Rc::clone(mask), scale })
    }

    /// Row softmax over unmasked entries; masked entries are exactly 0.
    /// A fully masked row yields all zeros.
    pub fn masked_softmax(&mut self, logits: TensorId, mask: &Rc<Mask>) -> TensorId {
        let tl = self.node(logits);
        let (r, c) = tl.dims2();
        assert_eq!((mask.rows, mask.cols), (r, c), "masked_softmax: mask {}x{} vs logits {r}x{c}", mask.rows, mask.cols);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &tl.data[i * c..(i + 1) * c];
            let mrow = mask.row(i);
            softmax_masked_row(row, mrow, &mut data[i * c..(i + 1) * c]);
        }
        let mut t = Tensor::new(vec![r, c], data);
        t.requires_grad = self.track(&[logits]);
        self.push(t, Op::MaskedSoftmax { logits, mask: Rc::clone(mask) })
    }

    /// Weighted sum of value rows, restricted to unmasked positions:
    /// `out[r] = sum_c probs[r,c] * v[c]` over `mask[r,c] = 1`.
    pub fn masked_aggregate(&mut self, probs: TensorId, v: TensorId, mask: &Rc<Mask>) -> TensorId {
        let (tp, tv) = (self.node(probs), self.node(v));
        let (r, c) = tp.dims2();
        let (rv, dv) = tv.dims2();
        assert_eq!(c, rv, "masked_aggregate: probs {:?} vs values {:?}", tp.shape, tv.shape);
        assert_eq!((mask.rows, mask.cols), (r, c), "masked_aggregate: mask {}x{} vs probs {r}x{c}", mask.rows, mask.cols);
        let mut data = vec![0.0; r * dv];
        for i in 0..r {
            let prow = &tp.data[i * c..(i + 1) * c];
            let mrow = mask.row(i);
            let out = &mut data[i * dv..(i + 1) * dv];
            for j in 0..c {
                if mrow[j] {
                    axpy(prow[j], &tv.data[j * dv..(j + 1) * dv], out);
                }
            }
        }
        self.forward_macs += (mask.unmasked_count() * dv) as u64;
        let mut t = Tensor::new(vec![r, dv], data);
        t.requires_grad = self.track(&[probs, v]);
        self.push(t, Op::MaskedAggregate { probs, v, mask: Rc::clone(mask) })
    }

    /// Rotate disjoint coordinate pairs of each row by an angle set from
    /// the row's absolute position. An odd trailing coordinate is left
    /// unchanged.
    pub fn rotary(&mut self, a: TensorId, positions: &Rc<Vec<usize>>) -> TensorId {
        let ta = self.node(a);
        let (r, d) = ta.dims2();
        assert_eq!(positions.len(), r, "rotary: {} positions for {r} rows", positions.len());
        let mut data = ta.data.clone();
        rotate_rows(&mut data, d, positions, false);
        let mut t = Tensor::new(vec![r, d], data);
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::Rotary { a, positions: Rc::clone(positions), negate: false })
    }

    // ── Losses and reductions ───────────────────────────────────────────

    /// Per-row negative log-likelihood `-log softmax(row)[label]`.
    pub fn cross_entropy_rows(&mut self, logits: TensorId, labels: Vec<usize>) -> TensorId {
        let tl = self.node(logits);
        let (r, k) = tl.dims2();
        assert_eq!(labels.len(), r, "cross_entropy_rows: {} labels for {r} rows", labels.len());
        for &l in &labels {
            assert!(l < k, "cross_entropy_rows: label {l} out of range for {k} classes");
        }
        let mut data = vec![0.0; r];
        for i in 0..r {
            data[i] = nll_row(&tl.data[i * k..(i + 1) * k], labels[i]);
        }
        let mut t = Tensor::new(vec![r], data);
        t.requires_grad = self.track(&[logits]);
        self.push(t, Op::CrossEntropyRows { logits, labels: Rc::new(labels) })
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let ta = self.node(a);
        let n = ta.numel().max(1);
        let m = ta.data.iter().sum::<f64>() / n as f64;
        let mut t = Tensor::scalar(m);
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::Mean { a })
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let ta = self.node(a);
        let mut t = Tensor::scalar(ta.data.iter().sum::<f64>());
        t.requires_grad = self.track(&[a]);
        self.push(t, Op::Sum { a })
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse-mode pass seeding `d loss / d loss = 1`.
    ///
    /// `loss` must be scalar. Gradients accumulate into every node with
    /// `requires_grad` reachable from `loss`.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.node(loss).numel(), 1, "backward: loss must be scalar, got shape {:?}", self.node(loss).shape);
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
        self.nodes[loss.0].tensor.grad = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let Some(grad) = self.nodes[i].tensor.grad.take() else {
                continue;
            };
            self.apply_backward(i, &grad);
            self.nodes[i].tensor.grad = Some(grad);
        }

        // Tracked nodes the loss never touched have derivative zero.
        for node in &mut self.nodes {
            if node.tensor.requires_grad && node.tensor.grad.is_none() {
                node.tensor.grad = Some(vec![0.0; node.tensor.data.len()]);
            }
        }
    }

    fn accumulate(&mut self, id: TensorId, contribution: &[f64]) {
        let node = &mut self.nodes[id.0];
        if !node.tensor.requires_grad {
            return;
        }
        let g = node
            .tensor
            .grad
            .get_or_insert_with(|| vec![0.0; node.tensor.data.len()]);
        for (gi, ci) in g.iter_mut().zip(contribution) {
            *gi += ci;
        }
    }

    fn needs_grad(&self, id: TensorId) -> bool {
        self.node(id).requires_grad
    }

    fn apply_backward(&mut self, i: usize, grad: &[f64]) {
        // Ops are cheap to describe; clone the description to satisfy the
        // borrow checker while mutating sibling nodes.
        let op = match &self.nodes[i].op {
            Op::Leaf => return,
            Op::Add { a, b } => Op::Add { a: *a, b: *b },
            Op::Mul { a, b } => Op::Mul { a: *a, b: *b },
            Op::Scale { a, factor } => Op::Scale { a: *a, factor: *factor },
            Op::MatMul { a, b } => Op::MatMul { a: *a, b: *b },
            Op::BroadcastRow { row, copies } => Op::BroadcastRow { row: *row, copies: *copies },
            Op::Gelu { a } => Op::Gelu { a: *a },
            Op::LayerNorm { x, scale, offset, eps } => Op::LayerNorm { x: *x, scale: *scale, offset: *offset, eps: *eps },
            Op::MaskedScores { q, k, mask, scale } => Op::MaskedScores { q: *q, k: *k, mask: Rc::clone(mask), scale: *scale },
            Op::MaskedSoftmax { logits, mask } => Op::MaskedSoftmax { logits: *logits, mask: Rc::clone(mask) },
            Op::MaskedAggregate { probs, v, mask } => Op::MaskedAggregate { probs: *probs, v: *v, mask: Rc::clone(mask) },
            Op::Rotary { a, positions, negate } => Op::Rotary { a: *a, positions: Rc::clone(positions), negate: *negate },
            Op::ConcatRows { a, b } => Op::ConcatRows { a: *a, b: *b },
            Op::ConcatCols { parts } => Op::ConcatCols { parts: parts.clone() },
            Op::GatherRows { a, rows } => Op::GatherRows { a: *a, rows: Rc::clone(rows) },
            Op::CrossEntropyRows { logits, labels } => Op::CrossEntropyRows { logits: *logits, labels: Rc::clone(labels) },
            Op::Mean { a } => Op::Mean { a: *a },
            Op::Sum { a } => Op::Sum { a: *a },
        };

        match op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.accumulate(a, grad);
                self.accumulate(b, grad);
            }
            Op::Mul { a, b } => {
                if self.needs_grad(a) {
                    let da: Vec<f64> = grad.iter().zip(&self.node(b).data).map(|(g, y)| g * y).collect();
                    self.accumulate(a, &da);
                }
                if self.needs_grad(b) {
                    let db: Vec<f64> = grad.iter().zip(&self.node(a).data).map(|(g, x)| g * x).collect();
                    self.accumulate(b, &db);
                }
            }
            Op::Scale { a, factor } => {
                if self.needs_grad(a) {
                    let da: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                    self.accumulate(a, &da);
                }
            }
            Op::MatMul { a, b } => {
                let (m, k) = self.node(a).dims2();
                let (_, n) = self.node(b).dims2();
                if self.needs_grad(a) {
                    // dA = g . B^T
                    let bdata = &self.node(b).data;
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        let grow = &grad[r * n..(r + 1) * n];
                        let arow = &mut da[r * k..(r + 1) * k];
                        for c in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grow[j] * bdata[c * n + j];
                            }
                            arow[c] = s;
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.needs_grad(b) {
                    // dB = A^T . g
                    let adata = &self.node(a).data;
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &grad[r * n..(r + 1) * n];
                        let arow = &adata[r * k..(r + 1) * k];
                        for c in 0..k {
                            axpy(arow[c], grow, &mut db[c * n..(c + 1) * n]);
                        }
                    }
                    self.accumulate(b, &db);
                }
            }
            Op::BroadcastRow { row, copies } => {
                if self.needs_grad(row) {
                    let d = self.node(row).shape[0];
                    let mut dr = vec![0.0; d];
                    for r in 0..copies {
                        for c in 0..d {
                            dr[c] += grad[r * d + c];
                        }
                    }
                    self.accumulate(row, &dr);
                }
            }
            Op::Gelu { a } => {
                if self.needs_grad(a) {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(&self.node(a).data)
                        .map(|(g, &x)| g * gelu_bwd(x))
                        .collect();
                    self.accumulate(a, &da);
                }
            }
            Op::LayerNorm { x, scale, offset, eps } => {
                self.layer_norm_backward(grad, x, scale, offset, eps);
            }
            Op::MaskedScores { q, k, mask, scale } => {
                let (t, dk) = self.node(q).dims2();
                let tp = self.node(k).dims2().0;
                let needs_q = self.needs_grad(q);
                let needs_k = self.needs_grad(k);
                let mut dq = vec![0.0; t * dk];
                let mut dkv = vec![0.0; tp * dk];
                {
                    let qdata = &self.node(q).data;
                    let kdata = &self.node(k).data;
                    for r in 0..t {
                        let mrow = mask.row(r);
                        let grow = &grad[r * tp..(r + 1) * tp];
                        for c in 0..tp {
                            if mrow[c] {
                                let g = grow[c] * scale;
                                if g != 0.0 {
                                    if needs_q {
                                        axpy(g, &kdata[c * dk..(c + 1) * dk], &mut dq[r * dk..(r + 1) * dk]);
                                    }
                                    if needs_k {
                                        axpy(g, &qdata[r * dk..(r + 1) * dk], &mut dkv[c * dk..(c + 1) * dk]);
                                    }
                                }
                            }
                        }
                    }
                }
                if needs_q {
                    self.accumulate(q, &dq);
                }
                if needs_k {
                    self.accumulate(k, &dkv);
                }
            }
            Op::MaskedSoftmax { logits, mask } => {
                if self.needs_grad(logits) {
                    let (r, c) = self.node(logits).dims2();
                    let out = &self.nodes[i].tensor.data;
                    let mut dl = vec![0.0; r * c];
                    for row in 0..r {
                        let p = &out[row * c..(row + 1) * c];
                        let g = &grad[row * c..(row + 1) * c];
                        let mrow = mask.row(row);
                        let dot_gp: f64 = (0..c).filter(|&j| mrow[j]).map(|j| g[j] * p[j]).sum();
                        let drow = &mut dl[row * c..(row + 1) * c];
                        for j in 0..c {
                            if mrow[j] {
                                drow[j] = p[j] * (g[j] - dot_gp);
                            }
                        }
                    }
                    self.accumulate(logits, &dl);
                }
            }
            Op::MaskedAggregate { probs, v, mask } => {
                let (r, c) = self.node(probs).dims2();
                let dv = self.node(v).dims2().1;
                let needs_p = self.needs_grad(probs);
                let needs_v = self.needs_grad(v);
                let mut dp = vec![0.0; r * c];
                let mut dvv = vec![0.0; c * dv];
                {
                    let pdata = &self.node(probs).data;
                    let vdata = &self.node(v).data;
                    for row in 0..r {
                        let mrow = mask.row(row);
                        let grow = &grad[row * dv..(row + 1) * dv];
                        for j in 0..c {
                            if mrow[j] {
                                if needs_p {
                                    dp[row * c + j] = dot(grow, &vdata[j * dv..(j + 1) * dv]);
                                }
                                if needs_v {
                                    axpy(pdata[row * c + j], grow, &mut dvv[j * dv..(j + 1) * dv]);
                                }
                            }
                        }
                    }
                }
                if needs_p {
                    self.accumulate(probs, &dp);
                }
                if needs_v {
                    self.accumulate(v, &dvv);
                }
            }
            Op::Rotary { a, positions, negate } => {
                if self.needs_grad(a) {
                    let d = self.node(a).dims2().1;
                    let mut da = grad.to_vec();
                    // Rotation is orthogonal: the adjoint rotates by the
                    // opposite angle.
                    rotate_rows(&mut da, d, &positions, !negate);
                    self.accumulate(a, &da);
                }
            }
            Op::ConcatRows { a, b } => {
                let (ra, ca) = self.node(a).dims2();
                if self.needs_grad(a) {
                    self.accumulate(a, &grad[..ra * ca]);
                }
                if self.needs_grad(b) {
                    self.accumulate(b, &grad[ra * ca..]);
                }
            }
            Op::ConcatCols { parts } => {
                let rows = self.node(parts[0]).dims2().0;
                let total_cols: usize = parts.iter().map(|p| self.node(*p).dims2().1).sum();
                let mut col = 0;
                for p in parts {
                    let (_, c) = self.node(p).dims2();
                    if self.needs_grad(p) {
                        let mut dp = vec![0.0; rows * c];
                        for r in 0..rows {
                            dp[r * c..(r + 1) * c]
                                .copy_from_slice(&grad[r * total_cols + col..r * total_cols + col + c]);
                        }
                        self.accumulate(p, &dp);
                    }
                    col += c;
                }
            }
            Op::GatherRows { a, rows } => {
                if self.needs_grad(a) {
                    let (r, c) = self.node(a).dims2();
                    let mut da = vec![0.0; r * c];
                    for (out_r, &src_r) in rows.iter().enumerate() {
                        for j in 0..c {
                            da[src_r * c + j] += grad[out_r * c + j];
                        }
                    }
                    self.accumulate(a, &da);
                }
            }
            Op::CrossEntropyRows { logits, labels } => {
                if self.needs_grad(logits) {
                    let (r, k) = self.node(logits).dims2();
                    let ldata = &self.node(logits).data;
                    let mut dl = vec![0.0; r * k];
                    let mut probs = vec![0.0; k];
                    for row in 0..r {
                        softmax_row(&ldata[row * k..(row + 1) * k], &mut probs);
                        let g = grad[row];
                        let drow = &mut dl[row * k..(row + 1) * k];
                        for j in 0..k {
                            drow[j] = g * probs[j];
                        }
                        drow[labels[row]] -= g;
                    }
                    self.accumulate(logits, &dl);
                }
            }
            Op::Mean { a } => {
                if self.needs_grad(a) {
                    let n = self.node(a).numel().max(1);
                    let da = vec![grad[0] / n as f64; self.node(a).numel()];
                    self.accumulate(a, &da);
                }
            }
            Op::Sum { a } => {
                if self.needs_grad(a) {
                    let da = vec![grad[0]; self.node(a).numel()];
                    self.accumulate(a, &da);
                }
            }
        }
    }

    fn layer_norm_backward(&mut self, grad: &[f64], x: TensorId, scale: TensorId, offset: TensorId, eps: f64) {
        let d = *self.node(x).shape.last().unwrap();
        let rows = self.node(x).numel() / d;
        let needs_x = self.needs_grad(x);
        let needs_s = self.needs_grad(scale);
        let needs_o = self.needs_grad(offset);
        let mut dx = vec![0.0; rows * d];
        let mut ds = vec![0.0; d];
        let mut dof = vec![0.0; d];
        {
            let xdata = &self.node(x).data;
            let sdata = &self.node(scale).data;
            for r in 0..rows {
                let row = &xdata[r * d..(r + 1) * d];
                let g = &grad[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv_std = 1.0 / (var + eps).sqrt();
                // x_hat = (x - mean) * inv_std
                // dx = inv_std * (gs - mean(gs) - x_hat * mean(gs * x_hat))
                // with gs = g * scale.
                let mut mean_gs = 0.0;
                let mut mean_gsx = 0.0;
                for j in 0..d {
                    let xh = (row[j] - mean) * inv_std;
                    let gs = g[j] * sdata[j];
                    mean_gs += gs;
                    mean_gsx += gs * xh;
                    if needs_s {
                        ds[j] += g[j] * xh;
                    }
                    if needs_o {
                        dof[j] += g[j];
                    }
                }
                mean_gs /= d as f64;
                mean_gsx /= d as f64;
                if needs_x {
                    let drow = &mut dx[r * d..(r + 1) * d];
                    for j in 0..d {
                        let xh = (row[j] - mean) * inv_std;
                        drow[j] = inv_std * (g[j] * sdata[j] - mean_gs - xh * mean_gsx);
                    }
                }
            }
        }
        if needs_x {
            self.accumulate(x, &dx);
        }
        if needs_s {
            self.accumulate(scale, &ds);
        }
        if needs_o {
            self.accumulate(offset, &dof);
        }
    }
}

// ── Scalar kernels ──────────────────────────────────────────────────────

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let arow = &a[r * k..(r + 1) * k];
        let orow = &mut out[r * n..(r + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], orow);
            }
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_bwd(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner
}

/// Stable softmax of a full row into `out`.
fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Stable softmax over the unmasked entries of a row; masked entries and
/// fully masked rows come out as exact zeros.
fn softmax_masked_row(row: &[f64], mask: &[bool], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (j, &m) in mask.iter().enumerate() {
        if m && row[j] > max {
            max = row[j];
        }
    }
    if max == f64::NEG_INFINITY {
        out.fill(0.0);
        return;
    }
    let mut sum = 0.0;
    for (j, &m) in mask.iter().enumerate() {
        if m {
            let e = (row[j] - max).exp();
            out[j] = e;
            sum += e;
        } else {
            out[j] = 0.0;
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `-log softmax(row)[label]`, computed as `ln(sum exp(row - max)) + (max - row[label])`.
/// The grouping keeps the result exactly `ln K` for an all-equal row.
fn nll_row(row: &[f64], label: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    sum.ln() + (max - row[label])
}

/// Convenience scalar form: NLL of a single logit vector.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "cross_entropy: label {label} out of range for {} classes", logits.len());
    nll_row(logits, label)
}

/// Softmax of a single row (allocating form, used by prediction code).
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    softmax_row(row, &mut out);
    out
}

const ROTARY_BASE: f64 = 10_000.0;

/// Coordinate pairs the position rotation touches: the first quarter of
/// the row (half the pairs). The untouched remainder carries
/// position-independent content, so similarity matching survives across
/// long offsets while the rotated block still encodes relative position.
pub fn rotary_pairs(width: usize) -> usize {
    width / 4
}

/// In-place pairwise rotation of each `d`-wide row by its position.
/// Pair `i` rotates by `p * base^(-i/pairs)`; coordinates beyond
/// `2 * rotary_pairs(d)` pass through unchanged.
fn rotate_rows(data: &mut [f64], d: usize, positions: &[usize], negate: bool) {
    let pairs = rotary_pairs(d);
    if pairs == 0 {
        return;
    }
    let sign = if negate { -1.0 } else { 1.0 };
    for (r, &pos) in positions.iter().enumerate() {
        let row = &mut data[r * d..(r + 1) * d];
        for i in 0..pairs {
            let freq = ROTARY_BASE.powf(-(i as f64) / pairs as f64);
            let angle = sign * pos as f64 * freq;
            let (sin, cos) = angle.sin_cos();
            let a = row[2 * i];
            let b = row[2 * i + 1];
            row[2 * i] = a * cos - b * sin;
            row[2 * i + 1] = a * sin + b * cos;
        }
    }
}
