//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! The primitive set is closed: leaf, add (plain and the two broadcast
//! orientations), multiply, scale, mask-apply, matmul, exp, log, relu,
//! sum, mean, max, stable softmax, row L2-normalization, concat and
//! index-select. A new primitive does not land without a finite-difference
//! test next to the existing ones in `gradcheck`.
//!
//! Values are computed eagerly as operations are recorded, so the tape is
//! topologically ordered by construction and the backward pass is a single
//! reverse sweep that visits each node exactly once. A tape and its
//! variables are confined to one thread; independent tapes may run
//! concurrently.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Below this norm, L2-normalization returns the zero vector with zero
/// gradient instead of dividing; occurrences are counted on the tape.
pub const DEGENERATE_NORM: f64 = 1e-30;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape values.
    Add(Var, Var),
    /// `[n,m] + [m]`: the vector is added to every row.
    AddRow(Var, Var),
    /// `[n,m] + [n]`: element `i` of the vector is added across row `i`.
    AddCol(Var, Var),
    /// Elementwise product of two same-shape values.
    Mul(Var, Var),
    /// `a · b`, or `a · bᵀ` when `trans_b` is set. 2-D operands only.
    MatMul { a: Var, b: Var, trans_b: bool },
    Exp(Var),
    Log(Var),
    Relu(Var),
    /// Multiplication by a compile-time constant.
    Scale(Var, f64),
    /// Elementwise product with a constant same-shape weight buffer.
    /// Serves masking, per-element weighting, and constant negation.
    MaskApply(Var, Vec<f64>),
    /// Sum of all elements to a scalar.
    Sum(Var),
    /// Row (`axis=1`) or column (`axis=0`) sums of a 2-D value.
    SumAxis(Var, usize),
    /// Mean of all elements to a scalar.
    Mean(Var),
    /// Maximum of all elements; gradient routes to the first argmax.
    Max(Var, usize),
    /// Per-row maximum of a 2-D value with saved argmax positions.
    MaxRows(Var, Vec<usize>),
    /// Stable softmax over the last axis; rows of the saved output sum to 1.
    Softmax(Var),
    /// L2-normalization over the last axis with saved row norms.
    L2Normalize(Var, Vec<f64>),
    /// Row-wise concatenation.
    Concat(Vec<Var>),
    /// Row gather (element gather for 1-D input); duplicate indices allowed.
    IndexSelect(Var, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add-row-broadcast",
            Op::AddCol(..) => "add-col-broadcast",
            Op::Mul(..) => "multiply",
            Op::MatMul { .. } => "matmul",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Relu(..) => "relu",
            Op::Scale(..) => "scale",
            Op::MaskApply(..) => "mask-apply",
            Op::Sum(..) | Op::SumAxis(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Max(..) | Op::MaxRows(..) => "max",
            Op::Softmax(..) => "softmax-stable",
            Op::L2Normalize(..) => "l2-normalize",
            Op::Concat(..) => "concat",
            Op::IndexSelect(..) => "index-select",
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Recorded computation graph.
pub struct Tape {
    nodes: Vec<Node>,
    degenerate_normalize: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// `C[m,n] += A[m,k] · B[k,n]`, accumulating into `out`.
fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `C[m,n] += A[m,k] · B[n,k]ᵀ`, accumulating into `out`.
///
/// Four accumulator lanes break the floating-point add dependency chain;
/// the summation order is fixed, so results stay bit-reproducible.
fn matmul_tb_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = [0.0f64; 4];
            let mut ca = arow.chunks_exact(4);
            let mut cb = brow.chunks_exact(4);
            for (xa, xb) in (&mut ca).zip(&mut cb) {
                acc[0] += xa[0] * xb[0];
                acc[1] += xa[1] * xb[1];
                acc[2] += xa[2] * xb[2];
                acc[3] += xa[3] * xb[3];
            }
            let tail: f64 = ca
                .remainder()
                .iter()
                .zip(cb.remainder())
                .map(|(&x, &y)| x * y)
                .sum();
            *o += (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
        }
    }
}

/// `C[k,n] += A[m,k]ᵀ · B[m,n]`, accumulating into `out`.
fn matmul_ta_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            degenerate_normalize: 0,
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// How many L2-normalization rows fell below [`DEGENERATE_NORM`].
    pub fn degenerate_normalize_count(&self) -> usize {
        self.degenerate_normalize
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.nodes[v.0].value.len(), 1, "node is not a scalar");
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input value. Leaves later passed to [`Tape::eval_with_grad`]
    /// as parameters receive gradients; other leaves act as constants.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.push(vec![1], vec![value], Op::Leaf)
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        assert_eq!(s.len(), 2, "expected 2-D value, got shape {s:?}");
        (s[0], s[1])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.nodes[a.0].shape, self.nodes[b.0].shape,
            "add: shape mismatch"
        );
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(self.nodes[a.0].shape.clone(), value, Op::Add(a, b))
    }

    /// `[n,m] + [m]`, the vector added to every row.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (n, m) = self.dims2(a);
        assert_eq!(self.nodes[b.0].shape, vec![m], "add_row: width mismatch");
        let bv = &self.nodes[b.0].value;
        let mut value = self.nodes[a.0].value.clone();
        for i in 0..n {
            for (x, &y) in value[i * m..(i + 1) * m].iter_mut().zip(bv) {
                *x += y;
            }
        }
        self.push(vec![n, m], value, Op::AddRow(a, b))
    }

    /// `[n,m] + [n]`, element `i` of the vector added across row `i`.
    pub fn add_col(&mut self, a: Var, b: Var) -> Var {
        let (n, m) = self.dims2(a);
        assert_eq!(self.nodes[b.0].shape, vec![n], "add_col: height mismatch");
        let bv = self.nodes[b.0].value.clone();
        let mut value = self.nodes[a.0].value.clone();
        for (i, &y) in bv.iter().enumerate() {
            for x in value[i * m..(i + 1) * m].iter_mut() {
                *x += y;
            }
        }
        self.push(vec![n, m], value, Op::AddCol(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.nodes[a.0].shape, self.nodes[b.0].shape,
            "mul: shape mismatch"
        );
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(self.nodes[a.0].shape.clone(), value, Op::Mul(a, b))
    }

    /// `a · b` for 2-D operands; `a · bᵀ` when `trans_b`.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (m, k) = self.dims2(a);
        let (n, kb) = if trans_b {
            self.dims2(b)
        } else {
            let (k2, n2) = self.dims2(b);
            (n2, k2)
        };
        assert_eq!(k, kb, "matmul: inner dimension mismatch");
        let mut value = vec![0.0; m * n];
        if trans_b {
            matmul_tb_acc(
                &self.nodes[a.0].value,
                &self.nodes[b.0].value,
                &mut value,
                m,
                k,
                n,
            );
        } else {
            matmul_acc(
                &self.nodes[a.0].value,
                &self.nodes[b.0].value,
                &mut value,
                m,
                k,
                n,
            );
        }
        self.push(vec![m, n], value, Op::MatMul { a, b, trans_b })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.iter().map(|v| v.exp()).collect();
        self.push(self.nodes[x.0].shape.clone(), value, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.iter().map(|v| v.ln()).collect();
        self.push(self.nodes[x.0].shape.clone(), value, Op::Log(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.iter().map(|v| v.max(0.0)).collect();
        self.push(self.nodes[x.0].shape.clone(), value, Op::Relu(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.nodes[x.0].value.iter().map(|v| v * c).collect();
        self.push(self.nodes[x.0].shape.clone(), value, Op::Scale(x, c))
    }

    /// Elementwise product with a constant weight buffer of identical shape.
    /// The weights are not differentiated through.
    pub fn mask_apply(&mut self, x: Var, mask: &Tensor) -> Var {
        assert_eq!(
            self.nodes[x.0].shape,
            mask.shape(),
            "mask_apply: shape mismatch"
        );
        let value = self.nodes[x.0]
            .value
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| v * m)
            .collect();
        self.push(
            self.nodes[x.0].shape.clone(),
            value,
            Op::MaskApply(x, mask.data().to_vec()),
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.iter().sum();
        self.push(vec![1], vec![value], Op::Sum(x))
    }

    /// Row sums (`axis=1`) or column sums (`axis=0`) of a 2-D value.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        let (n, m) = self.dims2(x);
        assert!(axis < 2, "sum_axis: axis out of range");
        let xv = &self.nodes[x.0].value;
        let value = if axis == 1 {
            (0..n)
                .map(|i| xv[i * m..(i + 1) * m].iter().sum())
                .collect::<Vec<f64>>()
        } else {
            let mut out = vec![0.0; m];
            for i in 0..n {
                for (o, &v) in out.iter_mut().zip(&xv[i * m..(i + 1) * m]) {
                    *o += v;
                }
            }
            out
        };
        let len = value.len();
        self.push(vec![len], value, Op::SumAxis(x, axis))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.len();
        let value = self.nodes[x.0].value.iter().sum::<f64>() / n as f64;
        self.push(vec![1], vec![value], Op::Mean(x))
    }

    /// Maximum over all elements; subgradient routes to the first argmax.
    pub fn max(&mut self, x: Var) -> Var {
        let mut arg = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &v) in self.nodes[x.0].value.iter().enumerate() {
            if v > best {
                best = v;
                arg = i;
            }
        }
        self.push(vec![1], vec![best], Op::Max(x, arg))
    }

    /// Per-row maximum of a 2-D value.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let (n, m) = self.dims2(x);
        let xv = &self.nodes[x.0].value;
        let mut value = Vec::with_capacity(n);
        let mut args = Vec::with_capacity(n);
        for i in 0..n {
            let row = &xv[i * m..(i + 1) * m];
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            value.push(best);
            args.push(arg);
        }
        self.push(vec![n], value, Op::MaxRows(x, args))
    }

    /// Stable softmax over the last axis (row max subtracted before exp).
    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.nodes[x.0].shape.clone();
        let w = *shape.last().unwrap();
        let xv = &self.nodes[x.0].value;
        let mut value = vec![0.0; xv.len()];
        for (row, out) in xv.chunks_exact(w).zip(value.chunks_exact_mut(w)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - m).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        self.push(shape, value, Op::Softmax(x))
    }

    /// L2-normalizes each row of the last axis. Rows with norm below
    /// [`DEGENERATE_NORM`] become zero vectors with zero gradient and bump
    /// the tape's degenerate counter.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let shape = self.nodes[x.0].shape.clone();
        let w = *shape.last().unwrap();
        let xv = &self.nodes[x.0].value;
        let mut value = vec![0.0; xv.len()];
        let mut norms = Vec::with_capacity(xv.len() / w);
        let mut degenerate = 0;
        for (row, out) in xv.chunks_exact(w).zip(value.chunks_exact_mut(w)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(norm);
            if norm < DEGENERATE_NORM {
                degenerate += 1;
            } else {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = v / norm;
                }
            }
        }
        self.degenerate_normalize += degenerate;
        if degenerate > 0 {
            log::warn!("l2_normalize: {degenerate} degenerate row(s) mapped to zero");
        }
        self.push(shape, value, Op::L2Normalize(x, norms))
    }

    /// Concatenates values along axis 0. All parts must share trailing
    /// dimensions.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat: no parts");
        let tail = self.nodes[parts[0].0].shape[1..].to_vec();
        let mut rows = 0;
        let mut value = Vec::new();
        for &p in parts {
            assert_eq!(
                self.nodes[p.0].shape[1..],
                tail[..],
                "concat: trailing dimensions differ"
            );
            rows += self.nodes[p.0].shape[0];
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        self.push(shape, value, Op::Concat(parts.to_vec()))
    }

    /// Gathers rows (elements for 1-D input) by index; duplicates allowed.
    pub fn index_select(&mut self, x: Var, indices: &[usize]) -> Var {
        let shape = &self.nodes[x.0].shape;
        let row_w: usize = shape[1..].iter().product();
        let rows = shape[0];
        let mut value = Vec::with_capacity(indices.len() * row_w);
        for &i in indices {
            assert!(i < rows, "index_select: index {i} out of {rows} rows");
            value.extend_from_slice(&self.nodes[x.0].value[i * row_w..(i + 1) * row_w]);
        }
        let mut out_shape = vec![indices.len()];
        out_shape.extend_from_slice(&shape[1..]);
        self.push(out_shape, value, Op::IndexSelect(x, indices.to_vec()))
    }

    // ── Compositions of the primitives above ────────────────────────────

    /// `a - b` via scale and add.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Row-wise log-sum-exp of a 2-D value, in the subtract-row-max form.
    pub fn log_sum_exp_rows(&mut self, x: Var) -> Var {
        let m = self.max_rows(x);
        let neg_m = self.scale(m, -1.0);
        let shifted = self.add_col(x, neg_m);
        let e = self.exp(shifted);
        let s = self.sum_axis(e, 1);
        let ls = self.log(s);
        self.add(ls, m)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Evaluates the scalar at `root` and the gradients of every tensor in
    /// `params`. Parameters the root does not depend on get zero gradients.
    ///
    /// Fails when `root` is not a scalar, or when any forward value or
    /// gradient on the path is NaN/infinite (naming the primitive).
    pub fn eval_with_grad(&self, root: Var, params: &[Var]) -> Result<(f64, Vec<Tensor>)> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "eval_with_grad root must be a scalar, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        for node in &self.nodes {
            if let Some(bad) = node.value.iter().find(|v| !v.is_finite()) {
                return Err(Error::NumericFault {
                    op: node.op.name(),
                    detail: format!("forward value {bad}"),
                });
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NumericFault {
                    op: self.nodes[id].op.name(),
                    detail: format!("gradient value {bad}"),
                });
            }
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let value = self.nodes[root.0].value[0];
        let out = params
            .iter()
            .map(|p| {
                let shape = self.nodes[p.0].shape.clone();
                match &grads[p.0] {
                    Some(g) => Tensor::new(shape, g.clone()),
                    None => Tensor::zeros(shape),
                }
            })
            .collect();
        Ok((value, out))
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], target: usize, len: usize) -> &mut Vec<f64> {
        grads[target].get_or_insert_with(|| vec![0.0; len])
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (&x, o) in g
                    .iter()
                    .zip(Self::accumulate(grads, a.0, self.nodes[a.0].value.len()))
                {
                    *o += x;
                }
                for (&x, o) in g
                    .iter()
                    .zip(Self::accumulate(grads, b.0, self.nodes[b.0].value.len()))
                {
                    *o += x;
                }
            }
            Op::AddRow(a, b) => {
                let (n, m) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                for (&x, o) in g
                    .iter()
                    .zip(Self::accumulate(grads, a.0, self.nodes[a.0].value.len()))
                {
                    *o += x;
                }
                let gb = Self::accumulate(grads, b.0, m);
                for i in 0..n {
                    for (o, &x) in gb.iter_mut().zip(&g[i * m..(i + 1) * m]) {
                        *o += x;
                    }
                }
            }
            Op::AddCol(a, b) => {
                let (n, m) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                for (&x, o) in g
                    .iter()
                    .zip(Self::accumulate(grads, a.0, self.nodes[a.0].value.len()))
                {
                    *o += x;
                }
                let gb = Self::accumulate(grads, b.0, n);
                for (i, o) in gb.iter_mut().enumerate() {
                    *o += g[i * m..(i + 1) * m].iter().sum::<f64>();
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                {
                    let ga = Self::accumulate(grads, a.0, av.len());
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                }
                let gb = Self::accumulate(grads, b.0, bv.len());
                for ((o, &x), &y) in gb.iter_mut().zip(g).zip(av) {
                    *o += x * y;
                }
            }
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = node.shape[1];
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if *trans_b {
                    // out = a·bᵀ with b: [n,k].  ga += g·b,  gb += gᵀ·a.
                    matmul_acc(g, bv, Self::accumulate(grads, a.0, m * k), m, n, k);
                    matmul_ta_acc(g, av, Self::accumulate(grads, b.0, n * k), m, n, k);
                } else {
                    // out = a·b with b: [k,n].  ga += g·bᵀ,  gb += aᵀ·g.
                    matmul_tb_acc(g, bv, Self::accumulate(grads, a.0, m * k), m, n, k);
                    matmul_ta_acc(av, g, Self::accumulate(grads, b.0, k * n), m, k, n);
                }
            }
            Op::Exp(x) => {
                let gx = Self::accumulate(grads, x.0, node.value.len());
                for ((o, &gv), &y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *o += gv * y;
                }
            }
            Op::Log(x) => {
                let xv = &self.nodes[x.0].value;
                let gx = Self::accumulate(grads, x.0, xv.len());
                for ((o, &gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                    *o += gv / v;
                }
            }
            Op::Relu(x) => {
                let xv = &self.nodes[x.0].value;
                let gx = Self::accumulate(grads, x.0, xv.len());
                for ((o, &gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                    if v > 0.0 {
                        *o += gv;
                    }
                }
            }
            Op::Scale(x, c) => {
                let gx = Self::accumulate(grads, x.0, node.value.len());
                for (o, &gv) in gx.iter_mut().zip(g) {
                    *o += gv * c;
                }
            }
            Op::MaskApply(x, mask) => {
                let gx = Self::accumulate(grads, x.0, mask.len());
                for ((o, &gv), &mv) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gv * mv;
                }
            }
            Op::Sum(x) => {
                let gx = Self::accumulate(grads, x.0, self.nodes[x.0].value.len());
                for o in gx.iter_mut() {
                    *o += g[0];
                }
            }
            Op::SumAxis(x, axis) => {
                let (n, m) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                let gx = Self::accumulate(grads, x.0, n * m);
                if *axis == 1 {
                    for i in 0..n {
                        for o in gx[i * m..(i + 1) * m].iter_mut() {
                            *o += g[i];
                        }
                    }
                } else {
                    for i in 0..n {
                        for (o, &gv) in gx[i * m..(i + 1) * m].iter_mut().zip(g) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Mean(x) => {
                let len = self.nodes[x.0].value.len();
                let share = g[0] / len as f64;
                let gx = Self::accumulate(grads, x.0, len);
                for o in gx.iter_mut() {
                    *o += share;
                }
            }
            Op::Max(x, arg) => {
                let gx = Self::accumulate(grads, x.0, self.nodes[x.0].value.len());
                gx[*arg] += g[0];
            }
            Op::MaxRows(x, args) => {
                let m = self.nodes[x.0].shape[1];
                let gx = Self::accumulate(grads, x.0, self.nodes[x.0].value.len());
                for (i, &arg) in args.iter().enumerate() {
                    gx[i * m + arg] += g[i];
                }
            }
            Op::Softmax(x) => {
                // Per row: gx = y ∘ (g − ⟨g, y⟩); rows of gx sum to 0.
                let w = *node.shape.last().unwrap();
                let gx = Self::accumulate(grads, x.0, node.value.len());
                for ((grow, yrow), orow) in g
                    .chunks_exact(w)
                    .zip(node.value.chunks_exact(w))
                    .zip(gx.chunks_exact_mut(w))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    for ((o, &gv), &y) in orow.iter_mut().zip(grow).zip(yrow) {
                        *o += y * (gv - dot);
                    }
                }
            }
            Op::L2Normalize(x, norms) => {
                // Per row: gx = (g − ⟨g, y⟩·y) / ‖x‖; zero for degenerate rows.
                let w = *node.shape.last().unwrap();
                let gx = Self::accumulate(grads, x.0, node.value.len());
                for (i, norm) in norms.iter().enumerate() {
                    if *norm < DEGENERATE_NORM {
                        continue;
                    }
                    let grow = &g[i * w..(i + 1) * w];
                    let yrow = &node.value[i * w..(i + 1) * w];
                    let dot: f64 = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    let orow = &mut gx[i * w..(i + 1) * w];
                    for ((o, &gv), &y) in orow.iter_mut().zip(grow).zip(yrow) {
                        *o += (gv - dot * y) / norm;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    let gp = Self::accumulate(grads, p.0, len);
                    for (o, &gv) in gp.iter_mut().zip(&g[offset..offset + len]) {
                        *o += gv;
                    }
                    offset += len;
                }
            }
            Op::IndexSelect(x, indices) => {
                let row_w: usize = self.nodes[x.0].shape[1..].iter().product();
                let gx = Self::accumulate(grads, x.0, self.nodes[x.0].value.len());
                for (r, &i) in indices.iter().enumerate() {
                    for (o, &gv) in gx[i * row_w..(i + 1) * row_w]
                        .iter_mut()
                        .zip(&g[r * row_w..(r + 1) * row_w])
                    {
                        *o += gv;
                    }
                }
            }
        }
    }
}
