//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs, so the node list is topologically ordered by construction.
//! [`Graph::backward`] walks the list in reverse from a scalar loss.
//!
//! All graph values are matrices (`rows × cols`). There is no implicit
//! broadcasting apart from tensor-scalar operations; row-bias addition and
//! row repetition are explicit ops.

use std::borrow::Cow;

use super::params::{Bound, ParamStore};
use super::tensor::Tensor;
use crate::error::{dim_err, Result, VeError};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Pointwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
    Scale,
}

/// Second operand of [`Graph::elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand {
    None,
    Tensor(Var),
    Scalar(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    AddRowBias(Var, Var),
    Transpose(Var),
    /// Masked positions have zero output, hence zero gradient.
    SoftmaxRows(Var),
    Sum(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceRows(Var, usize),
    RepeatRows(Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
        frozen_row: Option<usize>,
    },
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node<'p> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [f64]>,
    op: Op,
    requires_grad: bool,
}

/// Recorded operations of one forward pass.
///
/// Leaves created with [`Graph::bind`] borrow their values from a
/// [`ParamStore`], so a graph never copies model weights.
#[derive(Debug, Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
}

fn matrix_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [c] => Ok((1, *c)),
        s => Err(VeError::Contract(format!(
            "graph values must be rank 1 or 2, got shape {s:?}"
        ))),
    }
}

/// `a (m×k) · b (k×n)`
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0.0 {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×n) · bᵀ` where `b` is `k×n`.
fn mm_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[t * n..(t + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], keep: Option<&[bool]>, out: &mut [f64]) -> Result<()> {
    let kept = |j: usize| keep.is_none_or(|k| k[j]);
    let max = (0..x.len())
        .filter(|&j| kept(j))
        .map(|j| x[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(VeError::Domain("softmax over a row with no unmasked entries".into()));
    }
    let mut total = 0.0;
    for j in 0..x.len() {
        out[j] = if kept(j) { (x[j] - max).exp() } else { 0.0 };
        total += out[j];
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => *slot = Some(delta.to_vec()),
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'p, [f64]>, op: Op, rg: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad: rg,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(rows, cols, Cow::Owned(value), op, rg)
    }

    /// Leaf owning its value. `requires_grad` decides whether backward
    /// populates a gradient for it.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Result<Var> {
        let (r, c) = matrix_dims(&t)?;
        Ok(self.push(r, c, Cow::Owned(t.into_data()), Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t, false)
    }

    /// Leaf borrowing a tensor that outlives the graph.
    pub fn leaf_ref(&mut self, t: &'p Tensor, requires_grad: bool) -> Result<Var> {
        let (r, c) = matrix_dims(t)?;
        Ok(self.push(r, c, Cow::Borrowed(t.data()), Op::Leaf, requires_grad))
    }

    /// Adds one leaf per stored parameter; trainable ones require grad.
    pub fn bind(&mut self, store: &'p ParamStore) -> Result<Bound<'p>> {
        let mut vars = Vec::with_capacity(store.len());
        for (_, p) in store.iter() {
            vars.push(self.leaf_ref(&p.tensor, p.trainable)?);
        }
        Ok(Bound::new(store, vars))
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(vec![n.rows, n.cols], n.value.to_vec()).expect("node shape is consistent")
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let n = &self.nodes[v.0];
        if n.value.len() != 1 {
            return Err(VeError::Contract(format!(
                "expected a scalar, got {}x{}",
                n.rows, n.cols
            )));
        }
        Ok(n.value[0])
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a node, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- ops -------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(dim_err("matmul", &[m, k], &[k2, n]));
        }
        let out = mm(self.value(a), self.value(b), m, k, n);
        Ok(self.derived(m, n, out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(dim_err(op_name, &[sa.0, sa.1], &[sb.0, sb.1]));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.derived(sa.0, sa.1, out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.derived(r, c, out, op, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Dispatches on [`ElementwiseKind`]. Binary kinds need a tensor
    /// operand of identical shape; `Scale` needs a scalar; `Add` also
    /// accepts a scalar.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Operand) -> Result<Var> {
        use ElementwiseKind as K;
        match (kind, b) {
            (K::Add, Operand::Tensor(b)) => self.add(a, b),
            (K::Add, Operand::Scalar(s)) => Ok(self.add_scalar(a, s)),
            (K::Mul, Operand::Tensor(b)) => self.mul(a, b),
            (K::Mul | K::Scale, Operand::Scalar(s)) => Ok(self.scale(a, s)),
            (K::Tanh, Operand::None) => Ok(self.tanh(a)),
            (K::Sigmoid, Operand::None) => Ok(self.sigmoid(a)),
            (K::Relu, Operand::None) => Ok(self.relu(a)),
            (kind, b) => Err(VeError::Contract(format!("{kind:?} does not accept operand {b:?}"))),
        }
    }

    /// `x (m×n) + bias (1×n)` added to every row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        let sb = self.shape(bias);
        if sb != (1, n) {
            return Err(dim_err("add_row_bias", &[m, n], &[sb.0, sb.1]));
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        Ok(self.derived(m, n, out, Op::AddRowBias(x, bias), &[x, bias]))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let v = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        self.derived(c, r, out, Op::Transpose(a), &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax where columns with `keep[j] == false` are treated
    /// as `-inf` scores: they get exactly zero weight and zero gradient.
    pub fn softmax_rows_masked(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if keep.len() != c {
            return Err(dim_err("softmax_rows_masked", &[r, c], &[keep.len()]));
        }
        self.softmax_impl(x, Some(keep.to_vec()))
    }

    fn softmax_impl(&mut self, x: Var, keep: Option<Vec<bool>>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(VeError::Domain("softmax over an empty row".into()));
        }
        let mut out = vec![0.0; r * c];
        let v = self.value(x);
        for i in 0..r {
            softmax_row(&v[i * c..(i + 1) * c], keep.as_deref(), &mut out[i * c..(i + 1) * c])?;
        }
        Ok(self.derived(r, c, out, Op::SoftmaxRows(x), &[x]))
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.derived(1, 1, vec![s], Op::Sum(a), &[a])
    }

    /// Column sums: `m×n → 1×n`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (_, n) = self.shape(a);
        let mut out = vec![0.0; n];
        for row in self.value(a).chunks(n) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        self.derived(1, n, out, Op::SumRows(a), &[a])
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| VeError::Contract("concat_cols of nothing".into()))?;
        let rows = self.shape(first).0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(dim_err("concat_cols", &[rows], &[r, c]));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.derived(rows, total, out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| VeError::Contract("stack_rows of nothing".into()))?;
        let cols = self.shape(first).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(dim_err("stack_rows", &[cols], &[r, c]));
            }
            out.extend_from_slice(self.value(p));
            rows += r;
        }
        Ok(self.derived(rows, cols, out, Op::StackRows(parts.to_vec()), parts))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start >= end || end > r {
            return Err(dim_err("slice_rows", &[r, c], &[start, end]));
        }
        let out = self.value(a)[start * c..end * c].to_vec();
        Ok(self.derived(end - start, c, out, Op::SliceRows(a, start), &[a]))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.slice_rows(a, i, i + 1)
    }

    /// Tiles a `1×n` row `times` times into `times×n`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 || times == 0 {
            return Err(dim_err("repeat_rows", &[r, c], &[times]));
        }
        let row = self.value(a).to_vec();
        let out = row.iter().copied().cycle().take(times * c).collect();
        Ok(self.derived(times, c, out, Op::RepeatRows(a), &[a]))
    }

    /// Selects rows of `table` by index. Gradients scatter back into the
    /// table except for `frozen_row`, which never receives gradient.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let (r, c) = self.shape(table);
        if indices.is_empty() {
            return Err(VeError::Contract("gather_rows with no indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(dim_err("gather_rows", &[r, c], &[bad]));
        }
        let v = self.value(table);
        let out = indices
            .iter()
            .flat_map(|&i| v[i * c..(i + 1) * c].iter().copied())
            .collect();
        let op = Op::Gather {
            table,
            indices: indices.to_vec(),
            frozen_row,
        };
        Ok(self.derived(indices.len(), c, out, op, &[table]))
    }

    /// Mean over rows of `-log softmax(logits)[label]`, as a 1×1 node.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.shape(logits);
        if labels.len() != b {
            return Err(dim_err("cross_entropy", &[b, c], &[labels.len()]));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= c) {
            return Err(VeError::Contract(format!("label {bad} out of range for {c} classes")));
        }
        let v = self.value(logits);
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = &v[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[l];
        }
        let op = Op::CrossEntropy(logits, labels.to_vec());
        Ok(self.derived(1, 1, vec![total / b as f64], op, &[logits]))
    }

    // ---- backward ----------------------------------------------------------

    /// Propagates `d loss / d node` to every node that requires grad.
    ///
    /// Gradients accumulate across calls until [`Graph::zero_grad`]. Leaves
    /// that require grad but are disconnected from `loss` receive zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            let (r, c) = self.shape(loss);
            return Err(VeError::Contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut adj);
            accumulate(&mut self.grads[id], &g);
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && self.grads[id].is_none() {
                self.grads[id] = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        let mut send = |v: Var, delta: Vec<f64>| {
            if self.nodes[v.0].requires_grad {
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot => *slot = Some(delta),
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = node.cols;
                if rg(a) {
                    send(*a, mm_nt(g, self.value(*b), m, n, k));
                }
                if rg(b) {
                    send(*b, mm_tn(self.value(*a), g, m, k, n));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if rg(a) {
                    send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if rg(b) {
                    send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|x| x * s).collect()),
            Op::AddScalar(a) => send(*a, g.to_vec()),
            Op::Tanh(a) => send(*a, g.iter().zip(out.iter()).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Sigmoid(a) => send(*a, g.iter().zip(out.iter()).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Relu(a) => {
                let x = self.value(*a);
                send(
                    *a,
                    g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::AddRowBias(x, b) => {
                send(*x, g.to_vec());
                if rg(b) {
                    let n = node.cols;
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                    send(*b, db);
                }
            }
            Op::Transpose(a) => {
                // g is cols×rows of the input; transpose it back
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = g[j * r + i];
                    }
                }
                send(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let c = node.cols;
                let mut d = vec![0.0; g.len()];
                for ((drow, grow), yrow) in d.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for j in 0..c {
                        drow[j] = (grow[j] - dot) * yrow[j];
                    }
                }
                send(*a, d);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                send(*a, vec![g[0]; n]);
            }
            Op::SumRows(a) => {
                let (r, _) = self.shape(*a);
                send(*a, g.iter().copied().cycle().take(r * g.len()).collect());
            }
            Op::ConcatCols(parts) => {
                let total = node.cols;
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if rg(&p) {
                        let mut d = Vec::with_capacity(r * c);
                        for i in 0..r {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + c]);
                        }
                        send(p, d);
                    }
                    offset += c;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if rg(&p) {
                        send(p, g[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let mut d = vec![0.0; r * c];
                d[start * c..start * c + g.len()].copy_from_slice(g);
                send(*a, d);
            }
            Op::RepeatRows(a) => {
                let c = node.cols;
                let mut d = vec![0.0; c];
                for row in g.chunks(c) {
                    d.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
                send(*a, d);
            }
            Op::Gather {
                table,
                indices,
                frozen_row,
            } => {
                let (r, c) = self.shape(*table);
                let mut d = vec![0.0; r * c];
                for (k, &i) in indices.iter().enumerate() {
                    if Some(i) == *frozen_row {
                        continue;
                    }
                    d[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&g[k * c..(k + 1) * c])
                        .for_each(|(d, x)| *d += x);
                }
                send(*table, d);
            }
            Op::CrossEntropy(logits, labels) => {
                let (b, c) = self.shape(*logits);
                let v = self.value(*logits);
                let mut d = vec![0.0; b * c];
                let scale = g[0] / b as f64;
                for (i, &l) in labels.iter().enumerate() {
                    let mut p = vec![0.0; c];
                    softmax_row(&v[i * c..(i + 1) * c], None, &mut p).expect("finite logits");
                    for j in 0..c {
                        let onehot = if j == l { 1.0 } else { 0.0 };
                        d[i * c + j] = (p[j] - onehot) * scale;
                    }
                }
                send(*logits, d);
            }
        }
    }
}
