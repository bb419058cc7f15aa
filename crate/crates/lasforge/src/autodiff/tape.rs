use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape
/// that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// Operation kinds the tape can record. Attributes that shape the output
/// (clamp bounds, scale factor, selected labels, column windows) travel with
/// the kind so a single dispatch point, [`Tape::op_forward`], covers every op.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `[m,k] x [k,n] -> [m,n]`
    Matmul,
    /// Elementwise add of two equally shaped tensors.
    Add,
    /// `[m,n] + [n] -> [m,n]`; the one permitted broadcast.
    BiasAdd,
    /// Elementwise product of two equally shaped tensors.
    Mul,
    Relu,
    /// Row-wise softmax; 1-d input is treated as a single row.
    Softmax,
    /// Row-wise log-softmax, the numerically stable route to cross-entropy.
    LogSoftmax,
    /// Elementwise natural log.
    Log,
    /// Sum of all elements, yielding a scalar.
    Sum,
    /// Mean of all elements, yielding a scalar.
    Mean,
    /// Elementwise clamp into `[lo, hi]`; gradient 1 inside (inclusive), 0 outside.
    Clamp { lo: f64, hi: f64 },
    /// Multiplication by a compile-time constant factor.
    Scale { factor: f64 },
    /// `out[r] = in[r, labels[r]]` for a `[n,c]` input.
    SelectClass { labels: Vec<usize> },
    /// Columns `[start, start+len)` of a `[n,c]` input.
    SliceCols { start: usize, len: usize },
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Add => "add",
            OpKind::BiasAdd => "bias_add",
            OpKind::Mul => "mul",
            OpKind::Relu => "relu",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Log => "log",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Clamp { .. } => "clamp",
            OpKind::Scale { .. } => "scale",
            OpKind::SelectClass { .. } => "select_class",
            OpKind::SliceCols { .. } => "slice_cols",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::Matmul | OpKind::Add | OpKind::BiasAdd | OpKind::Mul => 2,
            _ => 1,
        }
    }
}

struct Node {
    op: Option<OpKind>, // None marks a leaf
    inputs: Vec<usize>,
    value: Tensor,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
}

/// Record of one forward pass. Nodes are appended in execution order, which
/// is by construction a topological order, so backward is a single reverse
/// sweep that visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers `t` as a leaf; its `requires_grad` flag decides whether
    /// backward will populate a gradient for it.
    pub fn leaf(&mut self, t: Tensor) -> TensorId {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node { op: None, inputs: vec![], value: t, grad: None, needs_grad });
        TensorId(self.nodes.len() - 1)
    }

    /// Registers `t` as a gradient-free constant leaf.
    pub fn constant(&mut self, t: Tensor) -> TensorId {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the latest `backward` root with respect to `id`, if one
    /// was propagated there.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, id: TensorId) -> Option<Tensor> {
        let node = &self.nodes[id.0];
        node.grad.as_ref().map(|g| {
            Tensor::from_vec(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value")
        })
    }

    fn check_ids(&self, op: &OpKind, inputs: &[TensorId]) -> Result<()> {
        if inputs.len() != op.arity() {
            return Err(Error::invalid(format!(
                "{} expects {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::invalid(format!("{}: input id not on this tape", op.name())));
            }
        }
        Ok(())
    }

    /// Records `op` applied to `inputs` and returns the result id. All the
    /// named op methods route through here.
    pub fn op_forward(&mut self, op: OpKind, inputs: &[TensorId]) -> Result<TensorId> {
        self.check_ids(&op, inputs)?;
        // Non-finite values are allowed to flow through: divergence detection
        // happens at the consumer (attack and trainer loops), which can
        // surface a recoverable error instead of a panic.
        let value = self.eval(&op, inputs)?;
        let needs_grad = inputs.iter().any(|id| self.nodes[id.0].needs_grad);
        self.nodes.push(Node {
            op: Some(op),
            inputs: inputs.iter().map(|id| id.0).collect(),
            value,
            grad: None,
            needs_grad,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    fn eval(&self, op: &OpKind, inputs: &[TensorId]) -> Result<Tensor> {
        let val = |i: usize| &self.nodes[inputs[i].0].value;
        let shape_err = |op: &'static str, lhs: &Tensor, rhs: &Tensor| Error::Shape {
            op,
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        match op {
            OpKind::Matmul => {
                let (a, b) = (val(0), val(1));
                let ([m, k], [k2, n]) = (a.dims2()?, b.dims2()?);
                if k != k2 {
                    return Err(shape_err("matmul", a, b));
                }
                Tensor::from_vec(vec![m, n], kernels::matmul(m, k, n, a.data(), b.data()))
            }
            OpKind::Add => {
                let (a, b) = (val(0), val(1));
                if a.shape() != b.shape() {
                    return Err(shape_err("add", a, b));
                }
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
                Tensor::from_vec(a.shape().to_vec(), data)
            }
            OpKind::BiasAdd => {
                let (a, b) = (val(0), val(1));
                let [m, n] = a.dims2()?;
                if b.shape() != [n] {
                    return Err(shape_err("bias_add", a, b));
                }
                let mut data = a.data().to_vec();
                for i in 0..m {
                    for j in 0..n {
                        data[i * n + j] += b.data()[j];
                    }
                }
                Tensor::from_vec(vec![m, n], data)
            }
            OpKind::Mul => {
                let (a, b) = (val(0), val(1));
                if a.shape() != b.shape() {
                    return Err(shape_err("mul", a, b));
                }
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                Tensor::from_vec(a.shape().to_vec(), data)
            }
            OpKind::Relu => {
                let a = val(0);
                let data = a.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
                Tensor::from_vec(a.shape().to_vec(), data)
            }
            OpKind::Softmax => {
                let a = val(0);
                let [rows, cols] = row_view(a)?;
                Tensor::from_vec(a.shape().to_vec(), kernels::softmax_rows(rows, cols, a.data()))
            }
            OpKind::LogSoftmax => {
                let a = val(0);
                let [rows, cols] = row_view(a)?;
                Tensor::from_vec(a.shape().to_vec(), kernels::log_softmax_rows(rows, cols, a.data()))
            }
            OpKind::Log => {
                let a = val(0);
                Tensor::from_vec(a.shape().to_vec(), a.data().iter().map(|x| x.ln()).collect())
            }
            OpKind::Sum => Ok(Tensor::scalar(val(0).data().iter().sum())),
            OpKind::Mean => {
                let a = val(0);
                Ok(Tensor::scalar(a.data().iter().sum::<f64>() / a.numel() as f64))
            }
            OpKind::Clamp { lo, hi } => {
                if !(lo <= hi) {
                    return Err(Error::invalid(format!("clamp: lo {lo} exceeds hi {hi}")));
                }
                let a = val(0);
                let data = a.data().iter().map(|&x| x.clamp(*lo, *hi)).collect();
                Tensor::from_vec(a.shape().to_vec(), data)
            }
            OpKind::Scale { factor } => {
                let a = val(0);
                Tensor::from_vec(a.shape().to_vec(), a.data().iter().map(|x| x * factor).collect())
            }
            OpKind::SelectClass { labels } => {
                let a = val(0);
                let [n, c] = a.dims2()?;
                if labels.len() != n {
                    return Err(Error::invalid(format!(
                        "select_class: {} labels for {} rows",
                        labels.len(),
                        n
                    )));
                }
                let mut data = Vec::with_capacity(n);
                for (r, &y) in labels.iter().enumerate() {
                    if y >= c {
                        return Err(Error::invalid(format!("select_class: label {y} out of range for {c} classes")));
                    }
                    data.push(a.data()[r * c + y]);
                }
                Tensor::from_vec(vec![n], data)
            }
            OpKind::SliceCols { start, len } => {
                let a = val(0);
                let [n, c] = a.dims2()?;
                if *len == 0 || start + len > c {
                    return Err(Error::invalid(format!(
                        "slice_cols: window {}..{} out of range for {} columns",
                        start,
                        start + len,
                        c
                    )));
                }
                let mut data = Vec::with_capacity(n * len);
                for r in 0..n {
                    data.extend_from_slice(&a.data()[r * c + start..r * c + start + len]);
                }
                Tensor::from_vec(vec![n, *len], data)
            }
        }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Matmul, &[a, b])
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Add, &[a, b])
    }

    pub fn bias_add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::BiasAdd, &[a, b])
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Mul, &[a, b])
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Relu, &[a])
    }

    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Softmax, &[a])
    }

    pub fn log_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::LogSoftmax, &[a])
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Log, &[a])
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        self.op_forward(OpKind::Mean, &[a])
    }

    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> Result<TensorId> {
        self.op_forward(OpKind::Clamp { lo, hi }, &[a])
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> Result<TensorId> {
        self.op_forward(OpKind::Scale { factor }, &[a])
    }

    pub fn select_class(&mut self, a: TensorId, labels: &[usize]) -> Result<TensorId> {
        self.op_forward(OpKind::SelectClass { labels: labels.to_vec() }, &[a])
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        self.op_forward(OpKind::SliceCols { start, len }, &[a])
    }

    /// Reverse sweep from `root`, which must be a scalar on this tape.
    ///
    /// Gradients accumulate additively over every use of a node, so a value
    /// consumed twice receives the sum of both paths. Leaves whose tensors
    /// were registered with `requires_grad` end up with `grad` populated;
    /// constant subgraphs are skipped entirely. A constant root is a no-op.
    /// Each call resets previously stored gradients first.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if root.0 >= self.nodes.len() {
            return Err(Error::invalid("backward: root is not on this tape"));
        }
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::invalid(format!(
                "backward: root must be a scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[root.0].needs_grad {
            return Ok(());
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(op) = self.nodes[i].op.clone() {
                self.propagate(&op, i, &g, &mut grads);
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    /// Adds `op`'s input gradients, given output gradient `g` at node `i`.
    fn propagate(&self, op: &OpKind, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let inputs = self.nodes[i].inputs.clone();
        let needs = |slot: usize| self.nodes[inputs[slot]].needs_grad;
        let mut acc = |slot: usize, contribution: Vec<f64>| {
            let idx = inputs[slot];
            match &mut grads[idx] {
                Some(buf) => {
                    for (b, c) in buf.iter_mut().zip(&contribution) {
                        *b += c;
                    }
                }
                slot_ref @ None => *slot_ref = Some(contribution),
            }
        };

        match op {
            OpKind::Matmul => {
                let a = self.nodes[inputs[0]].value.data();
                let b = self.nodes[inputs[1]].value.data();
                let [m, k] = self.nodes[inputs[0]].value.dims2().expect("validated at record time");
                let n = self.nodes[inputs[1]].value.shape()[1];
                if needs(0) {
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * b[p * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    acc(0, da);
                }
                if needs(1) {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = a[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += a_ip * g[i * n + j];
                            }
                        }
                    }
                    acc(1, db);
                }
            }
            OpKind::Add => {
                if needs(0) {
                    acc(0, g.to_vec());
                }
                if needs(1) {
                    acc(1, g.to_vec());
                }
            }
            OpKind::BiasAdd => {
                let [m, n] = self.nodes[inputs[0]].value.dims2().expect("validated at record time");
                if needs(0) {
                    acc(0, g.to_vec());
                }
                if needs(1) {
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                    acc(1, db);
                }
            }
            OpKind::Mul => {
                let a = self.nodes[inputs[0]].value.data();
                let b = self.nodes[inputs[1]].value.data();
                if needs(0) {
                    acc(0, g.iter().zip(b).map(|(gv, bv)| gv * bv).collect());
                }
                if needs(1) {
                    acc(1, g.iter().zip(a).map(|(gv, av)| gv * av).collect());
                }
            }
            OpKind::Relu => {
                let x = self.nodes[inputs[0]].value.data();
                acc(0, g.iter().zip(x).map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 }).collect());
            }
            OpKind::Softmax => {
                let y = self.nodes[i].value.data();
                let [rows, cols] = row_view(&self.nodes[i].value).expect("validated at record time");
                let mut dx = vec![0.0; y.len()];
                for r in 0..rows {
                    let (ys, gs) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    let dot: f64 = ys.iter().zip(gs).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..cols {
                        dx[r * cols + j] = ys[j] * (gs[j] - dot);
                    }
                }
                acc(0, dx);
            }
            OpKind::LogSoftmax => {
                let x = &self.nodes[inputs[0]].value;
                let [rows, cols] = row_view(x).expect("validated at record time");
                let p = kernels::softmax_rows(rows, cols, x.data());
                let mut dx = vec![0.0; x.numel()];
                for r in 0..rows {
                    let g_sum: f64 = g[r * cols..(r + 1) * cols].iter().sum();
                    for j in 0..cols {
                        dx[r * cols + j] = g[r * cols + j] - p[r * cols + j] * g_sum;
                    }
                }
                acc(0, dx);
            }
            OpKind::Log => {
                let x = self.nodes[inputs[0]].value.data();
                acc(0, g.iter().zip(x).map(|(gv, xv)| gv / xv).collect());
            }
            OpKind::Sum => {
                let n = self.nodes[inputs[0]].value.numel();
                acc(0, vec![g[0]; n]);
            }
            OpKind::Mean => {
                let n = self.nodes[inputs[0]].value.numel();
                acc(0, vec![g[0] / n as f64; n]);
            }
            OpKind::Clamp { lo, hi } => {
                let x = self.nodes[inputs[0]].value.data();
                acc(
                    0,
                    g.iter()
                        .zip(x)
                        .map(|(gv, &xv)| if xv >= *lo && xv <= *hi { *gv } else { 0.0 })
                        .collect(),
                );
            }
            OpKind::Scale { factor } => {
                acc(0, g.iter().map(|gv| gv * factor).collect());
            }
            OpKind::SelectClass { labels } => {
                let [_, c] = self.nodes[inputs[0]].value.dims2().expect("validated at record time");
                let mut dx = vec![0.0; self.nodes[inputs[0]].value.numel()];
                for (r, &y) in labels.iter().enumerate() {
                    dx[r * c + y] += g[r];
                }
                acc(0, dx);
            }
            OpKind::SliceCols { start, len } => {
                let [n, c] = self.nodes[inputs[0]].value.dims2().expect("validated at record time");
                let mut dx = vec![0.0; n * c];
                for r in 0..n {
                    for j in 0..*len {
                        dx[r * c + start + j] += g[r * len + j];
                    }
                }
                acc(0, dx);
            }
        }
    }

    /// Gradient of scalar `loss` with respect to leaf `x`.
    ///
    /// Runs backward internally; parameters registered as constants are
    /// untouched by construction, which is what attack loops rely on.
    pub fn input_gradient(&mut self, loss: TensorId, x: TensorId) -> Result<Tensor> {
        if x.0 >= self.nodes.len() {
            return Err(Error::invalid("input_gradient: x is not on this tape"));
        }
        if !self.nodes[x.0].value.requires_grad() {
            return Err(Error::invalid("input_gradient: x was not registered with requires_grad"));
        }
        self.backward(loss)?;
        self.grad_tensor(x)
            .ok_or_else(|| Error::invalid("input_gradient: x is not connected to the loss"))
    }
}

/// Interprets a 1-d tensor as a single row, a 2-d tensor as stacked rows.
fn row_view(t: &Tensor) -> Result<[usize; 2]> {
    match *t.shape() {
        [k] => Ok([1, k]),
        [n, c] => Ok([n, c]),
        _ => Err(Error::invalid(format!("row-wise op expects 1-d or 2-d input, got {:?}", t.shape()))),
    }
}
