use super::tensor::{matmul, matmul_nt, matmul_tn};
use super::{shape_err, Gradients, NumError, ParamId, ParamSet, Result, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Deliberate errors in backward rules, used to check that the gradient
/// checker notices them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Uses `1 − y` instead of `1 − y²` as the tanh derivative.
    TanhBackward,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols { src: Var, start: usize },
    Sigmoid(Var),
    Tanh(Var),
    Gather { table: Var, indices: Vec<usize> },
    MaxOverTime { steps: Vec<Var>, argmax: Vec<usize> },
    SoftmaxXent { logits: Var, targets: Vec<usize>, probs: Tensor<T> },
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    /// `None` for parameter leaves, whose value lives in the parameter set.
    value: Option<Tensor<T>>,
}

/// Records primitive operations for one forward pass.
///
/// The tape borrows the parameter set read-only; gradients come back from
/// [`Tape::backward`] and are added to the parameters with
/// [`ParamSet::accumulate`].
pub struct Tape<'p, T: Scalar> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
    fault: Option<Fault>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    /// Argmax step index per output coordinate of a `max_over_time` node.
    pub fn argmax(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::MaxOverTime { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Class probabilities computed by a `softmax_cross_entropy` node.
    pub fn probabilities(&self, v: Var) -> Option<&Tensor<T>> {
        match &self.nodes[v.0].op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, name: &'static str) -> Result<Var> {
        value.check_finite(name)?;
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(Op::Leaf, value, "constant")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if !t.is_matrix() {
            return Err(shape_err(op, format!("expected a matrix, got {:?}", t.shape())));
        }
        Ok((t.rows(), t.cols()))
    }

    /// `a [m,k] · b [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Op::MatMul(a, b), Tensor::from_vec(&[m, n], out)?, "matmul")
    }

    fn zip_same(&self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    /// Adds a bias vector to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let cols = ta.cols();
        if tb.len() != cols {
            return Err(shape_err(
                "add_bias",
                format!("bias of {} values for {:?}", tb.len(), ta.shape()),
            ));
        }
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o = *o + b;
            }
        }
        self.push(Op::AddBias(a, bias), out, "add_bias")
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let rows = self.matrix_dims(first, "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat")?;
            if r != rows {
                return Err(shape_err("concat", format!("row counts {rows} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::from_vec(&[rows, total], data)?;
        self.push(Op::ConcatCols(parts.to_vec()), out, "concat")
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, src: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.matrix_dims(src, "slice")?;
        if start >= end || end > cols {
            return Err(shape_err("slice", format!("{start}..{end} of {cols} columns")));
        }
        let t = self.value(src);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::from_vec(&[rows, end - start], data)?;
        self.push(Op::SliceCols { src, start }, out, "slice")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::tanh);
        self.push(Op::Tanh(a), out, "tanh")
    }

    /// Selects rows of `table [V,d]`, giving `[indices.len(), d]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix_dims(table, "gather")?;
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(NumError::IndexOutOfRange {
                    op: "gather",
                    index: i,
                    limit: v,
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(&[indices.len(), d], data)?;
        let op = Op::Gather {
            table,
            indices: indices.to_vec(),
        };
        self.push(op, out, "gather")
    }

    /// Coordinatewise maximum over time steps, per row.
    ///
    /// `steps` are `[B,N]` matrices, one per step. Row `b` pools over its
    /// first `lengths[b]` steps only. When `reversed` is set, step `s` of row
    /// `b` holds original position `lengths[b] − 1 − s`. Ties resolve to the
    /// first maximal original position; the backward pass routes each
    /// gradient entry to exactly that step.
    pub fn max_over_time(&mut self, steps: &[Var], lengths: &[usize], reversed: bool) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| shape_err("max_over_time", "no steps"))?;
        let (rows, cols) = self.matrix_dims(first, "max_over_time")?;
        if lengths.len() != rows {
            return Err(shape_err(
                "max_over_time",
                format!("{} lengths for {rows} rows", lengths.len()),
            ));
        }
        for &s in steps {
            if self.matrix_dims(s, "max_over_time")? != (rows, cols) {
                return Err(shape_err("max_over_time", "steps differ in shape"));
            }
        }
        let mut out = Vec::with_capacity(rows * cols);
        let mut argmax = Vec::with_capacity(rows * cols);
        for (b, &len) in lengths.iter().enumerate() {
            if len == 0 || len > steps.len() {
                return Err(shape_err(
                    "max_over_time",
                    format!("length {len} with {} steps", steps.len()),
                ));
            }
            let step_of = |t: usize| if reversed { len - 1 - t } else { t };
            for k in 0..cols {
                let mut best_step = step_of(0);
                let mut best = self.value(steps[best_step]).row(b)[k];
                for t in 1..len {
                    let s = step_of(t);
                    let v = self.value(steps[s]).row(b)[k];
                    if v > best {
                        best = v;
                        best_step = s;
                    }
                }
                out.push(best);
                argmax.push(best_step);
            }
        }
        let out = Tensor::from_vec(&[rows, cols], out)?;
        let op = Op::MaxOverTime {
            steps: steps.to_vec(),
            argmax,
        };
        self.push(op, out, "max_over_time")
    }

    /// Mean softmax cross-entropy of `logits [B,C]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, classes) = self.matrix_dims(logits, "softmax_xent")?;
        if targets.len() != rows {
            return Err(shape_err(
                "softmax_xent",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        let t = self.value(logits);
        let mut probs = Vec::with_capacity(rows * classes);
        let mut total = T::zero();
        for (r, &target) in targets.iter().enumerate() {
            if target >= classes {
                return Err(NumError::IndexOutOfRange {
                    op: "softmax_xent",
                    index: target,
                    limit: classes,
                });
            }
            let row = t.row(r);
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let sum_exp = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
            let log_z = max + sum_exp.ln();
            probs.extend(row.iter().map(|&v| (v - max).exp() / sum_exp));
            total = total + (log_z - row[target]);
        }
        let loss = total / T::of(rows as f64);
        let op = Op::SoftmaxXent {
            logits,
            targets: targets.to_vec(),
            probs: Tensor::from_vec(&[rows, classes], probs)?,
        };
        self.push(op, Tensor::scalar(loss), "softmax_xent")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    /// Reverse sweep from a scalar `loss`, consuming the tape.
    pub fn backward(mut self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(NumError::NonScalarLoss(loss_shape));
        }
        self.nodes.truncate(loss.0 + 1);
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(&loss_shape, vec![T::one()])?);
        let mut out = Gradients::new(self.params.len());

        while let Some(node) = self.nodes.pop() {
            let idx = self.nodes.len();
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads, &mut out)?;
        }
        out.check_finite()?;
        Ok(out)
    }

    fn input_shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    fn propagate(
        &self,
        node: Node<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        out: &mut Gradients<T>,
    ) -> Result<()> {
        let mut acc = |v: Var, shape: &[usize], f: &mut dyn FnMut(&mut [T])| {
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
            f(slot.data_mut());
        };
        match node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                let shape = self.params.value(id).shape();
                out.slot(id, shape).add_assign(g);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let da = matmul_nt(g.data(), tb.data(), m, n, k);
                let db = matmul_tn(ta.data(), g.data(), m, k, n);
                acc(a, ta.shape(), &mut |s| add_into(s, &da));
                acc(b, tb.shape(), &mut |s| add_into(s, &db));
            }
            Op::Add(a, b) => {
                let shape = self.input_shape(a);
                acc(a, &shape, &mut |s| add_into(s, g.data()));
                acc(b, &shape, &mut |s| add_into(s, g.data()));
            }
            Op::AddBias(a, bias) => {
                let shape = self.input_shape(a);
                acc(a, &shape, &mut |s| add_into(s, g.data()));
                let bshape = self.input_shape(bias);
                let cols = g.cols();
                acc(bias, &bshape, &mut |s| {
                    for row in g.data().chunks(cols) {
                        add_into(s, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let da: Vec<T> = g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
                let db: Vec<T> = g.data().iter().zip(ta.data()).map(|(&x, &y)| x * y).collect();
                acc(a, ta.shape(), &mut |s| add_into(s, &da));
                acc(b, tb.shape(), &mut |s| add_into(s, &db));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let shape = self.input_shape(p);
                    let width = shape[1];
                    acc(p, &shape, &mut |s| {
                        for r in 0..rows {
                            let src = &g.data()[r * total + offset..r * total + offset + width];
                            add_into(&mut s[r * width..(r + 1) * width], src);
                        }
                    });
                    offset += width;
                }
            }
            Op::SliceCols { src, start } => {
                let shape = self.input_shape(src);
                let (rows, cols, width) = (shape[0], shape[1], g.cols());
                acc(src, &shape, &mut |s| {
                    for r in 0..rows {
                        add_into(&mut s[r * cols + start..r * cols + start + width], g.row(r));
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.as_ref().expect("sigmoid output");
                let shape = self.input_shape(a);
                acc(a, &shape, &mut |s| {
                    for ((d, &gv), &yv) in s.iter_mut().zip(g.data()).zip(y.data()) {
                        *d = *d + gv * yv * (T::one() - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.as_ref().expect("tanh output");
                let shape = self.input_shape(a);
                let faulty = self.fault == Some(Fault::TanhBackward);
                acc(a, &shape, &mut |s| {
                    for ((d, &gv), &yv) in s.iter_mut().zip(g.data()).zip(y.data()) {
                        let deriv = if faulty { T::one() - yv } else { T::one() - yv * yv };
                        *d = *d + gv * deriv;
                    }
                });
            }
            Op::Gather { table, indices } => {
                let shape = self.input_shape(table);
                let d = shape[1];
                acc(table, &shape, &mut |s| {
                    for (r, &i) in indices.iter().enumerate() {
                        add_into(&mut s[i * d..(i + 1) * d], g.row(r));
                    }
                });
            }
            Op::MaxOverTime { steps, argmax } => {
                let cols = g.cols();
                for (pos, (&step, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                    let shape = self.input_shape(steps[step]);
                    acc(steps[step], &shape, &mut |s| s[pos] = s[pos] + gv);
                }
                debug_assert_eq!(argmax.len(), g.rows() * cols);
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let shape = self.input_shape(logits);
                let classes = shape[1];
                let scale = g.data()[0] / T::of(targets.len() as f64);
                acc(logits, &shape, &mut |s| {
                    for (r, &target) in targets.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == target { T::one() } else { T::zero() };
                            let i = r * classes + c;
                            s[i] = s[i] + scale * (probs.data()[i] - onehot);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let shape = self.input_shape(a);
                let gv = g.data()[0];
                acc(a, &shape, &mut |s| {
                    for d in s.iter_mut() {
                        *d = *d + gv;
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
