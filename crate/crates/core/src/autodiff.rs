//! Dense `f64` tensors and a tape-based reverse-mode differentiator.
//!
//! A [`Graph`] is a Wengert list: every operation appends a node holding its
//! value and the handles of its inputs. Because nodes are only ever appended,
//! index order is a topological order, and [`Graph::backward`] walks it in
//! reverse, visiting each node once.
//!
//! Tensors are row-major with no views or strides. Binary elementwise ops
//! accept a right-hand operand of the same shape, a `[1, C]` row vector, or a
//! `[R, 1]` column vector; nothing else broadcasts.

use crate::error::{Error, Result};

/// Lower clamp applied to the argument of [`Graph::log`].
pub const LOG_FLOOR: f64 = 1e-12;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidInput(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Builds a 2-D tensor from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Number of rows when viewed as a matrix over the last axis.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            _ => self.data.len() / self.cols().max(1),
        }
    }

    /// Size of the last axis (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.matrix_dims("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul")?;
        let (k2, n) = other.matrix_dims("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Row-wise softmax over the last axis, with max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let c = self.cols();
        let mut data = self.data.clone();
        if c == 0 {
            return self.clone();
        }
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    fn matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: vec![],
            }),
        }
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary {
        kind: BinaryKind,
        lhs: Var,
        rhs: Var,
        bcast: Broadcast,
    },
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Pow(Var, f64),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    Softmax(Var),
    L2Normalize(Var),
    ConcatRows(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for one forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        Ok(self.push_unary(a, value, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        self.push_unary(a, value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        self.push_unary(a, value, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push_unary(a, value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push_unary(a, value, Op::Exp(a))
    }

    /// Natural log with the argument clamped to at least [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(LOG_FLOOR).ln());
        self.push_unary(a, value, Op::Log(a))
    }

    pub fn powf(&mut self, a: Var, exponent: f64) -> Var {
        let value = self.value(a).map(|v| v.powf(exponent));
        self.push_unary(a, value, Op::Pow(a, exponent))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push_unary(a, Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data.iter().sum::<f64>() / t.len().max(1) as f64;
        self.push_unary(a, Tensor::scalar(m), Op::Mean(a))
    }

    /// `[R, C] -> [R, 1]`, summing each row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, _) = t.matrix_dims("sum_rows")?;
        let data: Vec<f64> = (0..r).map(|i| t.row(i).iter().sum()).collect();
        let value = Tensor {
            shape: vec![r, 1],
            data,
        };
        Ok(self.push_unary(a, value, Op::SumRows(a)))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        self.push_unary(a, value, Op::Softmax(a))
    }

    /// Scales each row (last axis) to unit Euclidean norm.
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = t.data.clone();
        if c > 0 {
            for row in data.chunks_mut(c) {
                let norm = row_norm(row);
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        let value = Tensor {
            shape: t.shape.clone(),
            data,
        };
        self.push_unary(a, value, Op::L2Normalize(a))
    }

    /// Stacks tensors along the first axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat_rows of zero tensors".into()))?;
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            let t = self.value(p);
            if t.shape.is_empty() || t.shape[1..] != tail[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(first).to_vec(),
                    rhs: t.shape.clone(),
                });
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
            rg |= self.requires_grad(p);
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        Ok(self.push(Tensor { shape, data }, Op::ConcatRows(parts.to_vec()), rg))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (lhs, rhs) = (self.value(a), self.value(b));
        let bcast = broadcast_kind(kind_name(kind), lhs, rhs)?;
        let c = lhs.cols();
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => x / y,
        };
        let data: Vec<f64> = lhs
            .data
            .iter()
            .enumerate()
            .map(|(idx, &x)| f(x, rhs.data[rhs_index(bcast, idx, c)]))
            .collect();
        let value = Tensor {
            shape: lhs.shape.clone(),
            data,
        };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(
            value,
            Op::Binary {
                kind,
                lhs: a,
                rhs: b,
                bcast,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(&root_value.shape, 1.0));

        for i in (0..=root.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &upstream, &mut grads)?;
            grads[i] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let g = up.matmul(&self.value(*b).transpose()?)?;
                    accumulate(grads, *a, g);
                }
                if self.requires_grad(*b) {
                    let g = self.value(*a).transpose()?.matmul(up)?;
                    accumulate(grads, *b, g);
                }
            }
            Op::Transpose(a) => accumulate(grads, *a, up.transpose()?),
            Op::Binary {
                kind,
                lhs,
                rhs,
                bcast,
            } => {
                let l = self.value(*lhs);
                let r = self.value(*rhs);
                let c = l.cols();
                let rv = |idx: usize| r.data[rhs_index(*bcast, idx, c)];
                if self.requires_grad(*lhs) {
                    let data = up
                        .data
                        .iter()
                        .enumerate()
                        .map(|(idx, &g)| match kind {
                            BinaryKind::Add | BinaryKind::Sub => g,
                            BinaryKind::Mul => g * rv(idx),
                            BinaryKind::Div => g / rv(idx),
                        })
                        .collect();
                    accumulate(grads, *lhs, Tensor::new(l.shape.clone(), data)?);
                }
                if self.requires_grad(*rhs) {
                    let mut g = Tensor::zeros(&r.shape);
                    for (idx, &u) in up.data.iter().enumerate() {
                        let contrib = match kind {
                            BinaryKind::Add => u,
                            BinaryKind::Sub => -u,
                            BinaryKind::Mul => u * l.data[idx],
                            BinaryKind::Div => {
                                let d = rv(idx);
                                -u * l.data[idx] / (d * d)
                            }
                        };
                        g.data[rhs_index(*bcast, idx, c)] += contrib;
                    }
                    accumulate(grads, *rhs, g);
                }
            }
            Op::Scale(a, f) => accumulate(grads, *a, up.map(|g| g * f)),
            Op::AddScalar(a) => accumulate(grads, *a, up.clone()),
            Op::Relu(a) => {
                let x = self.value(*a);
                accumulate(
                    grads,
                    *a,
                    zip_map(up, x, |g, x| if x > 0.0 { g } else { 0.0 }),
                );
            }
            Op::Exp(a) => accumulate(grads, *a, zip_map(up, y, |g, y| g * y)),
            Op::Log(a) => {
                let x = self.value(*a);
                let g = zip_map(up, x, |g, x| if x > LOG_FLOOR { g / x } else { 0.0 });
                accumulate(grads, *a, g);
            }
            Op::Pow(a, p) => {
                let x = self.value(*a);
                let g = zip_map(up, x, |g, x| {
                    let d = p * x.powf(p - 1.0);
                    if d.is_finite() {
                        g * d
                    } else {
                        0.0
                    }
                });
                accumulate(grads, *a, g);
            }
            Op::Sum(a) => {
                let g = up.item();
                accumulate(grads, *a, Tensor::filled(self.shape(*a), g));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len().max(1) as f64;
                accumulate(grads, *a, Tensor::filled(self.shape(*a), up.item() / n));
            }
            Op::SumRows(a) => {
                let x = self.value(*a);
                let c = x.cols();
                let data = (0..x.len()).map(|idx| up.data[idx / c]).collect();
                accumulate(grads, *a, Tensor::new(x.shape.clone(), data)?);
            }
            Op::Softmax(a) => {
                let c = y.cols();
                let mut data = vec![0.0; y.len()];
                if c > 0 {
                    for ((out, ys), gs) in data
                        .chunks_mut(c)
                        .zip(y.data.chunks(c))
                        .zip(up.data.chunks(c))
                    {
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for ((o, &yv), &gv) in out.iter_mut().zip(ys).zip(gs) {
                            *o = yv * (gv - dot);
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(y.shape.clone(), data)?);
            }
            Op::L2Normalize(a) => {
                let x = self.value(*a);
                let c = y.cols();
                let mut data = vec![0.0; y.len()];
                if c > 0 {
                    for (((out, xs), ys), gs) in data
                        .chunks_mut(c)
                        .zip(x.data.chunks(c))
                        .zip(y.data.chunks(c))
                        .zip(up.data.chunks(c))
                    {
                        let norm = row_norm(xs);
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for ((o, &yv), &gv) in out.iter_mut().zip(ys).zip(gs) {
                            *o = (gv - yv * dot) / norm;
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(y.shape.clone(), data)?);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.len();
                    if self.requires_grad(p) {
                        let g = Tensor::new(t.shape.clone(), up.data[offset..offset + n].to_vec())?;
                        accumulate(grads, p, g);
                    }
                    offset += n;
                }
            }
        }
        Ok(())
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `v`'s shape if the root does not depend on it.
    pub fn wrt(&self, graph: &Graph, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.shape(v)))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .data
            .iter_mut()
            .zip(&g.data)
            .for_each(|(e, x)| *e += x),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: b.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(NORM_FLOOR)
}

fn kind_name(kind: BinaryKind) -> &'static str {
    match kind {
        BinaryKind::Add => "add",
        BinaryKind::Sub => "sub",
        BinaryKind::Mul => "mul",
        BinaryKind::Div => "div",
    }
}

fn broadcast_kind(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Broadcast> {
    if lhs.shape == rhs.shape {
        return Ok(Broadcast::Same);
    }
    if let [r, c] = lhs.shape[..] {
        match rhs.shape[..] {
            [1, rc] | [rc] if rc == c => return Ok(Broadcast::Row),
            [rr, 1] if rr == r => return Ok(Broadcast::Col),
            _ => {}
        }
    }
    Err(Error::ShapeMismatch {
        op,
        lhs: lhs.shape.clone(),
        rhs: rhs.shape.clone(),
    })
}

fn rhs_index(bcast: Broadcast, idx: usize, cols: usize) -> usize {
    match bcast {
        Broadcast::Same => idx,
        Broadcast::Row => idx % cols,
        Broadcast::Col => idx / cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        t(
            shape,
            &(0..n)
                .map(|_| rng.random_range(-1.5..1.5))
                .collect::<Vec<_>>(),
        )
    }

    /// Central-difference oracle, independent of the backward pass.
    fn check_gradient(inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
        let root = build(&mut g, &vars);
        let grads = g.backward(root).unwrap();
        let h = 1e-5;
        let eval = |inputs: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
            let r = build(&mut g, &vars);
            g.value(r).item()
        };
        for (k, x) in inputs.iter().enumerate() {
            let analytic = grads.wrt(&g, vars[k]);
            for idx in 0..x.len() {
                let mut plus = inputs.to_vec();
                plus[k].data[idx] += h;
                let mut minus = inputs.to_vec();
                minus[k].data[idx] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data[idx];
                if a.abs() > 1e-8 {
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                    assert!(
                        rel < 1e-4,
                        "input {k}[{idx}]: analytic {a} numeric {numeric}"
                    );
                } else {
                    assert!(
                        (a - numeric).abs() < 1e-7,
                        "input {k}[{idx}]: {a} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn log_inverts_exp() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(1.25));
        let e = g.exp(x);
        let l = g.log(e);
        assert!((g.value(l).item() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[3, 5]);
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(3));
        let av = g.constant(a.clone());
        let p = g.matmul(i, av).unwrap();
        assert_eq!(g.value(p), &a);
    }

    #[test]
    fn quadratic_and_mean_gradients() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(&g, x).data(), &[2.0, 4.0, 6.0]);

        let mut g = Graph::new();
        let x = g.param(t(&[4], &[1.0, -2.0, 3.0, 0.5]));
        let m = g.mean(x);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.wrt(&g, x).data(), &[0.25; 4]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[2, 3]));
        let b = g.param(Tensor::zeros(&[2, 2]));
        match g.add(a, b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
        assert!(g.matmul(a, a).is_err());
    }

    #[test]
    fn disconnected_param_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let unused = g.param(t(&[3], &[4.0, 5.0, 6.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(&g, unused).data(), &[0.0; 3]);
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let row = random(&mut rng, &[1, 4]);
        let col = random(&mut rng, &[3, 1]).map(|v| v.abs() + 0.5);
        let pos = a.map(|v| v.abs() + 0.2);

        check_gradient(&[a.clone(), b.clone()], |g, v| {
            let p = g.matmul(v[0], v[1]).unwrap();
            let sq = g.mul(p, p).unwrap();
            g.sum(sq)
        });
        check_gradient(&[a.clone(), row.clone()], |g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let e = g.exp(s);
            g.mean(e)
        });
        check_gradient(&[a.clone(), col.clone()], |g, v| {
            let d = g.div(v[0], v[1]).unwrap();
            let m = g.mul(d, v[0]).unwrap();
            g.sum(m)
        });
        check_gradient(&[a.clone(), row.clone()], |g, v| {
            let d = g.sub(v[0], v[1]).unwrap();
            let m = g.mul(d, d).unwrap();
            g.sum(m)
        });
        check_gradient(std::slice::from_ref(&pos), |g, v| {
            let l = g.log(v[0]);
            let p = g.powf(v[0], 0.5);
            let m = g.mul(l, p).unwrap();
            g.sum(m)
        });
        check_gradient(std::slice::from_ref(&a), |g, v| {
            let s = g.softmax(v[0]);
            let w = g.constant(t(&[3, 4], &(0..12).map(|i| i as f64).collect::<Vec<_>>()));
            let m = g.mul(s, w).unwrap();
            g.sum(m)
        });
        check_gradient(std::slice::from_ref(&a), |g, v| {
            let z = g.l2_normalize(v[0]);
            let w = g.constant(t(
                &[3, 4],
                &(0..12).map(|i| (i as f64).sin()).collect::<Vec<_>>(),
            ));
            let m = g.mul(z, w).unwrap();
            g.sum(m)
        });
        check_gradient(&[a.clone(), random(&mut rng, &[2, 4])], |g, v| {
            let c = g.concat_rows(&[v[0], v[1]]).unwrap();
            let tr = g.transpose(c).unwrap();
            let r = g.sum_rows(tr).unwrap();
            let sq = g.mul(r, r).unwrap();
            let sc = g.scale(sq, 0.3);
            let sh = g.add_scalar(sc, 2.0);
            g.sum(sh)
        });
        check_gradient(&[a.map(|v| v + 0.05)], |g, v| {
            let r = g.relu(v[0]);
            let sq = g.mul(r, r).unwrap();
            g.sum(sq)
        });
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[20, 7]).map(|v| v * 30.0);
        let s = x.softmax_rows();
        for i in 0..20 {
            let row = s.row(i);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_visits_shared_subexpressions_once() {
        // y = (x + x) * x  => dy/dx = 4x
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.5));
        let s = g.add(x, x).unwrap();
        let y = g.mul(s, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert!((grads.wrt(&g, x).item() - 6.0).abs() < 1e-15);
    }
}
