//! Reverse-mode differentiation over a tape of dense matrix operations.
//!
//! Backward rules are expressed with the same tape operations as the forward
//! pass. With `create_graph` the gradient nodes stay differentiable, which is
//! what the gradient penalty needs: it differentiates a norm of an input
//! gradient with respect to the network weights.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `m x n` plus a `1 x n` row added to every row.
    AddBias(Var, Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    Sum(Var),
    Fill(Var, usize, usize),
    Scale(Var, f64),
    Offset(Var, f64),
    LeakyRelu(Var, f64),
    Powi(Var, i32),
    Sqrt(Var),
    /// Elementwise reciprocal with `1/0 := 0`.
    Recip(Var),
    /// Row-wise softmax.
    Softmax(Var),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddBias(a, b) => [Some(a), Some(b)],
            Transpose(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastRows(a, _)
            | BroadcastCols(a, _)
            | Sum(a)
            | Fill(a, _, _)
            | Scale(a, _)
            | Offset(a, _)
            | LeakyRelu(a, _)
            | Powi(a, _)
            | Sqrt(a)
            | Recip(a)
            | Softmax(a) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    /// Recorded by a backward pass run without `create_graph`.
    detached: bool,
}

/// Gradients produced by [`Tape::backward`] or [`Tape::grad`], keyed by leaf.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Var>>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<Var> {
        self.grads.get(leaf.0).copied().flatten()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    recording_detached: bool,
}

pub(crate) fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            detached: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    fn compute<'a>(op: &Op, val: impl Fn(Var) -> &'a Matrix) -> Result<Matrix> {
        use Op::*;
        Ok(match *op {
            Leaf => unreachable!("leaves carry their own value"),
            MatMul(a, b) => val(a).matmul(val(b))?,
            Transpose(a) => val(a).transpose(),
            Add(a, b) => val(a).zip_map(val(b), "add", |x, y| x + y)?,
            Sub(a, b) => val(a).zip_map(val(b), "sub", |x, y| x - y)?,
            Mul(a, b) => val(a).zip_map(val(b), "mul", |x, y| x * y)?,
            AddBias(a, b) => {
                let (x, bias) = (val(a), val(b));
                if bias.rows() != 1 || bias.cols() != x.cols() {
                    return Err(Error::Shape {
                        op: "add_bias",
                        lhs: x.shape(),
                        rhs: bias.shape(),
                    });
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, b) in out.row_mut(i).iter_mut().zip(bias.as_slice()) {
                        *o += b;
                    }
                }
                out
            }
            SumRows(a) => {
                let x = val(a);
                let mut out = Matrix::zeros(1, x.cols());
                for r in x.row_iter() {
                    for (o, v) in out.as_mut_slice().iter_mut().zip(r) {
                        *o += v;
                    }
                }
                out
            }
            SumCols(a) => {
                let x = val(a);
                let sums = x.row_iter().map(|r| r.iter().sum()).collect();
                Matrix::from_vec(x.rows(), 1, sums)?
            }
            BroadcastRows(a, m) => {
                let x = val(a);
                if x.rows() != 1 {
                    return Err(Error::Shape {
                        op: "broadcast_rows",
                        lhs: x.shape(),
                        rhs: (m, x.cols()),
                    });
                }
                let data = x.as_slice().repeat(m);
                Matrix::from_vec(m, x.cols(), data)?
            }
            BroadcastCols(a, n) => {
                let x = val(a);
                if x.cols() != 1 {
                    return Err(Error::Shape {
                        op: "broadcast_cols",
                        lhs: x.shape(),
                        rhs: (x.rows(), n),
                    });
                }
                let data = x
                    .as_slice()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v, n))
                    .collect();
                Matrix::from_vec(x.rows(), n, data)?
            }
            Sum(a) => Matrix::scalar(val(a).sum()),
            Fill(a, r, c) => {
                let x = val(a);
                if x.shape() != (1, 1) {
                    return Err(Error::Shape {
                        op: "fill",
                        lhs: x.shape(),
                        rhs: (1, 1),
                    });
                }
                Matrix::filled(r, c, x.as_slice()[0])
            }
            Scale(a, c) => val(a).map(|x| x * c),
            Offset(a, c) => val(a).map(|x| x + c),
            LeakyRelu(a, alpha) => val(a).map(|x| leaky_relu(x, alpha)),
            Powi(a, n) => val(a).map(|x| x.powi(n)),
            Sqrt(a) => val(a).map(f64::sqrt),
            Recip(a) => val(a).map(|x| if x == 0.0 { 0.0 } else { 1.0 / x }),
            Softmax(a) => softmax_rows(val(a)),
        })
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = Self::compute(&op, |v| &self.nodes[v.0].value)?;
        let requires_grad = op
            .parents()
            .iter()
            .flatten()
            .any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            detached: self.recording_detached && requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_unary(&mut self, op: Op) -> Var {
        self.push(op).expect("unary op on a valid node cannot fail")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        self.push_unary(Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddBias(a, bias))
    }

    /// `m x n -> 1 x n`
    pub fn sum_rows(&mut self, a: Var) -> Var {
        self.push_unary(Op::SumRows(a))
    }

    /// `m x n -> m x 1`
    pub fn sum_cols(&mut self, a: Var) -> Var {
        self.push_unary(Op::SumCols(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        self.push(Op::BroadcastRows(a, rows))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        self.push(Op::BroadcastCols(a, cols))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push_unary(Op::Sum(a))
    }

    pub fn fill(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.push(Op::Fill(a, rows, cols))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push_unary(Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.push_unary(Op::Offset(a, c))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.push_unary(Op::LeakyRelu(a, alpha))
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        self.push_unary(Op::Powi(a, n))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.powi(a, 2)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.push_unary(Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.push_unary(Op::Recip(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        self.push_unary(Op::Softmax(a))
    }

    /// Euclidean norm of all entries, as a `1 x 1` node.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        let s = self.sum(sq);
        self.sqrt(s)
    }

    /// Euclidean norm of each row, `m x n -> m x 1`.
    pub fn l2_norm_rows(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        let s = self.sum_cols(sq);
        self.sqrt(s)
    }

    /// Gradients of a scalar `output` with respect to every leaf that requires
    /// a gradient.
    pub fn backward(&mut self, output: Var, create_graph: bool) -> Result<Gradients> {
        let needed: Vec<bool> = self.nodes[..=output.0]
            .iter()
            .map(|n| n.requires_grad)
            .collect();
        self.run_backward(output, needed, create_graph)
    }

    /// Gradients of a scalar `output` with respect to `wrt` only. Nodes that do
    /// not lie on a path to one of `wrt` are skipped.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Gradients> {
        let mut needed = vec![false; output.0 + 1];
        for w in wrt {
            if w.0 <= output.0 && self.nodes[w.0].requires_grad {
                needed[w.0] = true;
            }
        }
        for i in 0..=output.0 {
            if !needed[i] && self.nodes[i].requires_grad {
                needed[i] = self.nodes[i]
                    .op
                    .parents()
                    .iter()
                    .flatten()
                    .any(|p| needed[p.0]);
            }
        }
        let mut grads = self.run_backward(output, needed, create_graph)?;
        for (i, g) in grads.grads.iter_mut().enumerate() {
            if !wrt.contains(&Var(i)) {
                *g = None;
            }
        }
        Ok(grads)
    }

    fn run_backward(
        &mut self,
        output: Var,
        needed: Vec<bool>,
        create_graph: bool,
    ) -> Result<Gradients> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(Error::NonScalarOutput(shape));
        }
        let prev = self.recording_detached;
        self.recording_detached = !create_graph;
        let result = self.backward_inner(output, &needed);
        self.recording_detached = prev;
        let mut grads = result?;
        for (i, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[i].op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_inner(&mut self, output: Var, needed: &[bool]) -> Result<Vec<Option<Var>>> {
        let mut grads: Vec<Option<Var>> = vec![None; output.0 + 1];
        grads[output.0] = Some(self.constant(Matrix::scalar(1.0)));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i] else { continue };
            if !needed[i] {
                continue;
            }
            if self.nodes[i].detached {
                return Err(Error::DetachedGraph(i));
            }
            let op = self.nodes[i].op.clone();
            let contributions = self.local_grads(Var(i), &op, g, needed)?;
            for (parent, pg) in contributions {
                grads[parent.0] = Some(match grads[parent.0] {
                    Some(acc) => self.add(acc, pg)?,
                    None => pg,
                });
            }
        }
        Ok(grads)
    }

    fn local_grads(
        &mut self,
        node: Var,
        op: &Op,
        g: Var,
        needed: &[bool],
    ) -> Result<Vec<(Var, Var)>> {
        use Op::*;
        let want = |v: Var| needed[v.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Leaf => {}
            MatMul(a, b) => {
                if want(a) {
                    let bt = self.transpose(b);
                    out.push((a, self.matmul(g, bt)?));
                }
                if want(b) {
                    let at = self.transpose(a);
                    out.push((b, self.matmul(at, g)?));
                }
            }
            Transpose(a) => out.push((a, self.transpose(g))),
            Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.scale(g, -1.0)));
                }
            }
            Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            AddBias(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.sum_rows(g)));
                }
            }
            SumRows(a) => {
                let m = self.shape(a).0;
                out.push((a, self.broadcast_rows(g, m)?));
            }
            SumCols(a) => {
                let n = self.shape(a).1;
                out.push((a, self.broadcast_cols(g, n)?));
            }
            BroadcastRows(a, _) => out.push((a, self.sum_rows(g))),
            BroadcastCols(a, _) => out.push((a, self.sum_cols(g))),
            Sum(a) => {
                let (r, c) = self.shape(a);
                out.push((a, self.fill(g, r, c)?));
            }
            Fill(a, _, _) => out.push((a, self.sum(g))),
            Scale(a, c) => out.push((a, self.scale(g, c))),
            Offset(a, _) => out.push((a, g)),
            LeakyRelu(a, alpha) => {
                // slope at 0 is taken as 1
                let mask = self.value(a).map(|x| if x >= 0.0 { 1.0 } else { alpha });
                let mask = self.constant(mask);
                out.push((a, self.mul(g, mask)?));
            }
            Powi(a, n) => match n {
                0 => {}
                1 => out.push((a, g)),
                _ => {
                    let p = self.powi(a, n - 1);
                    let d = self.scale(p, n as f64);
                    out.push((a, self.mul(g, d)?));
                }
            },
            Sqrt(a) => {
                let r = self.recip(node);
                let d = self.scale(r, 0.5);
                out.push((a, self.mul(g, d)?));
            }
            Recip(a) => {
                let sq = self.square(node);
                let d = self.scale(sq, -1.0);
                out.push((a, self.mul(g, d)?));
            }
            Softmax(a) => {
                let n = self.shape(a).1;
                let gy = self.mul(g, node)?;
                let s = self.sum_cols(gy);
                let sb = self.broadcast_cols(s, n)?;
                let centered = self.sub(g, sb)?;
                out.push((a, self.mul(node, centered)?));
            }
        }
        Ok(out)
    }

    /// Recompute every node from the leaves and return the values in tape
    /// order.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => Self::compute(op, |p| &values[p.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }
}
