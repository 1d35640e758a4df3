//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Values live on
//! the tape and are addressed through lightweight [`Var`] handles; inputs
//! always precede the node that consumes them, so the backward sweep is a
//! single reverse walk over the node list.
//!
//! ```
//! use hypernet::autodiff::Tape;
//! use hypernet::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[[1.0, -2.0]]).unwrap());
//! let loss = tape.sum(w);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).data(), &[1.0, 1.0]);
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddScaled { a: Var, b: Var, ca: f64, cb: f64 },
    AddRow { x: Var, row: Var },
    Relu(Var),
    /// Multiplicative mask: 0 for dropped entries, `1/(1-p)` for survivors.
    Dropout { x: Var, mask: Vec<f64> },
    Mean(Vec<Var>),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Matrix,
        targets: Vec<(usize, usize)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backpropagated: bool,
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of its shape when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Matrix::zeros(r, c)
        })
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        let (r, c) = self.shapes[v.0];
        self.grads[v.0].take().unwrap_or_else(|| Matrix::zeros(r, c))
    }
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

    /// Drops every recorded node so the tape can be reused.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.backpropagated = false;
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `ca * a + cb * b`.
    pub fn add_scaled(&mut self, a: Var, b: Var, ca: f64, cb: f64) -> Result<Var> {
        let value = self.value(a).add_scaled(self.value(b), ca, cb)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::AddScaled { a, b, ca, cb }, rg))
    }

    /// Adds a `1 x cols` row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(row) != (1, cols) {
            let (r, c) = self.shape(row);
            return Err(Error::shape(
                "add_row",
                format!("{r}x{c} row vector for a {rows}x{cols} matrix"),
            ));
        }
        let mut value = self.value(x).clone();
        let b = self.value(row).data().to_vec();
        for r in 0..rows {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let rg = self.any_grad(&[x, row]);
        Ok(self.push(value, Op::AddRow { x, row }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// Inverted dropout. Identity (and no new node) when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Matrix::from_vec(src.rows(), src.cols(), data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Elementwise arithmetic mean of equally shaped inputs.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Validation("mean of an empty list".into()))?;
        let shape = self.shape(first);
        let mut acc = Matrix::zeros(shape.0, shape.1);
        for &v in inputs {
            if self.shape(v) != shape {
                return Err(Error::Validation(format!(
                    "mean over mismatched shapes {:?} and {:?}",
                    shape,
                    self.shape(v)
                )));
            }
            acc.axpy(1.0, self.value(v))?;
        }
        let value = acc.scale(1.0 / inputs.len() as f64);
        let rg = self.any_grad(inputs);
        Ok(self.push(value, Op::Mean(inputs.to_vec()), rg))
    }

    /// Sum of all entries as a 1x1 value.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.any_grad(&[x]);
        self.push(Matrix::filled(1, 1, s), Op::Sum(x), rg)
    }

    /// Mean negative log-likelihood of `labels` under a row-wise softmax of
    /// `logits`, over rows where `mask` is set.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let z = self.value(logits);
        let (n, c) = z.shape();
        if labels.len() != n || mask.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!(
                    "{n} rows but {} labels and {} mask entries",
                    labels.len(),
                    mask.len()
                ),
            ));
        }
        let targets: Vec<(usize, usize)> = (0..n)
            .filter(|&r| mask[r])
            .map(|r| (r, labels[r]))
            .collect();
        if targets.is_empty() {
            return Err(Error::Parameter("loss mask selects no rows".into()));
        }
        if let Some(&(r, l)) = targets.iter().find(|&&(_, l)| l >= c) {
            return Err(Error::Validation(format!(
                "label {l} at row {r} is out of range for {c} classes"
            )));
        }

        let mut probs = Matrix::zeros(n, c);
        let mut total = 0.0;
        for &(r, label) in &targets {
            let row = z.row(r);
            let (arg, max) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                });
            // sum of exp(z_j - max) over j != argmax; the argmax term is exactly 1
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != arg)
                .map(|(_, &v)| (v - max).exp())
                .sum();
            total += (max - row[label]) + rest.ln_1p();
            let denom = 1.0 + rest;
            for (j, p) in probs.row_mut(r).iter_mut().enumerate() {
                *p = (row[j] - max).exp() / denom;
            }
        }
        let loss = total / targets.len() as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
            },
            rg,
        ))
    }

    /// Propagates d(loss)/d(node) back to every node that requires a gradient.
    ///
    /// A tape can be differentiated once; call [`Tape::clear`] before reuse.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {r}x{c}"),
            ));
        }
        if self.backpropagated {
            return Err(Error::AlreadyBackpropagated);
        }
        self.backpropagated = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(&node.op, &g, &mut grads);
            grads[id] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        // Only gradients of tracked nodes are meaningful.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, op: &Op, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let tracked = |v: &Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if tracked(a) {
                    let acc = slot(grads, *a, av.shape());
                    gemm(1.0, g, false, bv, true, 1.0, acc);
                }
                if tracked(b) {
                    let acc = slot(grads, *b, bv.shape());
                    gemm(1.0, av, true, g, false, 1.0, acc);
                }
            }
            Op::AddScaled { a, b, ca, cb } => {
                for (v, c) in [(a, *ca), (b, *cb)] {
                    if tracked(v) {
                        accumulate(grads, *v, g, c);
                    }
                }
            }
            Op::AddRow { x, row } => {
                if tracked(x) {
                    accumulate(grads, *x, g, 1.0);
                }
                if tracked(row) {
                    let acc = slot(grads, *row, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (a, v) in acc.data_mut().iter_mut().zip(g.row(r)) {
                            *a += v;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                if tracked(x) {
                    let input = self.value(*x).data();
                    let acc = slot(grads, *x, g.shape());
                    for ((a, gv), xv) in acc.data_mut().iter_mut().zip(g.data()).zip(input) {
                        if *xv > 0.0 {
                            *a += gv;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if tracked(x) {
                    let acc = slot(grads, *x, g.shape());
                    for ((a, gv), m) in acc.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *a += gv * m;
                    }
                }
            }
            Op::Mean(inputs) => {
                let share = 1.0 / inputs.len() as f64;
                for v in inputs {
                    if tracked(v) {
                        accumulate(grads, *v, g, share);
                    }
                }
            }
            Op::Sum(x) => {
                if tracked(x) {
                    let gv = g.get(0, 0);
                    let acc = slot(grads, *x, self.shape(*x));
                    for a in acc.data_mut() {
                        *a += gv;
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
            } => {
                if tracked(logits) {
                    let scale = g.get(0, 0) / targets.len() as f64;
                    let acc = slot(grads, *logits, probs.shape());
                    for &(r, label) in targets {
                        let p = probs.row(r);
                        for (j, a) in acc.row_mut(r).iter_mut().enumerate() {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            *a += scale * (p[j] - onehot);
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: &Matrix, factor: f64) {
    let acc = slot(grads, v, g.shape());
    for (a, gv) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += factor * gv;
    }
}
