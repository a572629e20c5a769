//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records operations eagerly: every call computes its value
//! immediately and remembers how it was produced. [`Tape::backward`] then walks
//! the record in reverse and accumulates `∂loss/∂node` for every node that
//! depends on a trainable leaf.
//!
//! Elementwise binary operations broadcast a `1×m`, `n×1` or `1×1` operand
//! against a larger one. Subgradient conventions at kinks: `relu'(0) = 0`,
//! `min` routes the gradient to its first argument on ties, and `clip` passes
//! the gradient through on the closed interval `[lo, hi]`.

use super::matrix::{self, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x · w + b`, `w: in×out`, `b: 1×out`
    Affine(Var, Var, Var),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Min(Var, Var),
    Clip(Var, f64, f64),
    Mean(Var),
    Sum(Var),
    /// Per-row sum, `n×m → n×1`.
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar loss with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` when `var` does not influence the loss through a trainable leaf.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of `shape` if it has none.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Matrix {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let value = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            assert_eq!(
                xv.cols(),
                wv.rows(),
                "affine: input width {} vs weight rows {}",
                xv.cols(),
                wv.rows()
            );
            assert_eq!(bv.shape(), (1, wv.cols()), "affine: bias shape");
            matrix::affine(xv, wv.as_slice(), bv.as_slice())
        };
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(value, Op::Affine(x, w, b), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matrix::matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let value = matrix::zip_broadcast(self.value(a), self.value(b), f);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties select `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Min(a, b), |x, y| if x <= y { x } else { y })
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let ng = self.needs(a);
        self.push(value, op, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clip interval is empty");
        self.unary(a, Op::Clip(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Mean of all entries, as a `1×1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Matrix::scalar(v.sum() / v.as_slice().len() as f64);
        let ng = self.needs(a);
        self.push(value, Op::Mean(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let sums: Vec<f64> = (0..v.rows()).map(|i| v.row(i).iter().sum()).collect();
        let value = Matrix::column_vector(&sums);
        let ng = self.needs(a);
        self.push(value, Op::SumCols(a), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hconcat(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).columns(start, end);
        let ng = self.needs(a);
        self.push(value, Op::SliceCols(a, start, end), ng)
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut send = |v: Var, contribution: Matrix| {
            if !self.needs(v) {
                return;
            }
            let contribution = matrix::reduce_to(contribution, self.value(v).shape());
            match &mut grads[v.0] {
                Some(acc) => {
                    for (a, c) in acc.as_mut_slice().iter_mut().zip(contribution.as_slice()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contribution),
            }
        };
        let elementwise = |x: &Matrix, f: &dyn Fn(f64, f64) -> f64| matrix::zip_broadcast(g, x, f);

        match *op {
            Op::Leaf => {}
            Op::Affine(x, w, b) => {
                if self.needs(x) {
                    send(x, matrix::matmul_transpose_b(g, self.value(w)));
                }
                if self.needs(w) {
                    send(w, matrix::matmul_transpose_a(self.value(x), g));
                }
                if self.needs(b) {
                    send(b, g.clone());
                }
            }
            Op::MatMul(a, b) => {
                if self.needs(a) {
                    send(a, matrix::matmul_transpose_b(g, self.value(b)));
                }
                if self.needs(b) {
                    send(b, matrix::matmul_transpose_a(self.value(a), g));
                }
            }
            Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    send(a, elementwise(self.value(b), &|gi, y| gi * y));
                }
                if self.needs(b) {
                    send(b, elementwise(self.value(a), &|gi, x| gi * x));
                }
            }
            Op::Scale(a, c) => send(a, g.map(|x| x * c)),
            Op::AddScalar(a) => send(a, g.clone()),
            Op::Tanh(a) => send(a, elementwise(out, &|gi, y| gi * (1.0 - y * y))),
            Op::Relu(a) => send(a, elementwise(self.value(a), &|gi, x| if x > 0.0 { gi } else { 0.0 })),
            Op::Exp(a) => send(a, elementwise(out, &|gi, y| gi * y)),
            Op::Log(a) => send(a, elementwise(self.value(a), &|gi, x| gi / x)),
            Op::Square(a) => send(a, elementwise(self.value(a), &|gi, x| 2.0 * gi * x)),
            Op::Min(a, b) => {
                let first = matrix::zip_broadcast(self.value(a), self.value(b), |x, y| if x <= y { 1.0 } else { 0.0 });
                if self.needs(a) {
                    send(a, matrix::zip_broadcast(g, &first, |gi, m| gi * m));
                }
                if self.needs(b) {
                    send(b, matrix::zip_broadcast(g, &first, |gi, m| gi * (1.0 - m)));
                }
            }
            Op::Clip(a, lo, hi) => send(
                a,
                elementwise(self.value(a), &|gi, x| if (lo..=hi).contains(&x) { gi } else { 0.0 }),
            ),
            Op::Mean(a) => {
                let v = self.value(a);
                let n = v.as_slice().len() as f64;
                send(a, Matrix::filled(v.rows(), v.cols(), g.item() / n));
            }
            Op::Sum(a) => {
                let v = self.value(a);
                send(a, Matrix::filled(v.rows(), v.cols(), g.item()));
            }
            Op::SumCols(a) => {
                let cols = self.value(a).cols();
                send(a, matrix::zip_broadcast(g, &Matrix::zeros(1, cols), |gi, _| gi));
            }
            Op::ConcatCols(a, b) => {
                let split = self.value(a).cols();
                send(a, g.columns(0, split));
                send(b, g.columns(split, g.cols()));
            }
            Op::SliceCols(a, start, end) => {
                let v = self.value(a);
                let mut full = Matrix::zeros(v.rows(), v.cols());
                for i in 0..v.rows() {
                    full.row_mut(i)[start..end].copy_from_slice(g.row(i));
                }
                send(a, full);
            }
        }
    }
}
