//! Scalar reverse-mode differentiation.
//!
//! Every primitive records its value together with the local partial
//! derivatives with respect to its operands. The backward pass is then a
//! single reverse sweep that accumulates adjoints along those edges, so
//! n-ary primitives (affine maps, weighted sums) cost one node each.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{sigmoid_f64, Real};
use crate::error::{Error, Result};

#[derive(Default)]
struct Inner {
    /// `ends[i]` is one past the last edge of node `i`.
    ends: Vec<u32>,
    edges: Vec<(u32, f64)>,
    /// First primitive that produced a non-finite value.
    non_finite: Option<&'static str>,
}

/// Recording context for one gradient evaluation.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.val)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn var(&self, val: f64) -> Var<'_> {
        self.push(val, "input", std::iter::empty())
    }

    fn push<I>(&self, val: f64, op: &'static str, edges: I) -> Var<'_>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut inner = self.inner.borrow_mut();
        inner.edges.extend(edges);
        let end = inner.edges.len() as u32;
        inner.ends.push(end);
        if !val.is_finite() && inner.non_finite.is_none() {
            inner.non_finite = Some(op);
        }
        Var {
            tape: self,
            idx: (inner.ends.len() - 1) as u32,
            val,
        }
    }

    /// Error if any recorded primitive produced a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        match self.inner.borrow().non_finite {
            Some(op) => Err(Error::numeric(op)),
            None => Ok(()),
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn backward(&self, output: Var<'_>) -> Vec<f64> {
        debug_assert!(std::ptr::eq(self, output.tape));
        let inner = self.inner.borrow();
        let n = output.idx as usize + 1;
        let mut adj = vec![0.0; inner.ends.len()];
        adj[output.idx as usize] = 1.0;
        for node in (0..n).rev() {
            let a = adj[node];
            if a == 0.0 {
                continue;
            }
            let start = if node == 0 { 0 } else { inner.ends[node - 1] as usize };
            let end = inner.ends[node] as usize;
            for &(parent, partial) in &inner.edges[start..end] {
                adj[parent as usize] += a * partial;
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, val: f64, partial: f64, op: &'static str) -> Self {
        self.tape.push(val, op, [(self.idx, partial)])
    }

    fn binary(self, other: Self, val: f64, da: f64, db: f64, op: &'static str) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        self.tape.push(val, op, [(self.idx, da), (other.idx, db)])
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0, "add")
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0, "sub")
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val, "mul")
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val, "div")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0, "neg")
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0, "add")
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0, "sub")
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs, "mul")
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs, "div")
    }
}

impl<'t> Real for Var<'t> {
    const FORWARD_ONLY: bool = false;

    #[inline]
    fn value(&self) -> f64 {
        self.val
    }

    fn lift(&self, c: f64) -> Self {
        self.tape.push(c, "const", std::iter::empty())
    }

    fn exp(self) -> Self {
        let y = self.val.exp();
        self.unary(y, y, "exp")
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val, "log")
    }

    fn tanh(self) -> Self {
        let y = self.val.tanh();
        self.unary(y, 1.0 - y * y, "tanh")
    }

    fn sigmoid(self) -> Self {
        let y = sigmoid_f64(self.val);
        self.unary(y, y * (1.0 - y), "sigmoid")
    }

    fn abs(self) -> Self {
        let s = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), s, "abs")
    }

    fn square(self) -> Self {
        self.unary(self.val * self.val, 2.0 * self.val, "square")
    }

    fn sqrt(self) -> Self {
        let y = self.val.sqrt();
        self.unary(y, 0.5 / y, "sqrt")
    }

    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        if self.val < lo {
            self.lift(lo)
        } else if self.val > hi {
            self.lift(hi)
        } else {
            self
        }
    }

    fn affine(w: &[Self], x: &[Self], bias: Self) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let val = w
            .iter()
            .zip(x)
            .fold(bias.val, |acc, (a, b)| acc + a.val * b.val);
        let edges = w
            .iter()
            .zip(x)
            .flat_map(|(a, b)| [(a.idx, b.val), (b.idx, a.val)])
            .chain(std::iter::once((bias.idx, 1.0)));
        bias.tape.push(val, "affine", edges)
    }

    fn linear_combination(coeffs: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), x.len());
        debug_assert!(!x.is_empty());
        let val = coeffs.iter().zip(x).map(|(c, v)| c * v.val).sum();
        let edges = coeffs.iter().zip(x).map(|(c, v)| (v.idx, *c));
        x[0].tape.push(val, "sum", edges)
    }
}
