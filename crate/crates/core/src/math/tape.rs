//! Reverse-mode automatic differentiation over real scalars.
//!
//! Every operation appends one node to a [`Tape`]. A node has at most two
//! parents, and a parent index is always strictly smaller than the child
//! index, so the tape is acyclic by construction and a single reverse sweep
//! over node indices visits nodes in reverse topological order.
//!
//! Generic numeric code is written against [`Real`], which is implemented
//! both by `f64` (plain evaluation) and by [`Var`] (recorded evaluation).

use std::cell::RefCell;
use std::f64::consts::LOG2_E;
use std::ops::{Add, Div, Mul, Neg, Sub};

const NO_PARENT: u32 = u32::MAX;

#[derive(Default)]
struct Nodes {
    values: Vec<f64>,
    parents: Vec<[u32; 2]>,
    partials: Vec<[f64; 2]>,
}

/// Append-only computation record.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Nodes>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Nodes {
                values: Vec::with_capacity(n),
                parents: Vec::with_capacity(n),
                partials: Vec::with_capacity(n),
            }),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clears all nodes. Outstanding [`Var`]s become dangling and must not be used.
    pub fn clear(&mut self) {
        let n = self.nodes.get_mut();
        n.values.clear();
        n.parents.clear();
        n.partials.clear();
    }

    /// A new independent leaf.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [NO_PARENT, NO_PARENT], [0.0, 0.0])
    }

    /// Leaves for each entry of `values`, in order.
    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut n = self.nodes.borrow_mut();
        let idx = n.values.len() as u32;
        assert!(
            (parents[0] == NO_PARENT || parents[0] < idx)
                && (parents[1] == NO_PARENT || parents[1] < idx),
            "tape invariant violated: parent index not older than child"
        );
        n.values.push(value);
        n.parents.push(parents);
        n.partials.push(partials);
        Var { tape: self, idx }
    }

    fn unary(&self, a: u32, value: f64, da: f64) -> Var<'_> {
        self.push(value, [a, NO_PARENT], [da, 0.0])
    }

    fn binary(&self, a: u32, b: u32, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(value, [a, b], [da, db])
    }

    /// Adjoints of every node with respect to `root`.
    pub fn adjoints(&self, root: Var<'_>) -> Vec<f64> {
        assert!(std::ptr::eq(root.tape, self), "root belongs to another tape");
        let n = self.nodes.borrow();
        let len = root.idx as usize + 1;
        let mut adj = vec![0.0; n.values.len()];
        adj[root.idx as usize] = 1.0;
        for i in (0..len).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let [p0, p1] = n.parents[i];
            let [d0, d1] = n.partials[i];
            if p0 != NO_PARENT {
                adj[p0 as usize] += a * d0;
            }
            if p1 != NO_PARENT {
                adj[p1 as usize] += a * d1;
            }
        }
        adj
    }

    /// `∂root/∂leaf` for each requested leaf. Leaves the root does not
    /// depend on get 0.
    pub fn backward(&self, root: Var<'_>, leaves: &[Var<'_>]) -> Vec<f64> {
        let adj = self.adjoints(root);
        leaves
            .iter()
            .map(|l| {
                assert!(std::ptr::eq(l.tape, self), "leaf belongs to another tape");
                adj[l.idx as usize]
            })
            .collect()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.nodes.borrow().values[self.idx as usize]
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn same_tape(&self, other: &Var<'t>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "mixing tapes");
    }
}

/// Scalar operations shared by plain and recorded evaluation.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living alongside `self` (same tape, if any).
    fn lift(self, v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// `max(0, x)`, subgradient 0 at 0.
    fn relu(self) -> Self;
    /// Smaller of the two; on ties `self` wins and receives the gradient.
    fn min(self, other: Self) -> Self;

    fn log2(self) -> Self {
        self.ln() * LOG2_E
    }

    fn sqr(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, v: f64) -> Self {
        v
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        Var::value(&self)
    }
    fn lift(self, v: f64) -> Self {
        self.tape.push(v, [NO_PARENT, NO_PARENT], [0.0, 0.0])
    }
    fn sin(self) -> Self {
        let x = self.value();
        self.tape.unary(self.idx, x.sin(), x.cos())
    }
    fn cos(self) -> Self {
        let x = self.value();
        self.tape.unary(self.idx, x.cos(), -x.sin())
    }
    fn exp(self) -> Self {
        let e = self.value().exp();
        self.tape.unary(self.idx, e, e)
    }
    fn ln(self) -> Self {
        let x = self.value();
        self.tape.unary(self.idx, x.ln(), 1.0 / x)
    }
    fn sqrt(self) -> Self {
        let s = self.value().sqrt();
        self.tape.unary(self.idx, s, 0.5 / s)
    }
    fn relu(self) -> Self {
        let x = self.value();
        if x > 0.0 {
            self.tape.unary(self.idx, x, 1.0)
        } else {
            self.tape.unary(self.idx, 0.0, 0.0)
        }
    }
    fn min(self, other: Self) -> Self {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a <= b {
            self.tape.binary(self.idx, other.idx, a, 1.0, 0.0)
        } else {
            self.tape.binary(self.idx, other.idx, b, 0.0, 1.0)
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(&rhs);
        let v = self.value() + rhs.value();
        self.tape.binary(self.idx, rhs.idx, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(&rhs);
        let v = self.value() - rhs.value();
        self.tape.binary(self.idx, rhs.idx, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        self.tape.binary(self.idx, rhs.idx, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        self.tape
            .binary(self.idx, rhs.idx, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.idx, -self.value(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self.idx, self.value() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self.idx, self.value() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self.idx, self.value() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.tape.unary(self.idx, self.value() / rhs, 1.0 / rhs)
    }
}

/// Sum of a non-empty sequence.
///
/// Panics on an empty sequence; callers iterate over shape-checked
/// dimensions that are at least 1.
pub fn sum<S: Real>(items: impl IntoIterator<Item = S>) -> S {
    let mut it = items.into_iter();
    let first = it.next().expect("sum over an empty sequence");
    it.fold(first, |acc, x| acc + x)
}

/// Left fold of [`Real::min`]; ties resolve to the earliest element.
pub fn min_all<S: Real>(items: impl IntoIterator<Item = S>) -> S {
    let mut it = items.into_iter();
    let first = it.next().expect("min over an empty sequence");
    it.fold(first, |acc, x| acc.min(x))
}
