//! Scalar reverse-mode automatic differentiation over a recorded tape, plus
//! forward-mode jets layered on top of it.
//!
//! The tape is a Wengert list: every scalar operation appends one node whose
//! operands point strictly backwards, so a single reverse sweep computes the
//! gradient of any recorded scalar with respect to all trainable leaves.
//! Jets carry a value together with first (and optionally diagonal second)
//! derivatives with respect to a small set of seed inputs; every jet
//! component is itself a tape node, so quantities like `d²u/dt²` remain
//! differentiable with respect to network parameters. This is what lets a
//! PDE residual built from jet components be trained by gradient descent.
//!
//! Layout notes, since loss evaluation lives on this hot path:
//! - nodes are 24 bytes (tag + two u32 operands + one stored partial) with
//!   values in a parallel `Vec<f64>`;
//! - partials that are recoverable from recorded values (tanh, exp, mul, …)
//!   are recomputed during the reverse sweep instead of being stored;
//! - dense affine layers record a single fused dot-product node over a span
//!   of (coefficient, operand) pairs instead of one mul/add pair per term.
//!
//! A tape is intentionally single-threaded. Batch evaluation parallelizes by
//! giving each chunk of points its own tape and reducing the per-chunk
//! results in fixed chunk order, which keeps gradients bit-deterministic no
//! matter how many threads participate.

use crate::error::{Error, Result};
use std::sync::atomic::{AtomicU32, Ordering};

/// Handle to a node on a specific tape. The `tape` field guards against
/// accidentally mixing nodes from different tapes.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VarId {
    tape: u32,
    idx: u32,
}

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

/// Elementary operations accepted by [`Tape::record`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    PowInt(i32),
    Tanh,
    Sin,
    Cos,
    Exp,
}

impl ElemOp {
    fn arity(self) -> usize {
        match self {
            ElemOp::Add | ElemOp::Sub | ElemOp::Mul | ElemOp::Div => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
enum Tag {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Neg,
    Square,
    /// `a^n` with the exponent stored in `b`; the partial `n·a^(n-1)` is
    /// precomputed into `pa`.
    PowInt,
    Tanh,
    Sin,
    Cos,
    Exp,
    /// `1/a`; recorded as the expansion of `Div`.
    Inv,
    /// Fused dot product over `dot_pairs[a .. a+b]`.
    Dot,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    tag: Tag,
    a: u32,
    b: u32,
    /// Stored local partial for ops where recomputation from values is not
    /// cheap (sin, cos, integer powers). Unused otherwise.
    pa: f64,
}

static TAPE_COUNTER: AtomicU32 = AtomicU32::new(1);

/// Recorded computation graph. See the module docs for layout rationale.
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    vals: Vec<f64>,
    dot_pairs: Vec<(u32, u32)>,
    /// Trainable leaves in registration order; gradients are returned in
    /// this order by [`Tape::backward`].
    params: Vec<u32>,
    /// Interned constants (keyed by bit pattern) so repeated scale factors
    /// do not bloat the tape.
    const_cache: Vec<(u64, u32)>,
    zero_id: Option<u32>,
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0, 0)
    }

    /// `nodes`/`pairs` are capacity hints for the node and dot-pair arrays.
    pub fn with_capacity(nodes: usize, pairs: usize) -> Self {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::with_capacity(nodes),
            vals: Vec::with_capacity(nodes),
            dot_pairs: Vec::with_capacity(pairs),
            params: Vec::new(),
            const_cache: Vec::new(),
            zero_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    #[inline]
    fn push(&mut self, tag: Tag, a: u32, b: u32, pa: f64, val: f64) -> VarId {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { tag, a, b, pa });
        self.vals.push(val);
        VarId { tape: self.id, idx }
    }

    #[inline]
    fn check(&self, v: VarId) -> Result<u32> {
        if v.tape != self.id {
            return Err(Error::usage(format!(
                "variable belongs to tape {} but was used on tape {}",
                v.tape, self.id
            )));
        }
        Ok(v.idx)
    }

    /// Trainable leaf. Its gradient slot is appended to the vector returned
    /// by [`Tape::backward`].
    pub fn leaf(&mut self, value: f64) -> VarId {
        let id = self.push(Tag::Leaf, 0, 0, 0.0, value);
        self.params.push(id.idx);
        id
    }

    /// Non-trainable constant; interned by bit pattern.
    pub fn constant(&mut self, value: f64) -> VarId {
        let bits = value.to_bits();
        if let Some(&(_, idx)) = self.const_cache.iter().find(|&&(b, _)| b == bits) {
            return VarId {
                tape: self.id,
                idx,
            };
        }
        let id = self.push(Tag::Const, 0, 0, 0.0, value);
        self.const_cache.push((bits, id.idx));
        if bits == 0.0_f64.to_bits() {
            self.zero_id = Some(id.idx);
        }
        id
    }

    #[inline]
    pub fn value(&self, v: VarId) -> f64 {
        debug_assert_eq!(v.tape, self.id);
        self.vals[v.idx as usize]
    }

    #[inline]
    fn is_const_zero(&self, v: VarId) -> bool {
        self.zero_id == Some(v.idx)
    }

    /// Record one elementary operation. `args` length must match the
    /// operation's arity and every argument must belong to this tape.
    pub fn record(&mut self, op: ElemOp, args: &[VarId]) -> Result<VarId> {
        if args.len() != op.arity() {
            return Err(Error::usage(format!(
                "{op:?} takes {} argument(s), got {}",
                op.arity(),
                args.len()
            )));
        }
        for &a in args {
            self.check(a)?;
        }
        match op {
            ElemOp::Add => Ok(self.add(args[0], args[1])),
            ElemOp::Sub => Ok(self.sub(args[0], args[1])),
            ElemOp::Mul => Ok(self.mul(args[0], args[1])),
            ElemOp::Div => self.div(args[0], args[1]),
            ElemOp::Neg => Ok(self.neg(args[0])),
            ElemOp::Square => Ok(self.square(args[0])),
            ElemOp::PowInt(n) => self.powi(args[0], n),
            ElemOp::Tanh => Ok(self.tanh(args[0])),
            ElemOp::Sin => Ok(self.sin(args[0])),
            ElemOp::Cos => Ok(self.cos(args[0])),
            ElemOp::Exp => Ok(self.exp(args[0])),
        }
    }

    // ── Inherent fast-path operations ───────────────────────────────────
    // These skip slice packing and arity checks; tape membership is only
    // debug-asserted because jets and network layers call them in tight
    // loops with ids they just created.

    #[inline]
    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        debug_assert_eq!(b.tape, self.id);
        let v = self.vals[a.idx as usize] + self.vals[b.idx as usize];
        self.push(Tag::Add, a.idx, b.idx, 0.0, v)
    }

    #[inline]
    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        debug_assert_eq!(b.tape, self.id);
        let v = self.vals[a.idx as usize] - self.vals[b.idx as usize];
        self.push(Tag::Sub, a.idx, b.idx, 0.0, v)
    }

    #[inline]
    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        debug_assert_eq!(b.tape, self.id);
        let v = self.vals[a.idx as usize] * self.vals[b.idx as usize];
        self.push(Tag::Mul, a.idx, b.idx, 0.0, v)
    }

    /// Division; expands to `a · (1/b)` so the reverse sweep never needs a
    /// second stored partial.
    pub fn div(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let inv = self.inv(b)?;
        Ok(self.mul(a, inv))
    }

    pub fn inv(&mut self, a: VarId) -> Result<VarId> {
        debug_assert_eq!(a.tape, self.id);
        let va = self.vals[a.idx as usize];
        if va == 0.0 {
            return Err(Error::NonFinite {
                context: "division by zero",
                node: Some(a.idx),
            });
        }
        Ok(self.push(Tag::Inv, a.idx, 0, 0.0, 1.0 / va))
    }

    #[inline]
    pub fn neg(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let v = -self.vals[a.idx as usize];
        self.push(Tag::Neg, a.idx, 0, 0.0, v)
    }

    #[inline]
    pub fn square(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let va = self.vals[a.idx as usize];
        self.push(Tag::Square, a.idx, 0, 0.0, va * va)
    }

    pub fn powi(&mut self, a: VarId, n: i32) -> Result<VarId> {
        debug_assert_eq!(a.tape, self.id);
        let va = self.vals[a.idx as usize];
        if va == 0.0 && n < 0 {
            return Err(Error::NonFinite {
                context: "zero raised to a negative integer power",
                node: Some(a.idx),
            });
        }
        let val = va.powi(n);
        let pa = if n == 0 {
            0.0
        } else {
            f64::from(n) * va.powi(n - 1)
        };
        Ok(self.push(Tag::PowInt, a.idx, n as u32, pa, val))
    }

    #[inline]
    pub fn tanh(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let v = self.vals[a.idx as usize].tanh();
        self.push(Tag::Tanh, a.idx, 0, 0.0, v)
    }

    #[inline]
    pub fn sin(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let u = self.vals[a.idx as usize];
        self.push(Tag::Sin, a.idx, 0, u.cos(), u.sin())
    }

    #[inline]
    pub fn cos(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let u = self.vals[a.idx as usize];
        self.push(Tag::Cos, a.idx, 0, -u.sin(), u.cos())
    }

    #[inline]
    pub fn exp(&mut self, a: VarId) -> VarId {
        debug_assert_eq!(a.tape, self.id);
        let v = self.vals[a.idx as usize].exp();
        self.push(Tag::Exp, a.idx, 0, 0.0, v)
    }

    /// Fused dot product `Σ value(a_k)·value(b_k)`. One node regardless of
    /// length; this is what dense layers record per neuron per derivative
    /// stream.
    pub fn dot(&mut self, pairs: &[(VarId, VarId)]) -> Result<VarId> {
        let start = self.dot_pairs.len() as u32;
        let mut acc = 0.0;
        for &(a, b) in pairs {
            let ia = self.check(a)?;
            let ib = self.check(b)?;
            acc += self.vals[ia as usize] * self.vals[ib as usize];
            self.dot_pairs.push((ia, ib));
        }
        Ok(self.push(Tag::Dot, start, pairs.len() as u32, 0.0, acc))
    }

    /// Like [`Tape::dot`] but over parallel index slices (used by network
    /// layers where weight ids are contiguous); avoids building a pair
    /// slice on the caller side.
    pub fn dot_zip(&mut self, coeffs: &[VarId], operands: &[VarId]) -> Result<VarId> {
        if coeffs.len() != operands.len() {
            return Err(Error::usage(format!(
                "dot_zip length mismatch: {} coefficients vs {} operands",
                coeffs.len(),
                operands.len()
            )));
        }
        let start = self.dot_pairs.len() as u32;
        let mut acc = 0.0;
        for (&a, &b) in coeffs.iter().zip(operands) {
            let ia = self.check(a)?;
            let ib = self.check(b)?;
            acc += self.vals[ia as usize] * self.vals[ib as usize];
            self.dot_pairs.push((ia, ib));
        }
        Ok(self.push(Tag::Dot, start, coeffs.len() as u32, 0.0, acc))
    }

    // ── Const-folding helpers used by jet arithmetic ────────────────────
    // Folding only fires on the interned zero constant, so tapes stay
    // structurally deterministic for identical call sequences.

    fn mul_fold(&mut self, a: VarId, b: VarId) -> VarId {
        if self.is_const_zero(a) || self.is_const_zero(b) {
            return self.zero();
        }
        self.mul(a, b)
    }

    fn add_fold(&mut self, a: VarId, b: VarId) -> VarId {
        if self.is_const_zero(a) {
            return b;
        }
        if self.is_const_zero(b) {
            return a;
        }
        self.add(a, b)
    }

    fn sub_fold(&mut self, a: VarId, b: VarId) -> VarId {
        if self.is_const_zero(b) {
            return a;
        }
        self.sub(a, b)
    }

    pub fn zero(&mut self) -> VarId {
        self.constant(0.0)
    }

    pub fn one(&mut self) -> VarId {
        self.constant(1.0)
    }

    /// `c · a` for a compile-time-known constant, interning `c`.
    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let cid = self.constant(c);
        self.mul_fold(cid, a)
    }

    // ── Reverse sweep ───────────────────────────────────────────────────

    /// Gradient of `root` with respect to all trainable leaves, in leaf
    /// registration order. Leaves not reachable from `root` get exactly 0.0.
    pub fn backward(&self, root: VarId) -> Result<Vec<f64>> {
        let adj = self.backward_adjoints(root)?;
        Ok(self
            .params
            .iter()
            .map(|&i| adj[i as usize])
            .collect())
    }

    /// Gradient of `root` with respect to an arbitrary set of nodes.
    pub fn backward_wrt(&self, root: VarId, wrt: &[VarId]) -> Result<Vec<f64>> {
        for &w in wrt {
            self.check(w)?;
        }
        let adj = self.backward_adjoints(root)?;
        Ok(wrt.iter().map(|&w| adj[w.idx as usize]).collect())
    }

    fn backward_adjoints(&self, root: VarId) -> Result<Vec<f64>> {
        let ri = self.check(root)? as usize;
        let mut adj = vec![0.0f64; ri + 1];
        adj[ri] = 1.0;
        for i in (0..=ri).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: "backward adjoint",
                    node: Some(i as u32),
                });
            }
            let n = self.nodes[i];
            let a = n.a as usize;
            match n.tag {
                Tag::Leaf | Tag::Const => {}
                Tag::Add => {
                    adj[a] += g;
                    adj[n.b as usize] += g;
                }
                Tag::Sub => {
                    adj[a] += g;
                    adj[n.b as usize] -= g;
                }
                Tag::Mul => {
                    adj[a] += g * self.vals[n.b as usize];
                    adj[n.b as usize] += g * self.vals[a];
                }
                Tag::Neg => adj[a] -= g,
                Tag::Square => adj[a] += g * 2.0 * self.vals[a],
                Tag::PowInt | Tag::Sin | Tag::Cos => adj[a] += g * n.pa,
                Tag::Tanh => {
                    let v = self.vals[i];
                    adj[a] += g * (1.0 - v * v);
                }
                Tag::Exp => adj[a] += g * self.vals[i],
                Tag::Inv => {
                    let v = self.vals[i];
                    adj[a] -= g * v * v;
                }
                Tag::Dot => {
                    let s = n.a as usize;
                    let e = s + n.b as usize;
                    for &(pa, pb) in &self.dot_pairs[s..e] {
                        adj[pa as usize] += g * self.vals[pb as usize];
                        adj[pb as usize] += g * self.vals[pa as usize];
                    }
                }
            }
        }
        Ok(adj)
    }

    /// Recompute every node value from the recorded operations and compare
    /// bit-for-bit with the stored values. Exercises the determinism
    /// guarantee: a tape replay must reproduce itself exactly.
    pub fn replay_matches(&self) -> bool {
        let mut vals = vec![0.0f64; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let a = n.a as usize;
            vals[i] = match n.tag {
                Tag::Leaf | Tag::Const => self.vals[i],
                Tag::Add => vals[a] + vals[n.b as usize],
                Tag::Sub => vals[a] - vals[n.b as usize],
                Tag::Mul => vals[a] * vals[n.b as usize],
                Tag::Neg => -vals[a],
                Tag::Square => vals[a] * vals[a],
                Tag::PowInt => vals[a].powi(n.b as i32),
                Tag::Tanh => vals[a].tanh(),
                Tag::Sin => vals[a].sin(),
                Tag::Cos => vals[a].cos(),
                Tag::Exp => vals[a].exp(),
                Tag::Inv => 1.0 / vals[a],
                Tag::Dot => {
                    let s = n.a as usize;
                    let e = s + n.b as usize;
                    self.dot_pairs[s..e]
                        .iter()
                        .map(|&(pa, pb)| vals[pa as usize] * vals[pb as usize])
                        .sum()
                }
            };
        }
        vals.iter()
            .zip(&self.vals)
            .all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

// ── Jets ────────────────────────────────────────────────────────────────

/// Derivative order carried by a jet.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum JetOrder {
    /// Value plus first derivatives with respect to each seed input.
    First,
    /// Additionally the diagonal second derivatives `∂²/∂x_i²`.
    Second,
}

/// A scalar quantity with derivatives with respect to a small set of seed
/// inputs. All components are tape nodes, so jets stay differentiable with
/// respect to trainable parameters (forward-over-reverse).
#[derive(Clone, Debug)]
pub struct Jet {
    pub val: VarId,
    pub d1: Vec<VarId>,
    /// Diagonal second derivatives; `None` for first-order jets. Mixed
    /// second derivatives are never needed by the residuals in this crate.
    pub d2: Option<Vec<VarId>>,
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.d1.len()
    }

    pub fn order(&self) -> JetOrder {
        if self.d2.is_some() {
            JetOrder::Second
        } else {
            JetOrder::First
        }
    }

    /// Seed jet for input coordinate `index` of `dim` total inputs:
    /// value `x`, first-derivative basis vector, zero second derivatives.
    pub fn seed(tape: &mut Tape, x: f64, index: usize, dim: usize, order: JetOrder) -> Result<Jet> {
        if index >= dim {
            return Err(Error::usage(format!(
                "seed index {index} out of range for {dim} inputs"
            )));
        }
        let val = tape.constant(x);
        let zero = tape.zero();
        let one = tape.one();
        let d1 = (0..dim).map(|i| if i == index { one } else { zero }).collect();
        let d2 = match order {
            JetOrder::First => None,
            JetOrder::Second => Some(vec![zero; dim]),
        };
        Ok(Jet { val, d1, d2 })
    }

    /// Jet of a quantity that does not depend on the seed inputs (all
    /// derivative components are zero). `val` may be any tape node, e.g. a
    /// trainable parameter.
    pub fn from_node(tape: &mut Tape, val: VarId, dim: usize, order: JetOrder) -> Jet {
        let zero = tape.zero();
        let d2 = match order {
            JetOrder::First => None,
            JetOrder::Second => Some(vec![zero; dim]),
        };
        Jet {
            val,
            d1: vec![zero; dim],
            d2,
        }
    }

    pub fn constant(tape: &mut Tape, x: f64, dim: usize, order: JetOrder) -> Jet {
        let val = tape.constant(x);
        Jet::from_node(tape, val, dim, order)
    }
}

fn jets_compatible(a: &Jet, b: &Jet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!(
            "jet dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.d2.is_some() != b.d2.is_some() {
        return Err(Error::usage(
            "jet order mismatch: mixing first- and second-order jets".to_string(),
        ));
    }
    Ok(())
}

pub fn jet_add(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    jets_compatible(a, b)?;
    let val = tape.add(a.val, b.val);
    let d1 = a
        .d1
        .iter()
        .zip(&b.d1)
        .map(|(&x, &y)| tape.add_fold(x, y))
        .collect();
    let d2 = match (&a.d2, &b.d2) {
        (Some(x2), Some(y2)) => Some(
            x2.iter()
                .zip(y2)
                .map(|(&x, &y)| tape.add_fold(x, y))
                .collect(),
        ),
        _ => None,
    };
    Ok(Jet { val, d1, d2 })
}

pub fn jet_sub(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    jets_compatible(a, b)?;
    let val = tape.sub(a.val, b.val);
    let d1 = a
        .d1
        .iter()
        .zip(&b.d1)
        .map(|(&x, &y)| tape.sub_fold(x, y))
        .collect();
    let d2 = match (&a.d2, &b.d2) {
        (Some(x2), Some(y2)) => Some(
            x2.iter()
                .zip(y2)
                .map(|(&x, &y)| tape.sub_fold(x, y))
                .collect(),
        ),
        _ => None,
    };
    Ok(Jet { val, d1, d2 })
}

pub fn jet_neg(tape: &mut Tape, a: &Jet) -> Jet {
    let val = tape.neg(a.val);
    let d1 = a.d1.iter().map(|&x| tape.neg(x)).collect();
    let d2 = a
        .d2
        .as_ref()
        .map(|x2| x2.iter().map(|&x| tape.neg(x)).collect());
    Jet { val, d1, d2 }
}

/// Product rule: `(ab)' = a'b + ab'`, `(ab)'' = a''b + 2a'b' + ab''`
/// componentwise along the diagonal.
pub fn jet_mul(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    jets_compatible(a, b)?;
    let val = tape.mul(a.val, b.val);
    let d1: Vec<VarId> = a
        .d1
        .iter()
        .zip(&b.d1)
        .map(|(&da, &db)| {
            let t1 = tape.mul_fold(da, b.val);
            let t2 = tape.mul_fold(a.val, db);
            tape.add_fold(t1, t2)
        })
        .collect();
    let d2 = match (&a.d2, &b.d2) {
        (Some(a2), Some(b2)) => {
            let mut out = Vec::with_capacity(a2.len());
            for i in 0..a2.len() {
                let t1 = tape.mul_fold(a2[i], b.val);
                let t2 = tape.mul_fold(a.val, b2[i]);
                let cross = tape.mul_fold(a.d1[i], b.d1[i]);
                let cross2 = tape.add_fold(cross, cross);
                let s = tape.add_fold(t1, t2);
                out.push(tape.add_fold(s, cross2));
            }
            Some(out)
        }
        _ => None,
    };
    Ok(Jet { val, d1, d2 })
}

/// Multiply a jet by a scalar constant (derivatives scale linearly).
pub fn jet_scale(tape: &mut Tape, a: &Jet, c: f64) -> Jet {
    let val = tape.scale(a.val, c);
    let d1 = a.d1.iter().map(|&x| tape.scale(x, c)).collect();
    let d2 = a
        .d2
        .as_ref()
        .map(|x2| x2.iter().map(|&x| tape.scale(x, c)).collect());
    Jet { val, d1, d2 }
}

/// Chain rule for a univariate map `f(u)` given nodes for `f(u)`, `f'(u)`
/// and (for second-order jets) `f''(u)`:
/// `∂_i f = f'·u_i`, `∂²_i f = f'·u_ii + f''·u_i²`.
fn jet_chain(tape: &mut Tape, u: &Jet, val: VarId, fp: VarId, fpp: Option<VarId>) -> Result<Jet> {
    let d1: Vec<VarId> = u.d1.iter().map(|&ui| tape.mul_fold(fp, ui)).collect();
    let d2 = match &u.d2 {
        Some(u2) => {
            let fpp = fpp.ok_or_else(|| {
                Error::usage("second-order chain rule requires f'' (internal)".to_string())
            })?;
            let mut out = Vec::with_capacity(u2.len());
            for i in 0..u2.len() {
                let t1 = tape.mul_fold(fp, u2[i]);
                let sq = if tape.is_const_zero(u.d1[i]) {
                    tape.zero()
                } else {
                    tape.square(u.d1[i])
                };
                let t2 = tape.mul_fold(fpp, sq);
                out.push(tape.add_fold(t1, t2));
            }
            Some(out)
        }
        None => None,
    };
    Ok(Jet { val, d1, d2 })
}

pub fn jet_tanh(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.tanh(u.val);
    let vsq = tape.square(v);
    let one = tape.one();
    let s = tape.sub(one, vsq); // sech² = 1 − tanh²
    let fpp = if u.d2.is_some() {
        // (tanh)'' = −2·tanh·sech²
        let vs = tape.mul(v, s);
        let two_vs = tape.add(vs, vs);
        Some(tape.neg(two_vs))
    } else {
        None
    };
    jet_chain(tape, u, v, s, fpp)
}

pub fn jet_sin(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.sin(u.val);
    let fp = tape.cos(u.val);
    let fpp = if u.d2.is_some() { Some(tape.neg(v)) } else { None };
    jet_chain(tape, u, v, fp, fpp)
}

pub fn jet_cos(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.cos(u.val);
    let s = tape.sin(u.val);
    let fp = tape.neg(s);
    let fpp = if u.d2.is_some() { Some(tape.neg(v)) } else { None };
    jet_chain(tape, u, v, fp, fpp)
}

pub fn jet_exp(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.exp(u.val);
    let fpp = if u.d2.is_some() { Some(v) } else { None };
    jet_chain(tape, u, v, v, fpp)
}

pub fn jet_square(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.square(u.val);
    let fp = tape.add(u.val, u.val);
    let fpp = if u.d2.is_some() {
        Some(tape.constant(2.0))
    } else {
        None
    };
    jet_chain(tape, u, v, fp, fpp)
}

pub fn jet_powi(tape: &mut Tape, u: &Jet, n: i32) -> Result<Jet> {
    let v = tape.powi(u.val, n)?;
    let pm1 = tape.powi(u.val, n - 1)?;
    let fp = tape.scale(pm1, f64::from(n));
    let fpp = if u.d2.is_some() {
        let pm2 = tape.powi(u.val, n - 2)?;
        Some(tape.scale(pm2, f64::from(n) * f64::from(n - 1)))
    } else {
        None
    };
    jet_chain(tape, u, v, fp, fpp)
}

/// Reciprocal: `(1/u)' = −u'/u²`, `(1/u)'' = 2u'²/u³ − u''/u²`.
pub fn jet_inv(tape: &mut Tape, u: &Jet) -> Result<Jet> {
    let v = tape.inv(u.val)?;
    let vsq = tape.square(v);
    let fp = tape.neg(vsq);
    let fpp = if u.d2.is_some() {
        let vcube = tape.mul(vsq, v);
        Some(tape.scale(vcube, 2.0))
    } else {
        None
    };
    jet_chain(tape, u, v, fp, fpp)
}

pub fn jet_div(tape: &mut Tape, a: &Jet, b: &Jet) -> Result<Jet> {
    jets_compatible(a, b)?;
    let binv = jet_inv(tape, b)?;
    jet_mul(tape, a, &binv)
}

/// Generic dispatch over the elementary-op set, mirroring [`Tape::record`]
/// at the jet level.
pub fn jet_lift(tape: &mut Tape, op: ElemOp, args: &[&Jet]) -> Result<Jet> {
    if args.len() != op.arity() {
        return Err(Error::usage(format!(
            "{op:?} takes {} jet argument(s), got {}",
            op.arity(),
            args.len()
        )));
    }
    match op {
        ElemOp::Add => jet_add(tape, args[0], args[1]),
        ElemOp::Sub => jet_sub(tape, args[0], args[1]),
        ElemOp::Mul => jet_mul(tape, args[0], args[1]),
        ElemOp::Div => jet_div(tape, args[0], args[1]),
        ElemOp::Neg => Ok(jet_neg(tape, args[0])),
        ElemOp::Square => jet_square(tape, args[0]),
        ElemOp::PowInt(n) => jet_powi(tape, args[0], n),
        ElemOp::Tanh => jet_tanh(tape, args[0]),
        ElemOp::Sin => jet_sin(tape, args[0]),
        ElemOp::Cos => jet_cos(tape, args[0]),
        ElemOp::Exp => jet_exp(tape, args[0]),
    }
}
