//! Sweep kernels over a [`TapeProgram`]: forward values, forward tangents
//! (first and second order along seeded directions), and a mixed adjoint
//! sweep that differentiates any linear combination of the output's value
//! and tangent components with respect to leaves and parameters.
//!
//! All buffers hold `LANES` samples per node so one replay evaluates a whole
//! chunk; `LANES = 1` recovers the plain scalar tape. Accumulation order is
//! fixed (node order, then lane order), so results do not depend on how work
//! is distributed across threads.

use alloc::vec;
use alloc::vec::Vec;

use super::program::{NodeId, Op, TapeProgram};
use crate::error::CoreError;

/// First/second/third derivatives of a unary primitive at a point, used by
/// the tangent and adjoint sweeps. `z` is the cached primal output, `x` the
/// primal input.
#[inline]
fn unary_derivs(op: &Op, x: f64, z: f64) -> (f64, f64, f64) {
    match op {
        Op::Neg(_) => (-1.0, 0.0, 0.0),
        Op::Recip(_) => {
            let g1 = -z * z;
            (g1, 2.0 * z * z * z, -6.0 * z * z * z * z)
        }
        Op::Square(_) => (2.0 * x, 2.0, 0.0),
        Op::Sqrt(_) => {
            let g1 = 0.5 / z;
            let g2 = -0.5 * g1 / x;
            (g1, g2, -1.5 * g2 / x)
        }
        Op::Exp(_) => (z, z, z),
        Op::Ln(_) => {
            let g1 = 1.0 / x;
            (g1, -g1 * g1, 2.0 * g1 * g1 * g1)
        }
        Op::Abs(_) => (sign(x), 0.0, 0.0),
        Op::Tanh(_) => {
            let g1 = 1.0 - z * z;
            (g1, -2.0 * z * g1, g1 * (6.0 * z * z - 2.0))
        }
        Op::Softplus(_) => {
            let s = sigmoid(x);
            let g2 = s * (1.0 - s);
            (s, g2, g2 * (1.0 - 2.0 * s))
        }
        _ => unreachable!("not a unary op"),
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    // max(x, 0) + ln(1 + e^{-|x|}); safe for large |x|.
    let m = if x > 0.0 { x } else { 0.0 };
    m + libm::log1p(libm::exp(-libm::fabs(x)))
}

/// Evaluate a single node's value row given all earlier rows. Shared by the
/// batch forward sweep and the scalar tape's define-by-run evaluation.
#[inline]
pub(crate) fn eval_op<const B: usize>(op: &Op, head: &[f64], out: &mut [f64], params: &[f64]) {
    let row = |id: NodeId| -> &[f64] { &head[id.index() * B..id.index() * B + B] };
    match *op {
        Op::Leaf { .. } => {}
        Op::Param { idx } => out.fill(params[idx as usize]),
        Op::Const(c) => out.fill(c),
        Op::Add(a, b) => {
            let (ra, rb) = (row(a), row(b));
            for j in 0..B {
                out[j] = ra[j] + rb[j];
            }
        }
        Op::Sub(a, b) => {
            let (ra, rb) = (row(a), row(b));
            for j in 0..B {
                out[j] = ra[j] - rb[j];
            }
        }
        Op::Mul(a, b) => {
            let (ra, rb) = (row(a), row(b));
            for j in 0..B {
                out[j] = ra[j] * rb[j];
            }
        }
        Op::Neg(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = -ra[j];
            }
        }
        Op::Recip(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = 1.0 / ra[j];
            }
        }
        Op::Square(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = ra[j] * ra[j];
            }
        }
        Op::Sqrt(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = libm::sqrt(ra[j]);
            }
        }
        Op::Exp(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = libm::exp(ra[j]);
            }
        }
        Op::Ln(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = libm::log(ra[j]);
            }
        }
        Op::Abs(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = libm::fabs(ra[j]);
            }
        }
        Op::Tanh(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = libm::tanh(ra[j]);
            }
        }
        Op::Softplus(a) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = softplus(ra[j]);
            }
        }
        Op::AddConst(a, c) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = ra[j] + c;
            }
        }
        Op::MulConst(a, c) => {
            let ra = row(a);
            for j in 0..B {
                out[j] = ra[j] * c;
            }
        }
        Op::Dot { a, b, n } => {
            let mut acc = [0.0; B];
            for t in 0..n as usize {
                let ra = &head[(a.index() + t) * B..][..B];
                let rb = &head[(b.index() + t) * B..][..B];
                for j in 0..B {
                    acc[j] += ra[j] * rb[j];
                }
            }
            out.copy_from_slice(&acc);
        }
        Op::DotParam { p, x, n } => {
            let mut acc = [0.0; B];
            for t in 0..n as usize {
                let w = params[p as usize + t];
                let rx = &head[(x.index() + t) * B..][..B];
                for j in 0..B {
                    acc[j] += w * rx[j];
                }
            }
            out.copy_from_slice(&acc);
        }
        Op::AddParam { x, p } => {
            let rx = row(x);
            let w = params[p as usize];
            for j in 0..B {
                out[j] = rx[j] + w;
            }
        }
    }
}

/// Buffers and sweeps for replaying one program over `LANES` samples.
pub struct BatchRunner<const LANES: usize> {
    n_nodes: usize,
    vals: Vec<f64>,
    /// First-order tangent per direction, `[dir][node*LANES + lane]`.
    t1: Vec<Vec<f64>>,
    /// Second-order tangent (Taylor coefficient) per direction; empty for
    /// first-order directions.
    t2: Vec<Vec<f64>>,
    dir_order2: Vec<bool>,
    b0: Vec<f64>,
    b1: Vec<Vec<f64>>,
    b2: Vec<Vec<f64>>,
    pgrad: Vec<f64>,
}

impl<const LANES: usize> Default for BatchRunner<LANES> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const LANES: usize> BatchRunner<LANES> {
    pub fn new() -> Self {
        Self {
            n_nodes: 0,
            vals: Vec::new(),
            t1: Vec::new(),
            t2: Vec::new(),
            dir_order2: Vec::new(),
            b0: Vec::new(),
            b1: Vec::new(),
            b2: Vec::new(),
            pgrad: Vec::new(),
        }
    }

    /// Size the value buffer for `prog` and reset direction state. Leaf rows
    /// must be filled through [`Self::values_mut`] before [`Self::forward`].
    pub fn prepare(&mut self, prog: &TapeProgram) {
        self.n_nodes = prog.len();
        self.vals.clear();
        self.vals.resize(self.n_nodes * LANES, 0.0);
        self.t1.clear();
        self.t2.clear();
        self.dir_order2.clear();
        self.pgrad.clear();
        self.pgrad.resize(prog.param_count(), 0.0);
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.vals[id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn values_mut(&mut self, id: NodeId) -> &mut [f64] {
        &mut self.vals[id.index() * LANES..id.index() * LANES + LANES]
    }

    /// Forward value sweep. Leaf rows are taken as already bound.
    pub fn forward(&mut self, prog: &TapeProgram, params: &[f64]) {
        debug_assert!(params.len() >= prog.param_count());
        for (i, op) in prog.ops.iter().enumerate() {
            if matches!(op, Op::Leaf { .. }) {
                continue;
            }
            let (head, tail) = self.vals.split_at_mut(i * LANES);
            eval_op::<LANES>(op, head, &mut tail[..LANES], params);
        }
    }

    /// Register tangent directions; `order2[k]` requests second-order
    /// coefficients for direction `k`. Leaf seed rows start at zero.
    pub fn set_directions(&mut self, order2: &[bool]) {
        self.t1.clear();
        self.t2.clear();
        self.dir_order2.clear();
        for &o2 in order2 {
            self.t1.push(vec![0.0; self.n_nodes * LANES]);
            self.t2.push(if o2 { vec![0.0; self.n_nodes * LANES] } else { Vec::new() });
            self.dir_order2.push(o2);
        }
    }

    pub fn dir_count(&self) -> usize {
        self.t1.len()
    }

    /// Mutable first-order seed row for a leaf in direction `dir`.
    pub fn tangent_seed_mut(&mut self, dir: usize, id: NodeId) -> &mut [f64] {
        &mut self.t1[dir][id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn tangent1(&self, dir: usize, id: NodeId) -> &[f64] {
        &self.t1[dir][id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn tangent2(&self, dir: usize, id: NodeId) -> &[f64] {
        &self.t2[dir][id.index() * LANES..id.index() * LANES + LANES]
    }

    /// Forward tangent sweep for one direction. Computes first-order
    /// coefficients, and second-order ones when the direction was registered
    /// with `order2`. [`Self::forward`] must have run first.
    pub fn tangent(&mut self, prog: &TapeProgram, params: &[f64], dir: usize) {
        let order2 = self.dir_order2[dir];
        for (i, op) in prog.ops.iter().enumerate() {
            let o = i * LANES;
            match *op {
                Op::Leaf { .. } => continue, // seeded by caller
                Op::Param { .. } | Op::Const(_) => {
                    self.t1[dir][o..o + LANES].fill(0.0);
                    if order2 {
                        self.t2[dir][o..o + LANES].fill(0.0);
                    }
                    continue;
                }
                _ => {}
            }
            let (h1, tl1) = self.t1[dir].split_at_mut(o);
            let z1 = &mut tl1[..LANES];
            match *op {
                Op::Add(a, b) => {
                    for j in 0..LANES {
                        z1[j] = h1[a.index() * LANES + j] + h1[b.index() * LANES + j];
                    }
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for j in 0..LANES {
                            tl2[j] = h2[a.index() * LANES + j] + h2[b.index() * LANES + j];
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for j in 0..LANES {
                        z1[j] = h1[a.index() * LANES + j] - h1[b.index() * LANES + j];
                    }
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for j in 0..LANES {
                            tl2[j] = h2[a.index() * LANES + j] - h2[b.index() * LANES + j];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ai, bi) = (a.index() * LANES, b.index() * LANES);
                    for j in 0..LANES {
                        z1[j] = self.vals[ai + j] * h1[bi + j] + h1[ai + j] * self.vals[bi + j];
                    }
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for j in 0..LANES {
                            tl2[j] = self.vals[ai + j] * h2[bi + j]
                                + h1[ai + j] * h1[bi + j]
                                + h2[ai + j] * self.vals[bi + j];
                        }
                    }
                }
                Op::AddConst(a, _) => {
                    let ai = a.index() * LANES;
                    z1.copy_from_slice(&h1[ai..ai + LANES]);
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        tl2[..LANES].copy_from_slice(&h2[ai..ai + LANES]);
                    }
                }
                Op::MulConst(a, c) => {
                    let ai = a.index() * LANES;
                    for j in 0..LANES {
                        z1[j] = c * h1[ai + j];
                    }
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for j in 0..LANES {
                            tl2[j] = c * h2[ai + j];
                        }
                    }
                }
                Op::Dot { a, b, n } => {
                    let mut acc1 = [0.0; LANES];
                    let mut acc2 = [0.0; LANES];
                    for t in 0..n as usize {
                        let (ai, bi) = ((a.index() + t) * LANES, (b.index() + t) * LANES);
                        for j in 0..LANES {
                            acc1[j] += self.vals[ai + j] * h1[bi + j]
                                + h1[ai + j] * self.vals[bi + j];
                        }
                    }
                    z1.copy_from_slice(&acc1);
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for t in 0..n as usize {
                            let (ai, bi) = ((a.index() + t) * LANES, (b.index() + t) * LANES);
                            for j in 0..LANES {
                                acc2[j] += self.vals[ai + j] * h2[bi + j]
                                    + h1[ai + j] * h1[bi + j]
                                    + h2[ai + j] * self.vals[bi + j];
                            }
                        }
                        tl2[..LANES].copy_from_slice(&acc2);
                    }
                }
                Op::DotParam { p, x, n } => {
                    let mut acc1 = [0.0; LANES];
                    for t in 0..n as usize {
                        let w = params[p as usize + t];
                        let xi = (x.index() + t) * LANES;
                        for j in 0..LANES {
                            acc1[j] += w * h1[xi + j];
                        }
                    }
                    z1.copy_from_slice(&acc1);
                    if order2 {
                        let mut acc2 = [0.0; LANES];
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for t in 0..n as usize {
                            let w = params[p as usize + t];
                            let xi = (x.index() + t) * LANES;
                            for j in 0..LANES {
                                acc2[j] += w * h2[xi + j];
                            }
                        }
                        tl2[..LANES].copy_from_slice(&acc2);
                    }
                }
                Op::AddParam { x, p: _ } => {
                    let xi = x.index() * LANES;
                    z1.copy_from_slice(&h1[xi..xi + LANES]);
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        tl2[..LANES].copy_from_slice(&h2[xi..xi + LANES]);
                    }
                }
                // unary chain rule: z1 = g'(x) x1, z2 = g'(x) x2 + g''(x)/2 x1^2
                Op::Neg(a)
                | Op::Recip(a)
                | Op::Square(a)
                | Op::Sqrt(a)
                | Op::Exp(a)
                | Op::Ln(a)
                | Op::Abs(a)
                | Op::Tanh(a)
                | Op::Softplus(a) => {
                    let ai = a.index() * LANES;
                    if order2 {
                        let (h2, tl2) = self.t2[dir].split_at_mut(o);
                        for j in 0..LANES {
                            let (g1, g2, _) =
                                unary_derivs(op, self.vals[ai + j], self.vals[o + j]);
                            z1[j] = g1 * h1[ai + j];
                            tl2[j] = g1 * h2[ai + j] + 0.5 * g2 * h1[ai + j] * h1[ai + j];
                        }
                    } else {
                        for j in 0..LANES {
                            let (g1, _, _) =
                                unary_derivs(op, self.vals[ai + j], self.vals[o + j]);
                            z1[j] = g1 * h1[ai + j];
                        }
                    }
                }
                Op::Leaf { .. } | Op::Param { .. } | Op::Const(_) => unreachable!(),
            }
        }
    }

    /// Zero adjoint buffers ahead of seeding. Allocates lazily to match the
    /// registered directions.
    pub fn reverse_clear(&mut self) {
        let n = self.n_nodes * LANES;
        self.b0.clear();
        self.b0.resize(n, 0.0);
        self.b1.clear();
        self.b2.clear();
        for &o2 in &self.dir_order2 {
            self.b1.push(vec![0.0; n]);
            self.b2.push(if o2 { vec![0.0; n] } else { Vec::new() });
        }
    }

    pub fn beta0_mut(&mut self, id: NodeId) -> &mut [f64] {
        &mut self.b0[id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn beta1_mut(&mut self, dir: usize, id: NodeId) -> &mut [f64] {
        &mut self.b1[dir][id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn beta2_mut(&mut self, dir: usize, id: NodeId) -> &mut [f64] {
        &mut self.b2[dir][id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn beta0(&self, id: NodeId) -> &[f64] {
        &self.b0[id.index() * LANES..id.index() * LANES + LANES]
    }

    pub fn pgrad(&self) -> &[f64] {
        &self.pgrad
    }

    pub fn pgrad_clear(&mut self) {
        self.pgrad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Adjoint sweep. Propagates the seeded combination of value and tangent
    /// components back to every node; leaf adjoints stay in `b0`, parameter
    /// gradients accumulate into `pgrad` (summed over lanes in lane order).
    ///
    /// With seeds `(s0, s1_k, s2_k)` on an output node, a leaf's `b0` ends up
    /// holding `d/d leaf [ s0·out + Σ_k s1_k·out1_k + Σ_k s2_k·out2_k ]`,
    /// where `out1/out2` are the direction-`k` Taylor coefficients.
    pub fn reverse(&mut self, prog: &TapeProgram, params: &[f64]) {
        let ndirs = self.dir_order2.len();
        for i in (0..prog.len()).rev() {
            let op = prog.ops[i];
            let o = i * LANES;
            match op {
                Op::Leaf { .. } | Op::Const(_) => continue,
                Op::Param { idx } => {
                    let mut s = 0.0;
                    for j in 0..LANES {
                        s += self.b0[o + j];
                    }
                    self.pgrad[idx as usize] += s;
                    continue;
                }
                _ => {}
            }
            // Skip nodes with no incoming adjoint mass. Cheap and common in
            // programs whose auxiliary outputs are not seeded.
            let mut live = self.b0[o..o + LANES].iter().any(|&v| v != 0.0);
            for k in 0..ndirs {
                if live {
                    break;
                }
                live = self.b1[k][o..o + LANES].iter().any(|&v| v != 0.0)
                    || (self.dir_order2[k]
                        && self.b2[k][o..o + LANES].iter().any(|&v| v != 0.0));
            }
            if !live {
                continue;
            }
            match op {
                Op::Add(a, b) => {
                    self.acc_linear(a, o, 1.0, ndirs);
                    self.acc_linear(b, o, 1.0, ndirs);
                }
                Op::Sub(a, b) => {
                    self.acc_linear(a, o, 1.0, ndirs);
                    self.acc_linear(b, o, -1.0, ndirs);
                }
                Op::AddConst(a, _) => self.acc_linear(a, o, 1.0, ndirs),
                Op::MulConst(a, c) => self.acc_linear(a, o, c, ndirs),
                Op::Neg(a) => self.acc_linear(a, o, -1.0, ndirs),
                Op::AddParam { x, p } => {
                    self.acc_linear(x, o, 1.0, ndirs);
                    let mut s = 0.0;
                    for j in 0..LANES {
                        s += self.b0[o + j];
                    }
                    self.pgrad[p as usize] += s;
                }
                Op::Mul(a, b) => {
                    self.acc_product(a, b, o, ndirs);
                    self.acc_product(b, a, o, ndirs);
                }
                Op::Dot { a, b, n } => {
                    for t in 0..n as usize {
                        let at = NodeId(a.0 + t as u32);
                        let bt = NodeId(b.0 + t as u32);
                        self.acc_product(at, bt, o, ndirs);
                        self.acc_product(bt, at, o, ndirs);
                    }
                }
                Op::DotParam { p, x, n } => {
                    for t in 0..n as usize {
                        let xi = (x.index() + t) * LANES;
                        let w = params[p as usize + t];
                        // parameter gradient: full jet contraction with x's jets
                        let mut s = 0.0;
                        for j in 0..LANES {
                            s += self.b0[o + j] * self.vals[xi + j];
                        }
                        for k in 0..ndirs {
                            for j in 0..LANES {
                                s += self.b1[k][o + j] * self.t1[k][xi + j];
                            }
                            if self.dir_order2[k] {
                                for j in 0..LANES {
                                    s += self.b2[k][o + j] * self.t2[k][xi + j];
                                }
                            }
                        }
                        self.pgrad[p as usize + t] += s;
                        // x adjoint: parameter jets are (w, 0, 0)
                        for j in 0..LANES {
                            self.b0[xi + j] += self.b0[o + j] * w;
                        }
                        for k in 0..ndirs {
                            let bk = &mut self.b1[k];
                            for j in 0..LANES {
                                bk[xi + j] += bk[o + j] * w;
                            }
                            if self.dir_order2[k] {
                                let bk2 = &mut self.b2[k];
                                for j in 0..LANES {
                                    bk2[xi + j] += bk2[o + j] * w;
                                }
                            }
                        }
                    }
                }
                Op::Recip(a)
                | Op::Square(a)
                | Op::Sqrt(a)
                | Op::Exp(a)
                | Op::Ln(a)
                | Op::Abs(a)
                | Op::Tanh(a)
                | Op::Softplus(a) => {
                    let ai = a.index() * LANES;
                    for j in 0..LANES {
                        let (g1, g2, g3) = unary_derivs(&op, self.vals[ai + j], self.vals[o + j]);
                        let mut acc0 = self.b0[o + j] * g1;
                        for k in 0..ndirs {
                            let x1 = self.t1[k][ai + j];
                            let bz1 = self.b1[k][o + j];
                            acc0 += bz1 * g2 * x1;
                            self.b1[k][ai + j] += bz1 * g1;
                            if self.dir_order2[k] {
                                let x2 = self.t2[k][ai + j];
                                let bz2 = self.b2[k][o + j];
                                acc0 += bz2 * (g2 * x2 + 0.5 * g3 * x1 * x1);
                                self.b1[k][ai + j] += bz2 * g2 * x1;
                                self.b2[k][ai + j] += bz2 * g1;
                            }
                        }
                        self.b0[ai + j] += acc0;
                    }
                }
                Op::Leaf { .. } | Op::Param { .. } | Op::Const(_) => unreachable!(),
            }
        }
    }

    /// Adjoint of a linear parent: every jet component scales by `c`.
    #[inline]
    fn acc_linear(&mut self, a: NodeId, o: usize, c: f64, ndirs: usize) {
        let ai = a.index() * LANES;
        for j in 0..LANES {
            self.b0[ai + j] += c * self.b0[o + j];
        }
        for k in 0..ndirs {
            let bk = &mut self.b1[k];
            for j in 0..LANES {
                bk[ai + j] += c * bk[o + j];
            }
            if self.dir_order2[k] {
                let bk2 = &mut self.b2[k];
                for j in 0..LANES {
                    bk2[ai + j] += c * bk2[o + j];
                }
            }
        }
    }

    /// Adjoint into factor `a` of a product `z = a*b`: transpose of the jet
    /// product rule against `b`'s jets.
    #[inline]
    fn acc_product(&mut self, a: NodeId, b: NodeId, o: usize, ndirs: usize) {
        let ai = a.index() * LANES;
        let bi = b.index() * LANES;
        for j in 0..LANES {
            let mut acc0 = self.b0[o + j] * self.vals[bi + j];
            for k in 0..ndirs {
                let bz1 = self.b1[k][o + j];
                acc0 += bz1 * self.t1[k][bi + j];
                self.b1[k][ai + j] += bz1 * self.vals[bi + j];
                if self.dir_order2[k] {
                    let bz2 = self.b2[k][o + j];
                    acc0 += bz2 * self.t2[k][bi + j];
                    self.b1[k][ai + j] += bz2 * self.t1[k][bi + j];
                    self.b2[k][ai + j] += bz2 * self.vals[bi + j];
                }
            }
            self.b0[ai + j] += acc0;
        }
    }

    /// Evaluate only the newly appended node (define-by-run support for the
    /// scalar tape).
    pub(crate) fn eval_incremental(
        &mut self,
        prog: &TapeProgram,
        id: NodeId,
        params: &[f64],
    ) -> f64 {
        self.n_nodes = prog.len();
        self.vals.resize(self.n_nodes * LANES, 0.0);
        let i = id.index();
        let op = prog.ops[i];
        if !matches!(op, Op::Leaf { .. }) {
            let (head, tail) = self.vals.split_at_mut(i * LANES);
            eval_op::<LANES>(&op, head, &mut tail[..LANES], params);
        }
        self.vals[i * LANES]
    }

    pub(crate) fn push_leaf_value(&mut self, prog: &TapeProgram, id: NodeId, v: f64) {
        self.n_nodes = prog.len();
        self.vals.resize(self.n_nodes * LANES, 0.0);
        self.vals[id.index() * LANES..id.index() * LANES + LANES].fill(v);
    }

    /// Check that every cached value is finite; returns the first offender.
    pub fn check_finite(&self) -> Result<(), CoreError> {
        for (i, v) in self.vals.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    what: "tape evaluation",
                    detail: alloc::format!("node {} lane {}", i / LANES, i % LANES),
                });
            }
        }
        Ok(())
    }
}
