//! Append-only operation list shared by the scalar tape and the batched
//! evaluator. A program is pure structure: leaf and parameter slots plus the
//! arithmetic that combines them. Values, tangents, and adjoints live in the
//! runner so the same program can be replayed over many samples.

use alloc::vec::Vec;

/// Index of a node on a tape program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Rebuild an id from a raw index. Useful for iterating a program's
    /// nodes; ids are only meaningful for the tape they came from.
    #[inline]
    pub fn from_raw(index: u32) -> Self {
        NodeId(index)
    }
}

/// One recorded operation. Parents always precede the node itself, so a
/// single forward pass in index order reproduces every cached value.
///
/// `Dot` and the `*Param` variants exist for the network's sake: a dense
/// layer becomes one node per neuron instead of one node per weight, which
/// is what makes tape replay affordable inside the training loop.
#[derive(Debug, Clone, Copy)]
pub enum Op {
    /// Per-sample input; the runner binds one value per lane.
    Leaf { slot: u32 },
    /// Lane-uniform differentiable parameter (network weight, nominal design
    /// value). Gradients accumulate into the runner's parameter-gradient
    /// buffer rather than a per-lane adjoint.
    Param { idx: u32 },
    Const(f64),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    /// 1/x.
    Recip(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Abs(NodeId),
    Tanh(NodeId),
    /// ln(1 + e^x), evaluated in its overflow-safe form.
    Softplus(NodeId),
    AddConst(NodeId, f64),
    MulConst(NodeId, f64),
    /// Sum of products over two contiguous node ranges of length `n`.
    Dot { a: NodeId, b: NodeId, n: u32 },
    /// Sum of `params[p..p+n] * nodes[x..x+n]`.
    DotParam { p: u32, x: NodeId, n: u32 },
    /// `nodes[x] + params[p]`.
    AddParam { x: NodeId, p: u32 },
}

/// An append-only computation graph in topological order.
#[derive(Debug, Clone, Default)]
pub struct TapeProgram {
    pub(crate) ops: Vec<Op>,
    pub(crate) leaf_nodes: Vec<NodeId>,
    pub(crate) n_params: u32,
}

impl TapeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    pub fn leaf_nodes(&self) -> &[NodeId] {
        &self.leaf_nodes
    }

    pub fn param_count(&self) -> usize {
        self.n_params as usize
    }

    #[inline]
    fn push(&mut self, op: Op) -> NodeId {
        let id = NodeId(self.ops.len() as u32);
        self.ops.push(op);
        id
    }

    /// Register a per-sample input slot. Slots are numbered in registration
    /// order; the runner binds one value per slot per lane.
    pub fn leaf(&mut self) -> NodeId {
        let slot = self.leaf_nodes.len() as u32;
        let id = self.push(Op::Leaf { slot });
        self.leaf_nodes.push(id);
        id
    }

    /// Register `n` contiguous leaves and return the first id.
    pub fn leaves(&mut self, n: usize) -> NodeId {
        let first = self.leaf();
        for _ in 1..n {
            self.leaf();
        }
        first
    }

    /// Reference a lane-uniform parameter as a node.
    pub fn param(&mut self, idx: u32) -> NodeId {
        self.n_params = self.n_params.max(idx + 1);
        self.push(Op::Param { idx })
    }

    /// Reserve parameter slots without materializing nodes (used by fused
    /// parameter ops).
    pub fn reserve_params(&mut self, count: u32) -> u32 {
        let base = self.n_params;
        self.n_params += count;
        base
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Recip(a))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let r = self.recip(b);
        self.mul(a, r)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Square(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sqrt(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Ln(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softplus(a))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::AddConst(a, c))
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::MulConst(a, c))
    }

    /// Dot product of two node slices. Emits a fused node when both slices
    /// are contiguous id ranges, otherwise a mul/add chain.
    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        assert_eq!(a.len(), b.len(), "dot operands must have equal length");
        assert!(!a.is_empty(), "dot of empty slices");
        if contiguous(a) && contiguous(b) {
            return self.push(Op::Dot { a: a[0], b: b[0], n: a.len() as u32 });
        }
        let mut acc = self.mul(a[0], b[0]);
        for i in 1..a.len() {
            let t = self.mul(a[i], b[i]);
            acc = self.add(acc, t);
        }
        acc
    }

    /// Fused dot of a contiguous parameter range against a contiguous node
    /// range starting at `x`.
    pub fn dot_param(&mut self, p: u32, x: NodeId, n: u32) -> NodeId {
        debug_assert!(p + n <= self.n_params);
        self.push(Op::DotParam { p, x, n })
    }

    pub fn add_param(&mut self, x: NodeId, p: u32) -> NodeId {
        debug_assert!(p < self.n_params);
        self.push(Op::AddParam { x, p })
    }

    /// Sum of squares of a node slice.
    pub fn sum_of_squares(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let mut acc = self.square(xs[0]);
        for &x in &xs[1..] {
            let s = self.square(x);
            acc = self.add(acc, s);
        }
        acc
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.ops[id.index()]
    }
}

fn contiguous(ids: &[NodeId]) -> bool {
    ids.windows(2).all(|w| w[1].0 == w[0].0 + 1)
}
