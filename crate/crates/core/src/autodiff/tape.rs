//! Define-by-run scalar tape: the single-sample front end over the shared
//! program/runner machinery. Each arithmetic call appends one node and
//! caches its value immediately.

use alloc::vec::Vec;

use super::gradient::GradientVector;
use super::program::{NodeId, TapeProgram};
use super::runner::BatchRunner;
use crate::error::CoreError;

/// A dynamic computation graph over scalars, rebuilt per evaluation.
/// Leaves are the differentiable inputs; [`Tape::backward`] returns the
/// derivative of a scalar output with respect to every leaf.
pub struct Tape {
    prog: TapeProgram,
    run: BatchRunner<1>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

macro_rules! unary_method {
    ($name:ident) => {
        pub fn $name(&mut self, a: NodeId) -> NodeId {
            let id = self.prog.$name(a);
            self.run.eval_incremental(&self.prog, id, &[]);
            id
        }
    };
}

impl Tape {
    pub fn new() -> Self {
        Self { prog: TapeProgram::new(), run: BatchRunner::new() }
    }

    pub fn len(&self) -> usize {
        self.prog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prog.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.prog.leaf_count()
    }

    pub fn leaf_nodes(&self) -> &[NodeId] {
        self.prog.leaf_nodes()
    }

    /// Register a differentiable input with the given value.
    pub fn leaf(&mut self, v: f64) -> NodeId {
        let id = self.prog.leaf();
        self.run.push_leaf_value(&self.prog, id, v);
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        let id = self.prog.constant(v);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let id = self.prog.add(a, b);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let id = self.prog.sub(a, b);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let id = self.prog.mul(a, b);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let r = self.recip(b);
        self.mul(a, r)
    }

    unary_method!(neg);
    unary_method!(recip);
    unary_method!(square);
    unary_method!(sqrt);
    unary_method!(exp);
    unary_method!(ln);
    unary_method!(abs);
    unary_method!(tanh);
    unary_method!(softplus);

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let id = self.prog.add_const(a, c);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let id = self.prog.mul_const(a, c);
        self.run.eval_incremental(&self.prog, id, &[]);
        id
    }

    /// Dot product of two equally long node slices.
    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        let before = self.prog.len();
        let id = self.prog.dot(a, b);
        // a non-contiguous dot lowers to several nodes; evaluate them all
        for i in before..self.prog.len() {
            self.run.eval_incremental(&self.prog, NodeId(i as u32), &[]);
        }
        id
    }

    pub fn sum_of_squares(&mut self, xs: &[NodeId]) -> NodeId {
        let before = self.prog.len();
        let id = self.prog.sum_of_squares(xs);
        for i in before..self.prog.len() {
            self.run.eval_incremental(&self.prog, NodeId(i as u32), &[]);
        }
        id
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.run.values(id)[0]
    }

    fn check_node(&self, id: NodeId) -> Result<(), CoreError> {
        if id.index() >= self.prog.len() {
            return Err(CoreError::InvalidNode { node: id.index(), len: self.prog.len() });
        }
        Ok(())
    }

    /// Derivative of the scalar `output` with respect to every leaf, in
    /// registration order. Leaves that do not influence the output get an
    /// exact zero.
    pub fn backward(&mut self, output: NodeId) -> Result<GradientVector, CoreError> {
        self.check_node(output)?;
        self.run.set_directions(&[]);
        self.run.reverse_clear();
        self.run.beta0_mut(output)[0] = 1.0;
        self.run.reverse(&self.prog, &[]);
        let grads: Vec<f64> =
            self.prog.leaf_nodes().iter().map(|&id| self.run.beta0(id)[0]).collect();
        Ok(GradientVector::from_entries(grads))
    }

    /// Hessian-vector product of `output` with respect to the leaves:
    /// one forward-tangent pass seeded with `v`, then an adjoint pass over
    /// the tangent component. Returns one entry per leaf.
    pub fn hvp(&mut self, output: NodeId, v: &[f64]) -> Result<Vec<f64>, CoreError> {
        self.check_node(output)?;
        if v.len() != self.leaf_count() {
            return Err(CoreError::DimensionMismatch {
                expected: self.leaf_count(),
                got: v.len(),
                what: "hvp direction",
            });
        }
        self.run.set_directions(&[false]);
        let leaves: Vec<NodeId> = self.prog.leaf_nodes().to_vec();
        for (i, &id) in leaves.iter().enumerate() {
            self.run.tangent_seed_mut(0, id)[0] = v[i];
        }
        self.run.tangent(&self.prog, &[], 0);
        self.run.reverse_clear();
        self.run.beta1_mut(0, output)[0] = 1.0;
        self.run.reverse(&self.prog, &[]);
        Ok(leaves.iter().map(|&id| self.run.beta0(id)[0]).collect())
    }

    /// Directional first and second Taylor coefficients of `output` along
    /// `v`: `(v . grad, 0.5 v^T H v)`.
    pub fn directional_jet(&mut self, output: NodeId, v: &[f64]) -> Result<(f64, f64), CoreError> {
        self.check_node(output)?;
        self.run.set_directions(&[true]);
        let leaves: Vec<NodeId> = self.prog.leaf_nodes().to_vec();
        for (i, &id) in leaves.iter().enumerate() {
            self.run.tangent_seed_mut(0, id)[0] = v[i];
        }
        self.run.tangent(&self.prog, &[], 0);
        Ok((self.run.tangent1(0, output)[0], self.run.tangent2(0, output)[0]))
    }

    /// Recompute every cached value from the recorded operations. Exists to
    /// check the replay invariant; returns the recomputed values.
    pub fn replay_values(&self) -> Vec<f64> {
        let mut run = BatchRunner::<1>::new();
        run.prepare(&self.prog);
        for &id in self.prog.leaf_nodes() {
            run.values_mut(id)[0] = self.value(id);
        }
        run.forward(&self.prog, &[]);
        (0..self.prog.len()).map(|i| run.values(NodeId(i as u32))[0]).collect()
    }

    pub fn program(&self) -> &TapeProgram {
        &self.prog
    }
}
