//! Uncertain model parameters as extra state dimensions. Appends
//! zero-drift, zero-diffusion coordinates whose distribution is a declared
//! marginal; at each fixed value of the extra coordinates the dynamics and
//! costs reduce to the wrapped problem's.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{NodeId, TapeProgram};
use crate::linalg::Mat;

use super::{CostWeights, NodeMat, Problem, StateSamples};

type MarginalSampler = Box<dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync>;

/// Wraps a problem, appending `extra_dim` uncertain-parameter coordinates
/// sampled from `marginal`. The wrapped problem's dynamics and costs see
/// only the original state block.
pub struct AugmentedProblem<P: Problem> {
    inner: P,
    extra_dim: usize,
    marginal: MarginalSampler,
}

impl<P: Problem> AugmentedProblem<P> {
    pub fn new(
        inner: P,
        extra_dim: usize,
        marginal: impl Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        assert!(extra_dim >= 1);
        Self { inner, extra_dim, marginal: Box::new(marginal) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn base_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn append_marginal(&self, samples: &mut StateSamples, rng: &mut dyn RngCore) {
        let n = self.base_dim();
        for i in 0..samples.len() {
            (self.marginal)(rng, &mut samples.row_mut(i)[n..]);
        }
    }

    fn widen(&self, inner: StateSamples, rng: &mut dyn RngCore) -> StateSamples {
        let n = self.base_dim();
        let mut out = StateSamples::zeros(inner.len(), n + self.extra_dim);
        for i in 0..inner.len() {
            out.row_mut(i)[..n].copy_from_slice(inner.row(i));
        }
        self.append_marginal(&mut out, rng);
        out
    }
}

impl<P: Problem> Problem for AugmentedProblem<P> {
    fn name(&self) -> &'static str {
        "augmented"
    }

    fn state_dim(&self) -> usize {
        self.base_dim() + self.extra_dim
    }

    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }

    fn design_dim(&self) -> usize {
        self.inner.design_dim()
    }

    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn weights(&self) -> CostWeights {
        self.inner.weights()
    }

    fn control_weight(&self) -> &Mat {
        self.inner.control_weight()
    }

    fn control_weight_inv(&self) -> &Mat {
        self.inner.control_weight_inv()
    }

    fn emit_drift(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> Vec<NodeId> {
        let n = self.base_dim();
        let mut f = self.inner.emit_drift(prog, rho, &x[..n]);
        let zero = prog.constant(0.0);
        f.extend(core::iter::repeat(zero).take(self.extra_dim));
        f
    }

    fn emit_control_matrix(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeMat {
        let n = self.base_dim();
        let g = self.inner.emit_control_matrix(prog, rho, &x[..n]);
        let zero = prog.constant(0.0);
        let m = g.cols();
        let mut data = Vec::with_capacity((n + self.extra_dim) * m);
        for i in 0..n {
            for j in 0..m {
                data.push(g.get(i, j));
            }
        }
        data.extend(core::iter::repeat(zero).take(self.extra_dim * m));
        NodeMat::from_vec(n + self.extra_dim, m, data)
    }

    fn emit_diffusion(
        &self,
        prog: &mut TapeProgram,
        rho: &[NodeId],
        x: &[NodeId],
    ) -> Option<NodeMat> {
        let n = self.base_dim();
        let sigma = self.inner.emit_diffusion(prog, rho, &x[..n])?;
        let zero = prog.constant(0.0);
        let w = sigma.cols();
        let mut data = Vec::with_capacity((n + self.extra_dim) * w);
        for i in 0..n {
            for j in 0..w {
                data.push(sigma.get(i, j));
            }
        }
        data.extend(core::iter::repeat(zero).take(self.extra_dim * w));
        Some(NodeMat::from_vec(n + self.extra_dim, w, data))
    }

    fn emit_running_cost(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeId {
        let n = self.base_dim();
        self.inner.emit_running_cost(prog, rho, &x[..n])
    }

    fn emit_boundary_cost(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeId {
        let n = self.base_dim();
        self.inner.emit_boundary_cost(prog, rho, &x[..n])
    }

    fn emit_plant_cost(&self, prog: &mut TapeProgram, rho: &[NodeId]) -> NodeId {
        self.inner.emit_plant_cost(prog, rho)
    }

    fn sample_interior(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let inner = self.inner.sample_interior(count, rng);
        self.widen(inner, rng)
    }

    fn sample_boundary(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let inner = self.inner.sample_boundary(count, rng);
        self.widen(inner, rng)
    }

    fn sample_design(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let inner = self.inner.sample_design(count, rng);
        self.widen(inner, rng)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.inner.contains(&x[..self.base_dim()])
    }

    fn boundary_gap(&self, x: &[f64]) -> f64 {
        self.inner.boundary_gap(&x[..self.base_dim()])
    }

    fn rho_valid(&self, rho: &[f64], rho_prev: &[f64]) -> bool {
        self.inner.rho_valid(rho, rho_prev)
    }
}
