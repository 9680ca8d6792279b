//! Problem-definition interface: dynamics, costs, domain, and samplers.
//! Dynamics and costs are emitted as tape nodes so every loss stays
//! differentiable with respect to both the design parameter and the network
//! weights; samplers produce the collocation batches.

mod augmented;
mod lqr;
mod planar;

pub use augmented::AugmentedProblem;
pub use lqr::StochasticLqrProblem;
pub use planar::PlanarProblem;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::autodiff::{NodeId, TapeProgram};
use crate::linalg::Mat;

/// Row-major batch of state vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSamples {
    dim: usize,
    data: Vec<f64>,
}

impl StateSamples {
    pub fn zeros(count: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; count * dim] }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len() % dim.max(1), 0);
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Matrix of tape nodes (e.g. the control or diffusion matrix at a sample).
#[derive(Debug, Clone)]
pub struct NodeMat {
    rows: usize,
    cols: usize,
    data: Vec<NodeId>,
}

impl NodeMat {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<NodeId>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> NodeId {
        self.data[i * self.cols + j]
    }
}

/// Weights of the composite design objective: `plant * J_p + control * E[V]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub plant: f64,
    pub control: f64,
}

/// A control co-design problem: controlled diffusion dynamics on a bounded
/// domain, quadratic-in-control running cost, boundary/constraint cost,
/// plant cost, and the samplers used for collocation.
///
/// Implementations must be immutable after construction; evaluation code
/// shares them across worker threads.
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn design_dim(&self) -> usize;
    /// Number of diffusion (Brownian) columns; 0 means deterministic
    /// dynamics and the generator's trace term is skipped entirely.
    fn noise_dim(&self) -> usize;
    fn discount(&self) -> f64;
    fn weights(&self) -> CostWeights;
    /// Quadratic control weight; symmetric positive definite, validated at
    /// construction together with its inverse.
    fn control_weight(&self) -> &Mat;
    fn control_weight_inv(&self) -> &Mat;

    /// Drift vector f(x; rho) as tape nodes.
    fn emit_drift(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> Vec<NodeId>;
    /// Control matrix g(x; rho), state_dim x control_dim.
    fn emit_control_matrix(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeMat;
    /// Diffusion matrix, state_dim x noise_dim; `None` encodes sigma = 0.
    fn emit_diffusion(
        &self,
        prog: &mut TapeProgram,
        rho: &[NodeId],
        x: &[NodeId],
    ) -> Option<NodeMat>;
    /// State-dependent part of the running cost (the control part is always
    /// `u^T R u`).
    fn emit_running_cost(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeId;
    /// Boundary / constraint-set cost M(x; rho).
    fn emit_boundary_cost(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeId;
    /// Plant cost J_p(rho).
    fn emit_plant_cost(&self, prog: &mut TapeProgram, rho: &[NodeId]) -> NodeId;

    /// I.i.d. samples from the interior of the domain.
    fn sample_interior(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples;
    /// Samples from the boundary or declared constraint point set.
    fn sample_boundary(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples;
    /// Samples from the design-loss weighting distribution. Defaults to the
    /// interior distribution, which is the built-in problems' choice.
    fn sample_design(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        self.sample_interior(count, rng)
    }

    fn contains(&self, x: &[f64]) -> bool;
    /// Signed domain indicator: negative inside, zero on the boundary,
    /// positive outside. Used for exit detection and backtracking in
    /// simulation.
    fn boundary_gap(&self, x: &[f64]) -> f64;

    /// Whether a design value is inside the problem's valid range given the
    /// previous value (e.g. the LQR gain formula breaks down when the design
    /// parameter reaches or crosses zero).
    fn rho_valid(&self, rho: &[f64], rho_prev: &[f64]) -> bool {
        let _ = rho_prev;
        rho.iter().all(|r| r.is_finite())
    }
}

/// Uniform sample from an axis-aligned box.
pub(crate) fn fill_box_uniform(out: &mut [f64], half_width: f64, rng: &mut dyn RngCore) {
    for v in out.iter_mut() {
        *v = half_width * (2.0 * rng.gen::<f64>() - 1.0);
    }
}

/// Uniform sample from a ball of the given radius: normalized Gaussian
/// direction scaled by `R * U^(1/d)`.
pub(crate) fn fill_ball_uniform(out: &mut [f64], radius: f64, rng: &mut dyn RngCore) {
    let d = out.len();
    fill_sphere_uniform(out, 1.0, rng);
    let r = radius * libm::pow(rng.gen::<f64>(), 1.0 / d as f64);
    out.iter_mut().for_each(|v| *v *= r);
}

/// Uniform sample from a sphere of the given radius (normalized Gaussian).
pub(crate) fn fill_sphere_uniform(out: &mut [f64], radius: f64, rng: &mut dyn RngCore) {
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm_sq += g * g;
        }
        if norm_sq > 1e-24 {
            let s = radius / libm::sqrt(norm_sq);
            out.iter_mut().for_each(|v| *v *= s);
            return;
        }
    }
}
