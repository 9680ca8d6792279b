//! Deterministic planar regulator: cubic-damped two-state dynamics with a
//! scalar input whose gain is the design parameter. The domain is the unit
//! box; the value constraint is the single equilibrium point at the origin.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{NodeId, TapeProgram};
use crate::linalg::Mat;

use super::{fill_box_uniform, CostWeights, NodeMat, Problem, StateSamples};

/// Planar benchmark:
/// f = (-x1^3 - x2, x1 + x2), g = (0, rho)^T, sigma = 0,
/// running cost p*|x|^2 + q*u^2, undiscounted, J_p = |rho|.
#[derive(Debug, Clone)]
pub struct PlanarProblem {
    state_cost: f64,
    control_cost: f64,
    weights: CostWeights,
    r_mat: Mat,
    r_inv: Mat,
}

impl Default for PlanarProblem {
    /// The reference setting: p = q = 1, w_p = 1, w_c = 4.
    fn default() -> Self {
        Self::new(1.0, 1.0, CostWeights { plant: 1.0, control: 4.0 })
    }
}

impl PlanarProblem {
    pub fn new(state_cost: f64, control_cost: f64, weights: CostWeights) -> Self {
        assert!(state_cost > 0.0 && control_cost > 0.0, "cost coefficients must be positive");
        Self {
            state_cost,
            control_cost,
            weights,
            r_mat: Mat::scaled_identity(1, control_cost),
            r_inv: Mat::scaled_identity(1, 1.0 / control_cost),
        }
    }

    pub fn state_cost(&self) -> f64 {
        self.state_cost
    }

    pub fn control_cost(&self) -> f64 {
        self.control_cost
    }
}

impl Problem for PlanarProblem {
    fn name(&self) -> &'static str {
        "planar"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn discount(&self) -> f64 {
        0.0
    }

    fn weights(&self) -> CostWeights {
        self.weights
    }

    fn control_weight(&self) -> &Mat {
        &self.r_mat
    }

    fn control_weight_inv(&self) -> &Mat {
        &self.r_inv
    }

    fn emit_drift(&self, prog: &mut TapeProgram, _rho: &[NodeId], x: &[NodeId]) -> Vec<NodeId> {
        let x1_sq = prog.square(x[0]);
        let x1_cubed = prog.mul(x1_sq, x[0]);
        let sum = prog.add(x1_cubed, x[1]);
        let f1 = prog.neg(sum);
        let f2 = prog.add(x[0], x[1]);
        vec![f1, f2]
    }

    fn emit_control_matrix(
        &self,
        prog: &mut TapeProgram,
        rho: &[NodeId],
        _x: &[NodeId],
    ) -> NodeMat {
        let zero = prog.constant(0.0);
        NodeMat::from_vec(2, 1, vec![zero, rho[0]])
    }

    fn emit_diffusion(
        &self,
        _prog: &mut TapeProgram,
        _rho: &[NodeId],
        _x: &[NodeId],
    ) -> Option<NodeMat> {
        None
    }

    fn emit_running_cost(&self, prog: &mut TapeProgram, _rho: &[NodeId], x: &[NodeId]) -> NodeId {
        let sq = prog.sum_of_squares(x);
        prog.mul_const(sq, self.state_cost)
    }

    fn emit_boundary_cost(
        &self,
        prog: &mut TapeProgram,
        _rho: &[NodeId],
        _x: &[NodeId],
    ) -> NodeId {
        // value pinned to zero at the origin constraint point
        prog.constant(0.0)
    }

    fn emit_plant_cost(&self, prog: &mut TapeProgram, rho: &[NodeId]) -> NodeId {
        prog.abs(rho[0])
    }

    fn sample_interior(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let mut out = StateSamples::zeros(count, 2);
        for i in 0..count {
            fill_box_uniform(out.row_mut(i), 1.0, rng);
        }
        out
    }

    fn sample_boundary(&self, count: usize, _rng: &mut dyn RngCore) -> StateSamples {
        // the constraint set is the single point at the origin
        StateSamples::zeros(count, 2)
    }

    fn contains(&self, x: &[f64]) -> bool {
        x[0].abs() <= 1.0 && x[1].abs() <= 1.0
    }

    fn boundary_gap(&self, x: &[f64]) -> f64 {
        x[0].abs().max(x[1].abs()) - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn drift_vanishes_at_origin() {
        let p = PlanarProblem::default();
        let mut prog = TapeProgram::new();
        let rho = prog.leaf();
        let x0 = prog.leaf();
        let x1 = prog.leaf();
        let f = p.emit_drift(&mut prog, &[rho], &[x0, x1]);
        let mut run = crate::autodiff::BatchRunner::<1>::new();
        run.prepare(&prog);
        run.forward(&prog, &[]);
        for fi in f {
            assert_eq!(run.values(fi)[0], 0.0, "f(0) must be the equilibrium");
        }
    }

    #[test]
    fn interior_samples_stay_in_box() {
        let p = PlanarProblem::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = p.sample_interior(500, &mut rng);
        for row in xs.rows() {
            assert!(p.contains(row), "sample {row:?} outside the unit box");
        }
    }

    #[test]
    fn boundary_samples_are_exactly_the_origin() {
        let p = PlanarProblem::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = p.sample_boundary(17, &mut rng);
        assert_eq!(xs.len(), 17);
        for row in xs.rows() {
            assert_eq!(row, [0.0, 0.0]);
        }
    }
}
