//! Stochastic linear-quadratic regulator on a ball, with known closed-form
//! value function. Dynamics are pure controlled diffusion:
//! drift rho*u, diffusion sqrt(2) I, running cost
//! p|x|^2 + q|u|^2 - 2 k d with exit cost k R^2 on the sphere, where the
//! constant k(rho) makes the quadratic k|x|^2 the exact solution.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{NodeId, TapeProgram};
use crate::error::CoreError;
use crate::linalg::Mat;

use super::{fill_ball_uniform, fill_sphere_uniform, CostWeights, NodeMat, Problem, StateSamples};

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Configurable stochastic LQR instance. Defaults follow the reference
/// setting p = q = gamma = 1 with w_p = w_c = 1.
#[derive(Debug, Clone)]
pub struct StochasticLqrProblem {
    dim: usize,
    radius: f64,
    state_cost: f64,
    control_cost: f64,
    discount: f64,
    weights: CostWeights,
    r_mat: Mat,
    r_inv: Mat,
}

impl StochasticLqrProblem {
    pub fn new(
        dim: usize,
        radius: f64,
        state_cost: f64,
        control_cost: f64,
        discount: f64,
        weights: CostWeights,
    ) -> Result<Self, CoreError> {
        if dim == 0 {
            return Err(CoreError::InvalidConfig("lqr dimension must be >= 1".into()));
        }
        if radius <= 0.0 {
            return Err(CoreError::InvalidConfig("lqr radius must be positive".into()));
        }
        if state_cost <= 0.0 || control_cost <= 0.0 {
            return Err(CoreError::InvalidConfig("lqr cost coefficients must be positive".into()));
        }
        if discount < 0.0 {
            return Err(CoreError::InvalidConfig("discount must be nonnegative".into()));
        }
        Ok(Self {
            dim,
            radius,
            state_cost,
            control_cost,
            discount,
            weights,
            r_mat: Mat::scaled_identity(dim, control_cost),
            r_inv: Mat::scaled_identity(dim, 1.0 / control_cost),
        })
    }

    /// Standard instance with p = q = gamma = 1, w_p = w_c = 1.
    pub fn standard(dim: usize, radius: f64) -> Result<Self, CoreError> {
        Self::new(dim, radius, 1.0, 1.0, 1.0, CostWeights { plant: 1.0, control: 1.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn state_cost(&self) -> f64 {
        self.state_cost
    }

    pub fn control_cost(&self) -> f64 {
        self.control_cost
    }

    /// Value-function coefficient
    /// k = (sqrt(q^2 g^2 + 4 p q rho^2) - g q) / (2 rho^2).
    /// Singular at rho = 0, which training treats as a run failure.
    pub fn gain_coefficient(&self, rho: f64) -> Result<f64, CoreError> {
        if rho == 0.0 || !rho.is_finite() {
            return Err(CoreError::OutOfDomain(alloc::format!(
                "lqr gain coefficient undefined at rho = {rho}"
            )));
        }
        let (p, q, g) = (self.state_cost, self.control_cost, self.discount);
        let s = libm::sqrt(q * q * g * g + 4.0 * p * q * rho * rho);
        Ok((s - g * q) / (2.0 * rho * rho))
    }

    /// Exact value function k(rho) |x|^2.
    pub fn exact_value(&self, rho: f64, x: &[f64]) -> Result<f64, CoreError> {
        let k = self.gain_coefficient(rho)?;
        Ok(k * x.iter().map(|v| v * v).sum::<f64>())
    }

    /// Exact feedback control -k rho x / q.
    pub fn exact_control(&self, rho: f64, x: &[f64]) -> Result<Vec<f64>, CoreError> {
        let k = self.gain_coefficient(rho)?;
        let c = -k * rho / self.control_cost;
        Ok(x.iter().map(|v| c * v).collect())
    }

    /// Closed-form design objective
    /// J(rho) = w_p |rho| + w_c k(rho) d R^2 / (d + 2)
    /// (the second factor is the uniform-ball second moment).
    pub fn design_objective(&self, rho: f64) -> Result<f64, CoreError> {
        let k = self.gain_coefficient(rho)?;
        let moment = self.dim as f64 * self.radius * self.radius / (self.dim as f64 + 2.0);
        Ok(self.weights.plant * libm::fabs(rho) + self.weights.control * k * moment)
    }

    /// k(rho) as tape nodes so design derivatives flow through the running
    /// and boundary costs (and the analytic plug-in value).
    pub fn emit_gain_coefficient(&self, prog: &mut TapeProgram, rho: NodeId) -> NodeId {
        let (p, q, g) = (self.state_cost, self.control_cost, self.discount);
        let rho_sq = prog.square(rho);
        let inner = prog.mul_const(rho_sq, 4.0 * p * q);
        let inner = prog.add_const(inner, q * q * g * g);
        let s = prog.sqrt(inner);
        let num = prog.add_const(s, -g * q);
        let two_rho_sq = prog.mul_const(rho_sq, 2.0);
        let den_inv = prog.recip(two_rho_sq);
        prog.mul(num, den_inv)
    }
}

impl Problem for StochasticLqrProblem {
    fn name(&self) -> &'static str {
        "lqr"
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn discount(&self) -> f64 {
        self.discount
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

    fn emit_drift(&self, prog: &mut TapeProgram, _rho: &[NodeId], _x: &[NodeId]) -> Vec<NodeId> {
        let zero = prog.constant(0.0);
        vec![zero; self.dim]
    }

    fn emit_control_matrix(
        &self,
        prog: &mut TapeProgram,
        rho: &[NodeId],
        _x: &[NodeId],
    ) -> NodeMat {
        let zero = prog.constant(0.0);
        let mut data = vec![zero; self.dim * self.dim];
        for i in 0..self.dim {
            data[i * self.dim + i] = rho[0];
        }
        NodeMat::from_vec(self.dim, self.dim, data)
    }

    fn emit_diffusion(
        &self,
        prog: &mut TapeProgram,
        _rho: &[NodeId],
        _x: &[NodeId],
    ) -> Option<NodeMat> {
        let zero = prog.constant(0.0);
        let root2 = prog.constant(SQRT_2);
        let mut data = vec![zero; self.dim * self.dim];
        for i in 0..self.dim {
            data[i * self.dim + i] = root2;
        }
        Some(NodeMat::from_vec(self.dim, self.dim, data))
    }

    fn emit_running_cost(&self, prog: &mut TapeProgram, rho: &[NodeId], x: &[NodeId]) -> NodeId {
        // p |x|^2 - 2 k(rho) d; the shift depends on the design parameter,
        // so it must stay on the tape.
        let sq = prog.sum_of_squares(x);
        let state_term = prog.mul_const(sq, self.state_cost);
        let k = self.emit_gain_coefficient(prog, rho[0]);
        let shift = prog.mul_const(k, 2.0 * self.dim as f64);
        prog.sub(state_term, shift)
    }

    fn emit_boundary_cost(
        &self,
        prog: &mut TapeProgram,
        rho: &[NodeId],
        _x: &[NodeId],
    ) -> NodeId {
        let k = self.emit_gain_coefficient(prog, rho[0]);
        prog.mul_const(k, self.radius * self.radius)
    }

    fn emit_plant_cost(&self, prog: &mut TapeProgram, rho: &[NodeId]) -> NodeId {
        prog.abs(rho[0])
    }

    fn sample_interior(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let mut out = StateSamples::zeros(count, self.dim);
        for i in 0..count {
            fill_ball_uniform(out.row_mut(i), self.radius, rng);
        }
        out
    }

    fn sample_boundary(&self, count: usize, rng: &mut dyn RngCore) -> StateSamples {
        let mut out = StateSamples::zeros(count, self.dim);
        for i in 0..count {
            fill_sphere_uniform(out.row_mut(i), self.radius, rng);
        }
        out
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius
    }

    fn boundary_gap(&self, x: &[f64]) -> f64 {
        libm::sqrt(x.iter().map(|v| v * v).sum::<f64>()) - self.radius
    }

    fn rho_valid(&self, rho: &[f64], rho_prev: &[f64]) -> bool {
        // the gain formula is singular at zero; a sign change means the
        // update jumped across the singularity
        rho.iter().zip(rho_prev).all(|(r, prev)| {
            r.is_finite() && libm::fabs(*r) >= 1e-6 && r.signum() == prev.signum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gain_matches_golden_ratio_case() {
        let p = StochasticLqrProblem::standard(5, 2.0).unwrap();
        let k = p.gain_coefficient(1.0).unwrap();
        assert!((k - 0.618033988749895).abs() < 1e-12, "k(1) = (sqrt5-1)/2, got {k}");
        assert!((k * k + k - 1.0).abs() < 1e-12, "k must satisfy k^2 + k - 1 = 0");
    }

    #[test]
    fn gain_identity_holds_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let rho = 0.2 + 2.8 * rng.gen::<f64>();
            let p = 0.2 + 2.0 * rng.gen::<f64>();
            let q = 0.2 + 2.0 * rng.gen::<f64>();
            let g = 2.0 * rng.gen::<f64>();
            let prob = StochasticLqrProblem::new(
                3,
                1.5,
                p,
                q,
                g,
                CostWeights { plant: 1.0, control: 1.0 },
            )
            .unwrap();
            let k = prob.gain_coefficient(rho).unwrap();
            let residual = k * k * rho * rho / q + g * k - p;
            assert!(residual.abs() <= 1e-10, "identity residual {residual} too large");
            assert!(k > 0.0);
        }
    }

    #[test]
    fn gain_errors_at_zero() {
        let p = StochasticLqrProblem::standard(2, 2.0).unwrap();
        assert!(p.gain_coefficient(0.0).is_err());
        assert!(p.exact_value(0.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn exact_value_and_control_examples() {
        let p = StochasticLqrProblem::standard(3, 2.0).unwrap();
        assert_eq!(p.exact_value(1.0, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let v = p.exact_value(1.0, &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.618033988749895).abs() < 1e-12);
        let u = p.exact_control(1.0, &[1.0, 0.0, 0.0]).unwrap();
        assert!((u[0] + 0.618033988749895).abs() < 1e-12);
        assert_eq!(u[1], 0.0);
        // control opposes the state for positive rho
        let x = [0.3, -0.4, 0.9];
        let u = p.exact_control(1.3, &x).unwrap();
        for (ui, xi) in u.iter().zip(&x) {
            assert!(ui * xi <= 0.0);
        }
    }

    #[test]
    fn boundary_samples_sit_on_the_sphere() {
        let p = StochasticLqrProblem::standard(5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = p.sample_boundary(200, &mut rng);
        for row in xs.rows() {
            let r = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 2.0).abs() < 1e-12, "|x| = {r} not on the sphere");
        }
    }

    #[test]
    fn interior_samples_stay_in_ball() {
        let p = StochasticLqrProblem::standard(5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs = p.sample_interior(500, &mut rng);
        for row in xs.rows() {
            assert!(p.contains(row));
        }
    }

    #[test]
    fn rho_validity_flags_sign_changes() {
        let p = StochasticLqrProblem::standard(2, 2.0).unwrap();
        assert!(p.rho_valid(&[0.5], &[1.0]));
        assert!(!p.rho_valid(&[-0.5], &[1.0]), "sign flip must be invalid");
        assert!(!p.rho_valid(&[0.0], &[1.0]));
    }
}
