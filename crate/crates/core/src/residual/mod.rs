//! HJB residual and loss terms. The residual uses the explicit optimal
//! control for quadratic-in-control running costs, so no inner minimization
//! ever runs; losses are batch means so their weights have a batch-size
//! independent meaning.

mod engine;

pub use engine::{
    build_boundary_program, build_design_program, build_interior_program,
    build_plant_cost_program, eval_boundary_chunk, eval_design_chunk, eval_interior_chunk,
    eval_plant_cost, BoundaryChunkOut, BoundaryProgram, DesignChunkOut, DesignProgram,
    InteriorChunkOut, InteriorProgram, PlantCostProgram, LANES,
};

use alloc::vec::Vec;

use crate::autodiff::{BatchRunner, GradientVector, NodeId, TapeProgram};
use crate::error::CoreError;
use crate::network::NetworkParams;
use crate::problem::{Problem, StateSamples, StochasticLqrProblem};

/// Anything that can stand in for the value function on a tape: the neural
/// network during training, or a closed-form expression in analytic plug-in
/// mode (the zero-residual oracle used by tests and validation).
pub trait ValueFunction: Send + Sync {
    /// Expected length of the concatenated (design, state) input.
    fn input_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    /// Flat differentiable parameters to bind; empty for closed forms.
    fn flat_params(&self) -> &[f64];
    /// Emit the prediction node; `inputs` is the contiguous (design, state)
    /// node range and parameters live at `theta_base`.
    fn emit_value(&self, prog: &mut TapeProgram, theta_base: u32, inputs: &[NodeId]) -> NodeId;
}

impl ValueFunction for NetworkParams {
    fn input_dim(&self) -> usize {
        self.sizes()[0]
    }

    fn param_count(&self) -> usize {
        self.param_count()
    }

    fn flat_params(&self) -> &[f64] {
        self.flat()
    }

    fn emit_value(&self, prog: &mut TapeProgram, theta_base: u32, inputs: &[NodeId]) -> NodeId {
        self.emit_program(prog, theta_base, inputs)
    }
}

/// Closed-form value function built from an emission closure.
pub struct ClosedFormValue<F> {
    design_dim: usize,
    state_dim: usize,
    emit: F,
}

impl<F> ClosedFormValue<F>
where
    F: Fn(&mut TapeProgram, &[NodeId], &[NodeId]) -> NodeId + Send + Sync,
{
    pub fn new(design_dim: usize, state_dim: usize, emit: F) -> Self {
        Self { design_dim, state_dim, emit }
    }
}

impl<F> ValueFunction for ClosedFormValue<F>
where
    F: Fn(&mut TapeProgram, &[NodeId], &[NodeId]) -> NodeId + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.design_dim + self.state_dim
    }

    fn param_count(&self) -> usize {
        0
    }

    fn flat_params(&self) -> &[f64] {
        &[]
    }

    fn emit_value(&self, prog: &mut TapeProgram, _theta_base: u32, inputs: &[NodeId]) -> NodeId {
        let (rho, x) = inputs.split_at(self.design_dim);
        (self.emit)(prog, rho, x)
    }
}

/// The exact LQR value function k(rho) |x|^2 as a plug-in value model.
pub fn lqr_analytic_value(
    problem: &StochasticLqrProblem,
) -> ClosedFormValue<impl Fn(&mut TapeProgram, &[NodeId], &[NodeId]) -> NodeId + Send + Sync> {
    let p = problem.clone();
    ClosedFormValue::new(1, problem.dim(), move |prog, rho, x| {
        let k = p.emit_gain_coefficient(prog, rho[0]);
        let sq = prog.sum_of_squares(x);
        prog.mul(k, sq)
    })
}

/// Loss components of one epoch. The composite is exactly
/// `mu_h * l_hjb + mu_b * l_bdry` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_hjb: f64,
    pub l_bdry: f64,
    pub l_pinn: f64,
    pub l_r: Option<f64>,
    pub mu_h: f64,
    pub mu_b: f64,
}

impl LossBreakdown {
    pub fn new(l_hjb: f64, l_bdry: f64, mu_h: f64, mu_b: f64) -> Self {
        Self { l_hjb, l_bdry, l_pinn: mu_h * l_hjb + mu_b * l_bdry, l_r: None, mu_h, mu_b }
    }

    pub fn with_design_loss(mut self, l_r: f64) -> Self {
        self.l_r = Some(l_r);
        self
    }
}

/// Explicit minimizer of the control Hamiltonian under a quadratic control
/// cost: `u* = -R^{-1} g(x; rho)^T grad_V / 2`.
pub fn optimal_control(
    problem: &dyn Problem,
    rho: &[f64],
    x: &[f64],
    grad_v: &[f64],
) -> Result<Vec<f64>, CoreError> {
    let (l, n, m) = (problem.design_dim(), problem.state_dim(), problem.control_dim());
    if rho.len() != l || x.len() != n || grad_v.len() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: grad_v.len(),
            what: "optimal_control input",
        });
    }
    let mut prog = TapeProgram::new();
    let rho_nodes: Vec<NodeId> = (0..l).map(|_| prog.leaf()).collect();
    let x_nodes: Vec<NodeId> = (0..n).map(|_| prog.leaf()).collect();
    let gain = problem.emit_control_matrix(&mut prog, &rho_nodes, &x_nodes);
    let mut run = BatchRunner::<1>::new();
    run.prepare(&prog);
    for (i, &node) in rho_nodes.iter().enumerate() {
        run.values_mut(node)[0] = rho[i];
    }
    for (i, &node) in x_nodes.iter().enumerate() {
        run.values_mut(node)[0] = x[i];
    }
    run.forward(&prog, &[]);
    let r_inv = problem.control_weight_inv();
    let gw: Vec<f64> = (0..m)
        .map(|k| (0..n).map(|i| run.values(gain.get(i, k))[0] * grad_v[i]).sum())
        .collect();
    Ok((0..m)
        .map(|k| -0.5 * (0..m).map(|k2| r_inv.get(k, k2) * gw[k2]).sum::<f64>())
        .collect())
}

/// Pointwise HJB residual F(rho, x) for any value model.
pub fn hjb_residual(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
    rho: &[f64],
    x: &[f64],
) -> Result<f64, CoreError> {
    let ip = build_interior_program(problem, vf)?;
    let rho_s = StateSamples::from_flat(problem.design_dim(), rho.to_vec());
    let x_s = StateSamples::from_flat(problem.state_dim(), x.to_vec());
    let mut run = BatchRunner::<1>::new();
    let out =
        eval_interior_chunk(&ip, problem, vf.flat_params(), &rho_s, &x_s, 0, None, &mut run)?;
    Ok(out.residuals[0])
}

fn check_batch(
    what: &'static str,
    rho_samples: &StateSamples,
    x_samples: &StateSamples,
    problem: &dyn Problem,
) -> Result<(), CoreError> {
    if rho_samples.is_empty() || x_samples.is_empty() {
        return Err(CoreError::EmptyBatch(what));
    }
    if rho_samples.len() != x_samples.len() {
        return Err(CoreError::DimensionMismatch {
            expected: x_samples.len(),
            got: rho_samples.len(),
            what,
        });
    }
    if rho_samples.dim() != problem.design_dim() || x_samples.dim() != problem.state_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: problem.state_dim(),
            got: x_samples.dim(),
            what,
        });
    }
    Ok(())
}

/// Mean squared HJB residual over a batch of (design, state) samples.
pub fn loss_hjb(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
    rho_samples: &StateSamples,
    x_samples: &StateSamples,
) -> Result<f64, CoreError> {
    check_batch("loss_hjb", rho_samples, x_samples, problem)?;
    let ip = build_interior_program(problem, vf)?;
    let mut run = BatchRunner::<LANES>::new();
    let mut sum = 0.0;
    let mut start = 0;
    while start < x_samples.len() {
        sum += eval_interior_chunk(
            &ip,
            problem,
            vf.flat_params(),
            rho_samples,
            x_samples,
            start,
            None,
            &mut run,
        )?
        .sq_sum;
        start += LANES;
    }
    Ok(sum / x_samples.len() as f64)
}

/// Mean squared boundary mismatch over a batch of boundary samples.
pub fn loss_boundary(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
    rho_samples: &StateSamples,
    x_samples: &StateSamples,
) -> Result<f64, CoreError> {
    check_batch("loss_boundary", rho_samples, x_samples, problem)?;
    let bp = build_boundary_program(problem, vf)?;
    let mut run = BatchRunner::<LANES>::new();
    let mut sum = 0.0;
    let mut start = 0;
    while start < x_samples.len() {
        sum += eval_boundary_chunk(
            &bp,
            vf.flat_params(),
            rho_samples,
            x_samples,
            start,
            None,
            &mut run,
        )?
        .sq_sum;
        start += LANES;
    }
    Ok(sum / x_samples.len() as f64)
}

/// Design objective estimate: `w_p J_p(rho) + w_c mean_k V(rho, x_k)` with
/// the samples drawn from the problem's weighting distribution.
pub fn loss_design(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
    rho: &[f64],
    x_samples: &StateSamples,
) -> Result<f64, CoreError> {
    if x_samples.is_empty() {
        return Err(CoreError::EmptyBatch("loss_design"));
    }
    let weights = problem.weights();
    let dp = build_design_program(problem, vf)?;
    let mut theta_rho: Vec<f64> = Vec::with_capacity(dp.theta_len + rho.len());
    theta_rho.extend_from_slice(vf.flat_params());
    theta_rho.extend_from_slice(rho);
    let mut run = BatchRunner::<LANES>::new();
    let mut sum = 0.0;
    let mut start = 0;
    while start < x_samples.len() {
        sum += eval_design_chunk(&dp, &theta_rho, x_samples, start, None, &mut run)?.value_sum;
        start += LANES;
    }
    let pp = build_plant_cost_program(problem);
    let (plant, _) = eval_plant_cost(&pp, rho)?;
    Ok(weights.plant * plant + weights.control * sum / x_samples.len() as f64)
}

/// Composite collocation loss and its gradient with respect to the network
/// weights, single threaded. The training driver runs the same chunk
/// evaluations in parallel with an order-fixed reduction; results agree
/// bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn pinn_loss_and_grad(
    problem: &dyn Problem,
    net: &NetworkParams,
    rho_interior: &StateSamples,
    x_interior: &StateSamples,
    rho_boundary: &StateSamples,
    x_boundary: &StateSamples,
    mu_h: f64,
    mu_b: f64,
) -> Result<(LossBreakdown, GradientVector), CoreError> {
    check_batch("loss_hjb", rho_interior, x_interior, problem)?;
    check_batch("loss_boundary", rho_boundary, x_boundary, problem)?;
    let ip = build_interior_program(problem, net)?;
    let bp = build_boundary_program(problem, net)?;
    let mut run = BatchRunner::<LANES>::new();
    let mut grad = vec![0.0; net.param_count()];
    let n_h = x_interior.len() as f64;
    let n_b = x_boundary.len() as f64;

    let mut hjb_sum = 0.0;
    let mut start = 0;
    while start < x_interior.len() {
        let out = eval_interior_chunk(
            &ip,
            problem,
            net.flat(),
            rho_interior,
            x_interior,
            start,
            Some(mu_h / n_h),
            &mut run,
        )?;
        hjb_sum += out.sq_sum;
        for (g, d) in grad.iter_mut().zip(&out.pgrad) {
            *g += d;
        }
        start += LANES;
    }

    let mut bdry_sum = 0.0;
    start = 0;
    while start < x_boundary.len() {
        let out = eval_boundary_chunk(
            &bp,
            net.flat(),
            rho_boundary,
            x_boundary,
            start,
            Some(mu_b / n_b),
            &mut run,
        )?;
        bdry_sum += out.sq_sum;
        for (g, d) in grad.iter_mut().zip(&out.pgrad) {
            *g += d;
        }
        start += LANES;
    }

    let breakdown = LossBreakdown::new(hjb_sum / n_h, bdry_sum / n_b, mu_h, mu_b);
    Ok((breakdown, GradientVector::with_segments(grad, net.segments())))
}

/// Design loss and its gradient with respect to the design parameters only
/// (the network weights are held fixed), single threaded.
pub fn design_loss_and_grad(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
    rho: &[f64],
    x_samples: &StateSamples,
) -> Result<(f64, Vec<f64>), CoreError> {
    if x_samples.is_empty() {
        return Err(CoreError::EmptyBatch("loss_design"));
    }
    let weights = problem.weights();
    let dp = build_design_program(problem, vf)?;
    let mut theta_rho: Vec<f64> = Vec::with_capacity(dp.theta_len + rho.len());
    theta_rho.extend_from_slice(vf.flat_params());
    theta_rho.extend_from_slice(rho);
    let n_r = x_samples.len() as f64;
    let mut run = BatchRunner::<LANES>::new();
    let mut value_sum = 0.0;
    let mut grad = vec![0.0; rho.len()];
    let mut start = 0;
    while start < x_samples.len() {
        let out = eval_design_chunk(
            &dp,
            &theta_rho,
            x_samples,
            start,
            Some(weights.control / n_r),
            &mut run,
        )?;
        value_sum += out.value_sum;
        for (g, d) in grad.iter_mut().zip(&out.pgrad[dp.theta_len..]) {
            *g += d;
        }
        start += LANES;
    }
    let pp = build_plant_cost_program(problem);
    let (plant, plant_grad) = eval_plant_cost(&pp, rho)?;
    for (g, d) in grad.iter_mut().zip(&plant_grad) {
        *g += weights.plant * d;
    }
    let loss = weights.plant * plant + weights.control * value_sum / n_r;
    Ok((loss, grad))
}
