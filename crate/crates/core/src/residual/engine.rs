//! Program builders and chunked evaluation for the HJB residual machinery.
//!
//! One program per sample role (interior / boundary / design), built per
//! batch and replayed over fixed-size lane chunks. Per chunk the interior
//! evaluation runs: forward values, an adjoint pass for the value gradient
//! (which fixes the optimal control), one forward-tangent pass per diffusion
//! column (second order, giving the exact generator trace), one first-order
//! tangent pass along the closed-loop drift, and a final mixed adjoint pass
//! that yields the weight gradient of the squared-residual loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{BatchRunner, NodeId, TapeProgram};
use crate::error::CoreError;
use crate::problem::{NodeMat, Problem, StateSamples};

use super::ValueFunction;

/// Lane width of batched evaluation; also the trainer's reduction chunk
/// size, which keeps gradient summation order independent of thread count.
pub const LANES: usize = 16;

/// Interior-sample program: value prediction plus the dynamics and cost
/// nodes the residual assembles from.
pub struct InteriorProgram {
    pub prog: TapeProgram,
    rho_leaves: Vec<NodeId>,
    x_leaves: Vec<NodeId>,
    pub value: NodeId,
    drift: Vec<NodeId>,
    gain: NodeMat,
    diffusion: Option<NodeMat>,
    running_cost: NodeId,
}

/// Boundary-sample program: value prediction and boundary cost.
pub struct BoundaryProgram {
    pub prog: TapeProgram,
    rho_leaves: Vec<NodeId>,
    x_leaves: Vec<NodeId>,
    pub value: NodeId,
    boundary_cost: NodeId,
}

/// Design-sample program: value prediction with the nominal design vector
/// bound as differentiable parameters after the value-function weights.
pub struct DesignProgram {
    pub prog: TapeProgram,
    x_leaves: Vec<NodeId>,
    pub value: NodeId,
    pub theta_len: usize,
    pub design_dim: usize,
}

/// Plant-cost program over the design parameters alone.
pub struct PlantCostProgram {
    pub prog: TapeProgram,
    pub cost: NodeId,
    pub design_dim: usize,
}

fn check_input_dim(problem: &dyn Problem, vf: &dyn ValueFunction) -> Result<(), CoreError> {
    let expected = problem.design_dim() + problem.state_dim();
    if vf.input_dim() != expected {
        return Err(CoreError::DimensionMismatch {
            expected,
            got: vf.input_dim(),
            what: "value function input",
        });
    }
    Ok(())
}

pub fn build_interior_program(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
) -> Result<InteriorProgram, CoreError> {
    check_input_dim(problem, vf)?;
    let (l, n) = (problem.design_dim(), problem.state_dim());
    let mut prog = TapeProgram::new();
    let inputs: Vec<NodeId> = (0..l + n).map(|_| prog.leaf()).collect();
    prog.reserve_params(vf.param_count() as u32);
    let value = vf.emit_value(&mut prog, 0, &inputs);
    let (rho, x) = inputs.split_at(l);
    let drift = problem.emit_drift(&mut prog, rho, x);
    let gain = problem.emit_control_matrix(&mut prog, rho, x);
    let diffusion = problem.emit_diffusion(&mut prog, rho, x);
    let running_cost = problem.emit_running_cost(&mut prog, rho, x);
    Ok(InteriorProgram {
        prog,
        rho_leaves: rho.to_vec(),
        x_leaves: x.to_vec(),
        value,
        drift,
        gain,
        diffusion,
        running_cost,
    })
}

pub fn build_boundary_program(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
) -> Result<BoundaryProgram, CoreError> {
    check_input_dim(problem, vf)?;
    let (l, n) = (problem.design_dim(), problem.state_dim());
    let mut prog = TapeProgram::new();
    let inputs: Vec<NodeId> = (0..l + n).map(|_| prog.leaf()).collect();
    prog.reserve_params(vf.param_count() as u32);
    let value = vf.emit_value(&mut prog, 0, &inputs);
    let (rho, x) = inputs.split_at(l);
    let boundary_cost = problem.emit_boundary_cost(&mut prog, rho, x);
    Ok(BoundaryProgram {
        prog,
        rho_leaves: rho.to_vec(),
        x_leaves: x.to_vec(),
        value,
        boundary_cost,
    })
}

pub fn build_design_program(
    problem: &dyn Problem,
    vf: &dyn ValueFunction,
) -> Result<DesignProgram, CoreError> {
    check_input_dim(problem, vf)?;
    let (l, n) = (problem.design_dim(), problem.state_dim());
    let theta_len = vf.param_count();
    let mut prog = TapeProgram::new();
    // design parameters first so the network input range stays contiguous;
    // referencing slots theta_len..theta_len+l also reserves 0..theta_len
    let mut inputs: Vec<NodeId> =
        (0..l).map(|j| prog.param((theta_len + j) as u32)).collect();
    let x_leaves: Vec<NodeId> = (0..n).map(|_| prog.leaf()).collect();
    inputs.extend_from_slice(&x_leaves);
    let value = vf.emit_value(&mut prog, 0, &inputs);
    Ok(DesignProgram { prog, x_leaves, value, theta_len, design_dim: l })
}

pub fn build_plant_cost_program(problem: &dyn Problem) -> PlantCostProgram {
    let l = problem.design_dim();
    let mut prog = TapeProgram::new();
    let rho: Vec<NodeId> = (0..l).map(|j| prog.param(j as u32)).collect();
    let cost = problem.emit_plant_cost(&mut prog, &rho);
    PlantCostProgram { prog, cost, design_dim: l }
}

/// Result of one interior chunk: residuals for the real lanes, their square
/// sum, and (when requested) the weight gradient of
/// `scale * sum_i residual_i^2` with `scale` folded in by the caller.
pub struct InteriorChunkOut {
    pub residuals: Vec<f64>,
    pub sq_sum: f64,
    pub pgrad: Vec<f64>,
}

pub struct BoundaryChunkOut {
    pub sq_sum: f64,
    pub pgrad: Vec<f64>,
}

pub struct DesignChunkOut {
    pub value_sum: f64,
    /// Gradient over [theta | rho]; callers slice off the design block.
    pub pgrad: Vec<f64>,
}

#[inline]
fn fill_leaves<const B: usize>(
    run: &mut BatchRunner<B>,
    leaves: &[NodeId],
    samples: &StateSamples,
    start: usize,
    count: usize,
) {
    for (i, &leaf) in leaves.iter().enumerate() {
        let row = run.values_mut(leaf);
        for j in 0..B {
            let idx = if j < count { start + j } else { start };
            row[j] = samples.row(idx)[i];
        }
    }
}

/// Evaluate the HJB residual over one chunk of interior samples, optionally
/// with the gradient of `grad_scale * sum residual^2` w.r.t. the value
/// function's parameters.
#[allow(clippy::too_many_arguments)]
pub fn eval_interior_chunk<const B: usize>(
    ip: &InteriorProgram,
    problem: &dyn Problem,
    theta: &[f64],
    rho_samples: &StateSamples,
    x_samples: &StateSamples,
    start: usize,
    grad_scale: Option<f64>,
    run: &mut BatchRunner<B>,
) -> Result<InteriorChunkOut, CoreError> {
    let count = B.min(rho_samples.len() - start);
    debug_assert!(count > 0);
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let w_dim = problem.noise_dim();
    let gamma = problem.discount();
    let r_inv = problem.control_weight_inv();
    let r_mat = problem.control_weight();

    run.prepare(&ip.prog);
    fill_leaves(run, &ip.rho_leaves, rho_samples, start, count);
    fill_leaves(run, &ip.x_leaves, x_samples, start, count);
    run.forward(&ip.prog, theta);

    // value gradient w.r.t. the state, per lane
    run.set_directions(&[]);
    run.reverse_clear();
    run.beta0_mut(ip.value).fill(1.0);
    run.reverse(&ip.prog, theta);
    let mut w_grad = vec![0.0; n * B];
    for i in 0..n {
        let b = run.beta0(ip.x_leaves[i]);
        w_grad[i * B..(i + 1) * B].copy_from_slice(b);
    }

    // closed-loop drift c = f + g u*, with u* = -R^{-1} g^T w / 2
    let mut control = vec![0.0; m * B];
    let mut closed_drift = vec![0.0; n * B];
    let mut gw = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut drift_term = vec![0.0; B];
    let mut ctrl_cost = vec![0.0; B];
    for j in 0..B {
        for (k, gw_k) in gw.iter_mut().enumerate() {
            *gw_k = (0..n)
                .map(|i| run.values(ip.gain.get(i, k))[j] * w_grad[i * B + j])
                .sum::<f64>();
        }
        for (k, u_k) in u.iter_mut().enumerate() {
            *u_k = -0.5 * (0..m).map(|k2| r_inv.get(k, k2) * gw[k2]).sum::<f64>();
            control[k * B + j] = *u_k;
        }
        let mut dterm = 0.0;
        for i in 0..n {
            let f_i = run.values(ip.drift[i])[j];
            let gu: f64 = (0..m).map(|k| run.values(ip.gain.get(i, k))[j] * u[k]).sum();
            let c_i = f_i + gu;
            closed_drift[i * B + j] = c_i;
            dterm += c_i * w_grad[i * B + j];
        }
        drift_term[j] = dterm;
        ctrl_cost[j] = (0..m)
            .map(|k| u[k] * (0..m).map(|k2| r_mat.get(k, k2) * u[k2]).sum::<f64>())
            .sum();
    }

    // tangent directions: closed-loop drift (first order, gradient only)
    // plus one second-order direction per diffusion column
    let want_grad = grad_scale.is_some();
    let n_sigma = if ip.diffusion.is_some() { w_dim } else { 0 };
    let mut flags = Vec::with_capacity(1 + n_sigma);
    if want_grad {
        flags.push(false);
    }
    flags.extend(core::iter::repeat(true).take(n_sigma));
    run.set_directions(&flags);
    let sigma_dir0 = usize::from(want_grad);
    if want_grad {
        for i in 0..n {
            let leaf = ip.x_leaves[i];
            let src = &closed_drift[i * B..(i + 1) * B];
            run.tangent_seed_mut(0, leaf).copy_from_slice(src);
        }
        for &leaf in &ip.rho_leaves {
            run.tangent_seed_mut(0, leaf).fill(0.0);
        }
        run.tangent(&ip.prog, theta, 0);
    }
    if let Some(sigma) = &ip.diffusion {
        for k in 0..n_sigma {
            let dir = sigma_dir0 + k;
            for i in 0..n {
                let leaf = ip.x_leaves[i];
                let col = run.values(sigma.get(i, k)).to_vec();
                run.tangent_seed_mut(dir, leaf).copy_from_slice(&col);
            }
            for &leaf in &ip.rho_leaves {
                run.tangent_seed_mut(dir, leaf).fill(0.0);
            }
            run.tangent(&ip.prog, theta, dir);
        }
    }

    // assemble F = 1/2 Tr[sigma sigma^T Hess V] + c . grad V + running cost
    //            + u*^T R u* - gamma V
    // (the trace is the sum of second directional coefficients over the
    // diffusion columns)
    let mut residuals = Vec::with_capacity(count);
    let mut sq_sum = 0.0;
    for j in 0..count {
        let mut trace = 0.0;
        for k in 0..n_sigma {
            trace += run.tangent2(sigma_dir0 + k, ip.value)[j];
        }
        let lhat = run.values(ip.running_cost)[j];
        let v = run.values(ip.value)[j];
        let f_res = trace + drift_term[j] + lhat + ctrl_cost[j] - gamma * v;
        if !f_res.is_finite() {
            return Err(CoreError::NonFinite {
                what: "hjb residual",
                detail: format!(
                    "sample {} (rho {:?}, x {:?})",
                    start + j,
                    rho_samples.row(start + j),
                    x_samples.row(start + j)
                ),
            });
        }
        sq_sum += f_res * f_res;
        residuals.push(f_res);
    }

    let mut pgrad = Vec::new();
    if let Some(scale) = grad_scale {
        run.pgrad_clear();
        run.reverse_clear();
        for (j, &f_res) in residuals.iter().enumerate() {
            let s = 2.0 * f_res * scale;
            run.beta0_mut(ip.value)[j] = -gamma * s;
            run.beta1_mut(0, ip.value)[j] = s;
            for k in 0..n_sigma {
                run.beta2_mut(sigma_dir0 + k, ip.value)[j] = s;
            }
        }
        run.reverse(&ip.prog, theta);
        pgrad = run.pgrad().to_vec();
    }
    Ok(InteriorChunkOut { residuals, sq_sum, pgrad })
}

/// Squared boundary mismatch over one chunk, optionally with the gradient of
/// `grad_scale * sum (V - M)^2`.
#[allow(clippy::too_many_arguments)]
pub fn eval_boundary_chunk<const B: usize>(
    bp: &BoundaryProgram,
    theta: &[f64],
    rho_samples: &StateSamples,
    x_samples: &StateSamples,
    start: usize,
    grad_scale: Option<f64>,
    run: &mut BatchRunner<B>,
) -> Result<BoundaryChunkOut, CoreError> {
    let count = B.min(rho_samples.len() - start);
    run.prepare(&bp.prog);
    fill_leaves(run, &bp.rho_leaves, rho_samples, start, count);
    fill_leaves(run, &bp.x_leaves, x_samples, start, count);
    run.forward(&bp.prog, theta);
    let mut mismatch = [0.0; B];
    let mut sq_sum = 0.0;
    for j in 0..count {
        let diff = run.values(bp.value)[j] - run.values(bp.boundary_cost)[j];
        if !diff.is_finite() {
            return Err(CoreError::NonFinite {
                what: "boundary loss",
                detail: format!("sample {} (x {:?})", start + j, x_samples.row(start + j)),
            });
        }
        mismatch[j] = diff;
        sq_sum += diff * diff;
    }
    let mut pgrad = Vec::new();
    if let Some(scale) = grad_scale {
        run.set_directions(&[]);
        run.pgrad_clear();
        run.reverse_clear();
        for (j, &diff) in mismatch[..count].iter().enumerate() {
            run.beta0_mut(bp.value)[j] = 2.0 * diff * scale;
        }
        run.reverse(&bp.prog, theta);
        pgrad = run.pgrad().to_vec();
    }
    Ok(BoundaryChunkOut { sq_sum, pgrad })
}

/// Mean-value contribution of one design chunk, optionally with the gradient
/// of `grad_scale * sum V` over [theta | rho].
pub fn eval_design_chunk<const B: usize>(
    dp: &DesignProgram,
    theta_rho: &[f64],
    x_samples: &StateSamples,
    start: usize,
    grad_scale: Option<f64>,
    run: &mut BatchRunner<B>,
) -> Result<DesignChunkOut, CoreError> {
    let count = B.min(x_samples.len() - start);
    run.prepare(&dp.prog);
    fill_leaves(run, &dp.x_leaves, x_samples, start, count);
    run.forward(&dp.prog, theta_rho);
    let mut value_sum = 0.0;
    for j in 0..count {
        let v = run.values(dp.value)[j];
        if !v.is_finite() {
            return Err(CoreError::NonFinite {
                what: "design loss",
                detail: format!("sample {} (x {:?})", start + j, x_samples.row(start + j)),
            });
        }
        value_sum += v;
    }
    let mut pgrad = Vec::new();
    if let Some(scale) = grad_scale {
        run.set_directions(&[]);
        run.pgrad_clear();
        run.reverse_clear();
        run.beta0_mut(dp.value)[..count].fill(scale);
        run.reverse(&dp.prog, theta_rho);
        pgrad = run.pgrad().to_vec();
    }
    Ok(DesignChunkOut { value_sum, pgrad })
}

/// Plant cost and its design gradient at the nominal design value.
pub fn eval_plant_cost(
    pp: &PlantCostProgram,
    rho: &[f64],
) -> Result<(f64, Vec<f64>), CoreError> {
    debug_assert_eq!(rho.len(), pp.design_dim);
    let mut run = BatchRunner::<1>::new();
    run.prepare(&pp.prog);
    run.forward(&pp.prog, rho);
    let cost = run.values(pp.cost)[0];
    if !cost.is_finite() {
        return Err(CoreError::NonFinite {
            what: "plant cost",
            detail: format!("rho {rho:?}"),
        });
    }
    run.set_directions(&[]);
    run.pgrad_clear();
    run.reverse_clear();
    run.beta0_mut(pp.cost)[0] = 1.0;
    run.reverse(&pp.prog, rho);
    Ok((cost, run.pgrad().to_vec()))
}
