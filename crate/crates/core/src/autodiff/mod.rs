//! Automatic differentiation: reverse-mode gradients on a define-by-run
//! tape, forward-over-reverse Hessian-vector products, and the batched
//! program/runner pair the loss machinery replays per sample chunk.
//!
//! First derivatives of scalar losses come from a single adjoint sweep.
//! Second derivatives of the value network with respect to its state inputs
//! are exact: one forward-tangent pass per basis direction (d passes for a
//! d-dimensional state), never a stochastic estimator, with an optional
//! Hutchinson mode for dimensions where d passes would be too many.

mod gradient;
mod program;
mod runner;
mod tape;

pub use gradient::GradientVector;
pub use program::{NodeId, Op, TapeProgram};
pub use runner::BatchRunner;
pub use tape::Tape;

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::CoreError;
use crate::linalg::Mat;

/// Build `f` on a fresh tape over leaves holding `x` and return
/// `(tape, leaf ids, output node)`.
fn record<F>(f: F, x: &[f64]) -> (Tape, Vec<NodeId>, NodeId)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = x.iter().map(|&v| tape.leaf(v)).collect();
    let out = f(&mut tape, &leaves);
    (tape, leaves, out)
}

/// Gradient of a scalar map with respect to its inputs, by one reverse pass.
pub fn grad_wrt_inputs<F>(f: F, x: &[f64]) -> Result<Vec<f64>, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let (mut tape, _, out) = record(f, x);
    let g = tape.backward(out)?;
    Ok(g.as_slice().to_vec())
}

/// Hessian-vector product `H(x) v` of a scalar map, forward-over-reverse.
pub fn hvp<F>(f: F, x: &[f64], v: &[f64]) -> Result<Vec<f64>, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let (mut tape, _, out) = record(f, x);
    tape.hvp(out, v)
}

/// `Tr[ weight * H(x) ]` for the Hessian of a twice-differentiable scalar
/// map, computed exactly with one Hessian-vector product per basis
/// direction. `weight` must be a symmetric positive semi-definite d x d
/// matrix matching `x`.
pub fn hessian_trace<F>(f: F, x: &[f64], weight: &Mat) -> Result<f64, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let d = x.len();
    if weight.rows() != d || weight.cols() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            got: weight.rows(),
            what: "hessian_trace weight matrix",
        });
    }
    let (mut tape, _, out) = record(f, x);
    let mut v = vec![0.0; d];
    let mut trace = 0.0;
    for j in 0..d {
        v.iter_mut().for_each(|e| *e = 0.0);
        v[j] = 1.0;
        let hv = tape.hvp(out, &v)?;
        // Tr[W H] = sum_j W[j,:] . (H e_j)
        trace += weight.row(j).iter().zip(&hv).map(|(w, h)| w * h).sum::<f64>();
    }
    Ok(trace)
}

/// Stochastic Hutchinson estimate of `Tr[ weight * H(x) ]` with Rademacher
/// probes. Off by default everywhere; intended for state dimensions where
/// the exact d-pass evaluation is too expensive.
pub fn hessian_trace_hutchinson<F, R>(
    f: F,
    x: &[f64],
    weight: &Mat,
    probes: usize,
    rng: &mut R,
) -> Result<f64, CoreError>
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
    R: Rng + ?Sized,
{
    let d = x.len();
    if weight.rows() != d || weight.cols() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            got: weight.rows(),
            what: "hessian_trace weight matrix",
        });
    }
    if probes == 0 {
        return Err(CoreError::InvalidConfig("hutchinson probes must be >= 1".into()));
    }
    let (mut tape, _, out) = record(f, x);
    let mut acc = 0.0;
    let mut z = vec![0.0; d];
    for _ in 0..probes {
        for e in z.iter_mut() {
            *e = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let hv = tape.hvp(out, &z)?;
        // z^T W H z
        for j in 0..d {
            acc += z[j] * weight.row(j).iter().zip(&hv).map(|(w, h)| w * h).sum::<f64>();
        }
    }
    Ok(acc / probes as f64)
}
