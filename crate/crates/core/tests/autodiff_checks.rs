//! Derivative soundness of the tape engine against finite-difference
//! oracles: gradients of random smooth compositions, Hessian-vector
//! products, weighted Hessian traces, and the documented contract cases.

mod common;

use common::{assert_rel_close, fd_gradient, fd_hessian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uccd_core::autodiff::{grad_wrt_inputs, hessian_trace, hvp, NodeId, Tape};
use uccd_core::linalg::Mat;
use uccd_core::network::NetworkParams;

#[derive(Debug, Clone, Copy)]
enum ExprOp {
    Leaf(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Tanh(usize),
    Softplus(usize),
    Square(usize),
}

/// A random smooth composition of {+, x, tanh, softplus, square, dot}; the
/// dot enters through the final contraction of the working set.
#[derive(Debug, Clone)]
struct RandomExpr {
    n_leaves: usize,
    ops: Vec<ExprOp>,
    dot_weights: Vec<f64>,
}

impl RandomExpr {
    fn generate(rng: &mut ChaCha8Rng) -> Self {
        let n_leaves = rng.gen_range(2..=5);
        let n_ops = rng.gen_range(3..=10);
        let mut ops: Vec<ExprOp> = (0..n_leaves).map(ExprOp::Leaf).collect();
        for _ in 0..n_ops {
            let a = rng.gen_range(0..ops.len());
            let b = rng.gen_range(0..ops.len());
            let op = match rng.gen_range(0..5) {
                0 => ExprOp::Add(a, b),
                1 => ExprOp::Mul(a, b),
                2 => ExprOp::Tanh(a),
                3 => ExprOp::Softplus(a),
                _ => ExprOp::Square(a),
            };
            ops.push(op);
        }
        let dot_weights = (0..ops.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { n_leaves, ops, dot_weights }
    }

    fn build(&self, tape: &mut Tape, leaves: &[NodeId]) -> NodeId {
        let mut nodes: Vec<NodeId> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let id = match *op {
                ExprOp::Leaf(i) => leaves[i],
                ExprOp::Add(a, b) => tape.add(nodes[a], nodes[b]),
                ExprOp::Mul(a, b) => tape.mul(nodes[a], nodes[b]),
                ExprOp::Tanh(a) => tape.tanh(nodes[a]),
                ExprOp::Softplus(a) => tape.softplus(nodes[a]),
                ExprOp::Square(a) => tape.square(nodes[a]),
            };
            nodes.push(id);
        }
        let weights: Vec<NodeId> =
            self.dot_weights.iter().map(|&w| tape.constant(w)).collect();
        tape.dot(&weights, &nodes)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = x.iter().map(|&v| tape.leaf(v)).collect();
        let out = self.build(&mut tape, &leaves);
        tape.value(out)
    }
}

#[test]
fn gradients_of_random_compositions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 100 {
        let expr = RandomExpr::generate(&mut rng);
        let x: Vec<f64> =
            (0..expr.n_leaves).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let value = expr.eval(&x);
        if !value.is_finite() || value.abs() > 1e4 {
            continue;
        }
        let grad = grad_wrt_inputs(|t, l| expr.build(t, l), &x).unwrap();
        let fd = fd_gradient(&|xs: &[f64]| expr.eval(xs), &x, 1e-4);
        if fd.iter().any(|g| g.abs() > 1e4) {
            continue;
        }
        for (i, (&g, &f)) in grad.iter().zip(&fd).enumerate() {
            assert_rel_close(g, f, 1e-5, 1e-6, &format!("composition {checked} leaf {i}"));
        }
        checked += 1;
    }
}

#[test]
fn backward_is_linear_in_the_output() {
    // backward(a f + b g) = a backward(f) + b backward(g), entrywise to
    // machine precision
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let ef = RandomExpr::generate(&mut rng);
        let eg = RandomExpr::generate(&mut rng);
        let n = ef.n_leaves.max(eg.n_leaves);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));

        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = x.iter().map(|&v| tape.leaf(v)).collect();
        let f = ef.build(&mut tape, &leaves[..ef.n_leaves]);
        let g = eg.build(&mut tape, &leaves[..eg.n_leaves]);
        let gf = tape.backward(f).unwrap();
        let gg = tape.backward(g).unwrap();
        let af = tape.mul_const(f, a);
        let bg = tape.mul_const(g, b);
        let combo = tape.add(af, bg);
        let gc = tape.backward(combo).unwrap();
        for i in 0..n {
            let expect = a * gf[i] + b * gg[i];
            let got = gc[i];
            assert!(
                (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "linearity violated at leaf {i}: {got} vs {expect}"
            );
        }
    }
}

#[test]
fn documented_gradient_cases() {
    // product rule: f(x, y) = x y at (2, 3) -> (3, 2)
    let g = grad_wrt_inputs(|t, l| t.mul(l[0], l[1]), &[2.0, 3.0]).unwrap();
    assert_eq!(g, vec![3.0, 2.0]);

    // tanh'(0) = 1
    let g = grad_wrt_inputs(|t, l| t.tanh(l[0]), &[0.0]).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-15);

    // softplus'(0) = 1/2
    let g = grad_wrt_inputs(|t, l| t.softplus(l[0]), &[0.0]).unwrap();
    assert!((g[0] - 0.5).abs() < 1e-15);

    // |x|^2 at (1, -2) -> (2, -4)
    let g = grad_wrt_inputs(|t, l| t.sum_of_squares(l), &[1.0, -2.0]).unwrap();
    assert_eq!(g, vec![2.0, -4.0]);

    // constants have zero gradient, exactly
    let g = grad_wrt_inputs(
        |t, l| {
            let _unused = t.tanh(l[1]);
            t.constant(4.25)
        },
        &[0.3, 0.7],
    )
    .unwrap();
    assert_eq!(g, vec![0.0, 0.0]);
}

#[test]
fn leaves_not_reaching_the_output_get_exact_zero() {
    let g = grad_wrt_inputs(
        |t, l| {
            let _dead = t.mul(l[1], l[2]);
            t.square(l[0])
        },
        &[1.5, 2.0, 3.0],
    )
    .unwrap();
    assert_eq!(g[1], 0.0);
    assert_eq!(g[2], 0.0);
    assert_eq!(g[0], 3.0);
}

#[test]
fn invalid_output_node_is_a_contract_violation() {
    let mut tape = Tape::new();
    tape.leaf(1.0);
    let bogus = NodeId::from_raw(99);
    assert!(tape.backward(bogus).is_err());
}

#[test]
fn replaying_the_tape_reproduces_cached_values_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let expr = RandomExpr::generate(&mut rng);
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> =
        (0..expr.n_leaves).map(|_| tape.leaf(rng.gen_range(-1.0..1.0))).collect();
    expr.build(&mut tape, &leaves);
    let replayed = tape.replay_values();
    for (i, &v) in replayed.iter().enumerate() {
        let cached = tape.value(NodeId::from_raw(i as u32));
        assert_eq!(cached.to_bits(), v.to_bits(), "node {i} replay differs");
    }
}

#[test]
fn hvp_matches_finite_difference_of_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let expr = RandomExpr::generate(&mut rng);
        let x: Vec<f64> = (0..expr.n_leaves).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..expr.n_leaves).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = hvp(|t, l| expr.build(t, l), &x, &v).unwrap();
        // FD of the gradient along v
        let h = 1e-5;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let gp = grad_wrt_inputs(|t, l| expr.build(t, l), &xp).unwrap();
        let gm = grad_wrt_inputs(|t, l| expr.build(t, l), &xm).unwrap();
        for i in 0..x.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert_rel_close(hv[i], fd, 1e-4, 1e-5, &format!("hvp entry {i}"));
        }
    }
}

#[test]
fn hessian_trace_contract_cases() {
    // |x|^2 in 3 dimensions, identity weight: Hessian is 2 I, trace 6
    let tr = hessian_trace(|t, l| t.sum_of_squares(l), &[0.3, -0.8, 0.5], &Mat::identity(3))
        .unwrap();
    assert!((tr - 6.0).abs() < 1e-12, "got {tr}");

    // x1 x2 has zero diagonal Hessian
    let tr =
        hessian_trace(|t, l| t.mul(l[0], l[1]), &[1.3, -0.4], &Mat::identity(2)).unwrap();
    assert!(tr.abs() < 1e-12, "got {tr}");

    // k |x|^2 in 5 dimensions with weight 2I: trace = 2 k d = 20 k
    let k = 0.6180339887498949;
    let f = move |t: &mut Tape, l: &[NodeId]| {
        let s = t.sum_of_squares(l);
        t.mul_const(s, k)
    };
    let x = [0.4, -0.2, 0.9, 0.1, -0.7];
    let w2 = Mat::scaled_identity(5, 2.0);
    let tr = hessian_trace(f, &x, &w2).unwrap();
    assert!((tr - 20.0 * k).abs() < 1e-10, "got {tr}, want {}", 20.0 * k);
    assert!((tr - 12.360679774997896).abs() < 1e-9);
    // cross-check against the finite-difference Hessian oracle
    let plain = move |xs: &[f64]| k * xs.iter().map(|v| v * v).sum::<f64>();
    let hess = fd_hessian(&plain, &x, 1e-3);
    let fd_tr: f64 = (0..5).map(|i| 2.0 * hess[i][i]).sum();
    assert_rel_close(tr, fd_tr, 1e-4, 1e-8, "fd hessian trace");

    // dimension mismatch is rejected
    assert!(hessian_trace(|t, l| t.square(l[0]), &[1.0], &Mat::identity(3)).is_err());
}

#[test]
fn hessian_trace_matches_fd_on_random_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for _ in 0..12 {
        let d = rng.gen_range(2..=10usize);
        let mut a = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // random symmetric PSD weight W = C^T C
        let mut w = Mat::zeros(d, d);
        let c: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for i in 0..d {
            for j in 0..d {
                let v: f64 = (0..d).map(|k| c[k][i] * c[k][j]).sum();
                w.set(i, j, v);
            }
        }
        let a_f = a.clone();
        let b_f = b.clone();
        let build = move |t: &mut Tape, l: &[NodeId]| {
            let mut acc = t.constant(0.0);
            for i in 0..l.len() {
                for j in 0..l.len() {
                    let prod = t.mul(l[i], l[j]);
                    let scaled = t.mul_const(prod, a_f[i][j]);
                    acc = t.add(acc, scaled);
                }
                let lin = t.mul_const(l[i], b_f[i]);
                acc = t.add(acc, lin);
            }
            acc
        };
        let tr = hessian_trace(build, &x, &w).unwrap();
        let a_p = a.clone();
        let b_p = b.clone();
        let plain = move |xs: &[f64]| {
            let mut acc = 0.0;
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    acc += a_p[i][j] * xs[i] * xs[j];
                }
                acc += b_p[i] * xs[i];
            }
            acc
        };
        let hess = fd_hessian(&plain, &x, 1e-3);
        let mut fd_tr = 0.0;
        for i in 0..d {
            for j in 0..d {
                fd_tr += w.get(i, j) * hess[j][i];
            }
        }
        assert_rel_close(tr, fd_tr, 1e-4, 1e-6, "quadratic W-trace");
    }
}

#[test]
fn network_state_derivatives_match_finite_differences() {
    // gradient and weighted Hessian trace of the value network itself
    let net = NetworkParams::default_arch(17, 1, 2);
    let rho = 1.1;
    let x = [0.35, -0.55];
    let build = |t: &mut Tape, l: &[NodeId]| {
        let rho_node = t.constant(rho);
        let inputs = [rho_node, l[0], l[1]];
        net.emit_tape(t, &inputs)
    };
    let grad = grad_wrt_inputs(build, &x).unwrap();
    let plain = |xs: &[f64]| net.forward(&[rho], xs).unwrap();
    let fd = fd_gradient(&plain, &x, 1e-4);
    for i in 0..2 {
        assert_rel_close(grad[i], fd[i], 1e-5, 1e-8, &format!("net grad {i}"));
    }

    let w = Mat::scaled_identity(2, 2.0);
    let tr = hessian_trace(build, &x, &w).unwrap();
    let hess = fd_hessian(&plain, &x, 1e-3);
    let fd_tr = 2.0 * (hess[0][0] + hess[1][1]);
    assert_rel_close(tr, fd_tr, 1e-4, 1e-8, "net hessian trace");
}
