//! Finite-difference oracles shared by the autodiff and residual checks.
//! These stay independent of the tape's derivative sweeps: they only ever
//! call forward evaluations.

#![allow(dead_code)]

/// Central-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let dn = f(&xp);
        xp[i] = x[i];
        g.push((up - dn) / (2.0 * h));
    }
    g
}

/// Central-difference Hessian (symmetric four-point stencil).
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut hess = vec![vec![0.0; d]; d];
    let mut xp = x.to_vec();
    for i in 0..d {
        for j in 0..d {
            xp[i] += h;
            xp[j] += h;
            let pp = f(&xp);
            xp[j] -= 2.0 * h;
            let pm = f(&xp);
            xp[i] -= 2.0 * h;
            let mm = f(&xp);
            xp[j] += 2.0 * h;
            let mp = f(&xp);
            xp[i] += h;
            xp[j] -= h;
            hess[i][j] = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    hess
}

/// Relative agreement with an absolute floor for near-zero values.
pub fn rel_close(a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let scale = a.abs().max(b.abs());
    if scale < abs_floor {
        return true;
    }
    (a - b).abs() <= rel_tol * scale
}

pub fn assert_rel_close(a: f64, b: f64, rel_tol: f64, abs_floor: f64, what: &str) {
    assert!(
        rel_close(a, b, rel_tol, abs_floor),
        "{what}: {a} vs {b} (rel err {})",
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    );
}
