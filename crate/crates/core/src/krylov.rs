//! Matrix-free BiCGSTAB with a diagonal (Jacobi) preconditioner.

use crate::error::{Error, Result};

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dotv(a, a).sqrt()
}

/// Solves `A x = b` starting from `x = 0`; `apply(v, out)` writes `A v`.
pub(crate) fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let inv: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = inv[i] * v[i];
        }
    };
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dotv(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut phat);
        apply(&phat, &mut v);
        let denom = dotv(&r0, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        precond(&s, &mut shat);
        apply(&shat, &mut t);
        let tt = dotv(&t, &t);
        omega = if tt > 0.0 { dotv(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        what: "bicgstab",
        iterations: max_iter,
        detail: format!("relative residual {:e}", norm(&r) / bnorm),
        last: Some(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonsymmetric_tridiagonal() {
        let n = 50;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * l - 0.5 * r;
            }
        };
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&xs, &mut b);
        let x = bicgstab(apply, &vec![4.0; n], &b, 1e-12, 200).unwrap();
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-10);
        }
    }
}
