//! The weighting vector `xi` with `int x e^{-xi.x} / f dx = 0`.
//!
//! `xi` minimizes the strictly convex `Phi(xi) = int e^{-xi.x} / f dx`, so
//! Newton's method with a backtracking line search on `Phi` finds it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{dot, DomainGrid, Point};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const NOISE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiResult {
    pub xi: Point,
    /// `|int x e^{-xi.x} / f dx|` with `1/f` rescaled to mean one.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Phi` at each iterate, starting at `xi = 0` (same rescaling).
    pub objective: Vec<f64>,
}

struct Moments {
    phi: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

fn moments(a: &[f64], coords: &[Vec<f64>], c: &[f64]) -> Moments {
    let m = c.len();
    let mut out = Moments {
        phi: 0.0,
        grad: vec![0.0; m],
        hess: vec![vec![0.0; m]; m],
    };
    for (aj, xj) in a.iter().zip(coords) {
        let e = aj * (-xj.iter().zip(c).map(|(x, ci)| x * ci).sum::<f64>()).exp();
        out.phi += e;
        for i in 0..m {
            out.grad[i] += e * xj[i];
            for l in 0..m {
                out.hess[i][l] += e * xj[i] * xj[l];
            }
        }
    }
    out
}

fn phi(a: &[f64], coords: &[Vec<f64>], c: &[f64]) -> f64 {
    a.iter()
        .zip(coords)
        .map(|(aj, xj)| aj * (-xj.iter().zip(c).map(|(x, ci)| x * ci).sum::<f64>()).exp())
        .sum()
}

/// Solves the moment equation on the grid's quadrature.
///
/// On axisymmetric grids only the axial component is solved for.
pub fn solve_xi(f: &[f64], grid: &DomainGrid) -> Result<XiResult> {
    grid.check_field(f)?;
    if let Some(p) = f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("f must be positive and finite (node {p})")));
    }
    let dirs = grid.translation_dirs();
    let m = dirs.len();
    let coords: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|x| dirs.iter().map(|d| dot(d, x)).collect())
        .collect();
    let raw: Vec<f64> = grid.weights().iter().zip(f).map(|(w, fv)| w / fv).collect();
    let mean = raw.iter().sum::<f64>() / grid.sphere_measure();
    let a: Vec<f64> = raw.iter().map(|v| v / mean).collect();

    let to_point = |c: &[f64]| {
        let mut xi = [0.0; 3];
        for (ci, d) in c.iter().zip(&dirs) {
            for k in 0..3 {
                xi[k] += ci * d[k];
            }
        }
        xi
    };

    let mut c = vec![0.0; m];
    let mut objective = Vec::new();
    for it in 0..=MAX_ITERATIONS {
        let mo = moments(&a, &coords, &c);
        objective.push(mo.phi);
        let res = mo.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if res < TOLERANCE {
            return Ok(XiResult {
                xi: to_point(&c),
                residual_norm: res,
                iterations: it,
                converged: true,
                objective,
            });
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "xi newton",
                iterations: it,
                detail: format!("residual {res:e}"),
                last: Some(to_point(&c).to_vec()),
            });
        }
        // Newton direction: hess p = grad (gradient of Phi is -grad)
        let h = nalgebra::DMatrix::from_fn(m, m, |i, l| mo.hess[i][l]);
        let g = nalgebra::DVector::from_column_slice(&mo.grad);
        let p = h
            .cholesky()
            .map(|ch| ch.solve(&g))
            .ok_or_else(|| Error::Domain("moment matrix not positive definite".into()))?;
        let slope = -g.dot(&p);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = c.iter().zip(p.iter()).map(|(ci, pi)| ci + alpha * pi).collect();
            let v = phi(&a, &coords, &trial);
            if v <= mo.phi + ARMIJO * alpha * slope {
                c = trial;
                break;
            }
            // close to the minimum the decrease of Phi drowns in rounding;
            // fall back to a decrease of the moment residual
            if v <= mo.phi + NOISE * mo.phi.abs() {
                let g_trial = moments(&a, &coords, &trial).grad;
                if g_trial.iter().map(|g| g * g).sum::<f64>().sqrt() < res {
                    c = trial;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::NonConvergence {
                    what: "xi line search",
                    iterations: it,
                    detail: format!("no decrease at residual {res:e}"),
                    last: Some(to_point(&c).to_vec()),
                });
            }
        }
    }
    unreachable!("loop returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{GridSpec, ScalarField};

    #[test]
    fn constant_density_gives_zero() {
        let g = DomainGrid::new(GridSpec::latlong(16, 32)).unwrap();
        let r = solve_xi(&ScalarField::constant(&g, 3.0), &g).unwrap();
        assert!(r.converged);
        assert!(r.xi.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn exponential_density() {
        let g = DomainGrid::new(GridSpec::latlong(24, 48)).unwrap();
        let v = [0.3, -0.5, 0.4];
        let f = ScalarField::from_fn(&g, |x| (-dot(&v, x)).exp());
        let r = solve_xi(&f, &g).unwrap();
        for i in 0..3 {
            assert!((r.xi[i] - v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive() {
        let g = DomainGrid::new(GridSpec::circle(16)).unwrap();
        let mut f = vec![1.0; 16];
        f[3] = 0.0;
        assert!(matches!(solve_xi(&f, &g), Err(Error::Domain(_))));
    }
}
