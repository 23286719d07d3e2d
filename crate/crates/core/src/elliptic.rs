//! Direct solvers for `sigma_k(hess h + h I) = 1/f_eff`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{curvature_matrix, is_strictly_convex, SupportField};
use crate::krylov::bicgstab;
use crate::sphere::{dot, DomainGrid, GridMode, Point, ScalarField};
use crate::symfunc::{eig_extremes, sigma_matrix_unchecked, sigma_partial_unchecked, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FourierCircle,
    DampedNewton,
}

/// Multiplier applied to Fourier mode `m` by `h'' + h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FourierSymbol {
    /// `1 - m^2`, the continuous operator.
    Continuous,
    /// `1 - sin^2(m d/2) / sin^2(d/2)`, the grid's three-point stencil.
    Discrete,
}

#[derive(Clone, Debug)]
pub struct EllipticSolution {
    pub h: SupportField,
    /// `sup |sigma_k(W(h)) - 1/f_eff|` with the flow's discrete operator.
    pub residual_sup: f64,
    /// The same with linear harmonics removed from the residual.
    pub projected_residual: f64,
    /// Coefficients of the linear harmonics left in the residual.
    pub moment_multiplier: Point,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
}

fn residual(h: &SupportField, inv_f: &[f64], k: usize) -> Vec<f64> {
    let g = h.grid();
    (0..g.len())
        .map(|p| {
            let mut w = g.hessian_at(h.values(), p);
            w.add_diagonal(h.values()[p]);
            sigma_matrix_unchecked(&w, k) - inv_f[p]
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Removes linear harmonics in the quadrature inner product.
struct Projector {
    lin: Vec<Vec<f64>>,
    norms: Vec<f64>,
    dirs: Vec<Point>,
    weights: Vec<f64>,
}

impl Projector {
    fn new(grid: &DomainGrid) -> Self {
        let dirs = grid.translation_dirs();
        let lin: Vec<Vec<f64>> = dirs
            .iter()
            .map(|d| grid.points().iter().map(|x| dot(d, x)).collect())
            .collect();
        let weights = grid.weights().to_vec();
        let norms = lin
            .iter()
            .map(|l| l.iter().zip(&weights).map(|(v, w)| w * v * v).sum())
            .collect();
        Projector {
            lin,
            norms,
            dirs,
            weights,
        }
    }

    fn coefficients(&self, r: &[f64]) -> Vec<f64> {
        self.lin
            .iter()
            .zip(&self.norms)
            .map(|(l, n)| {
                l.iter()
                    .zip(r)
                    .zip(&self.weights)
                    .map(|((a, b), w)| w * a * b)
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    fn remove(&self, r: &mut [f64]) {
        let c = self.coefficients(r);
        for (l, ci) in self.lin.iter().zip(c) {
            for (v, lv) in r.iter_mut().zip(l) {
                *v -= ci * lv;
            }
        }
    }

    fn keep(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let c = self.coefficients(r);
        for (l, ci) in self.lin.iter().zip(c) {
            for (v, lv) in out.iter_mut().zip(l) {
                *v += ci * lv;
            }
        }
    }

    fn as_point(&self, c: &[f64]) -> Point {
        let mut z = [0.0; 3];
        for (ci, d) in c.iter().zip(&self.dirs) {
            for a in 0..3 {
                z[a] += ci * d[a];
            }
        }
        z
    }

    fn weighted_norm(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }
}

/// Solves `h'' + h = 1/f` on a circle grid by Fourier division.
///
/// The first harmonics of `h` are set to zero, which puts the Steiner point
/// at the origin.
pub fn fourier_solve_circle(grid: Arc<DomainGrid>, f: &[f64], symbol: FourierSymbol) -> Result<EllipticSolution> {
    if grid.mode() != GridMode::Circle {
        return Err(Error::Config(format!("Fourier solve needs a circle grid, got {}", grid.spec())));
    }
    grid.check_field(f)?;
    if let Some(p) = f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("f must be positive and finite (node {p})")));
    }
    let n = grid.len();
    let inv_f: Vec<f64> = f.iter().map(|v| 1.0 / v).collect();
    let mut buf: Vec<Complex64> = inv_f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let first = buf[1] / n as f64;
    if first.norm() >= 1e-8 {
        return Err(Error::Unsolvable(format!(
            "first harmonic of 1/f is ({:e}, {:e}); the moment condition fails",
            2.0 * first.re,
            -2.0 * first.im
        )));
    }
    let half_step = std::f64::consts::PI / n as f64;
    for (idx, c) in buf.iter_mut().enumerate() {
        let m = if idx <= n / 2 { idx as i64 } else { idx as i64 - n as i64 };
        if m.abs() == 1 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let s = match symbol {
            FourierSymbol::Continuous => 1.0 - (m * m) as f64,
            FourierSymbol::Discrete => 1.0 - ((m as f64) * half_step).sin().powi(2) / half_step.sin().powi(2),
        };
        *c /= s;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let h = SupportField::new(grid, ScalarField::new(buf.iter().map(|c| c.re / n as f64).collect()))?;
    let r = residual(&h, &inv_f, 1);
    let proj = Projector::new(h.grid());
    let mut pr = r.clone();
    proj.remove(&mut pr);
    Ok(EllipticSolution {
        residual_sup: sup(&r),
        projected_residual: sup(&pr),
        moment_multiplier: proj.as_point(&proj.coefficients(&r)),
        h,
        method: Method::FourierCircle,
        iterations: 0,
        converged: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Stop once `sup |sigma_k - 1/f_eff|` is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of each linear solve.
    pub linear_tol: f64,
    /// Grids up to this many nodes use a dense LU solve.
    pub dense_limit: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 50,
            linear_tol: 1e-10,
            dense_limit: 600,
        }
    }
}

/// Linearization `u -> sum_ij sigma_k^{ij} (hess u + u I)_ij` at `h`.
pub struct Linearization {
    grid: Arc<DomainGrid>,
    partials: Vec<SymMatrix>,
}

impl Linearization {
    pub fn new(h: &SupportField, k: usize) -> Result<Self> {
        let d = h.grid().dim();
        if k == 0 || k > d {
            return Err(Error::Domain(format!("order k = {k} outside 1..={d}")));
        }
        let partials = curvature_matrix(h)
            .matrices()
            .iter()
            .map(|w| sigma_partial_unchecked(w, k))
            .collect();
        Ok(Linearization {
            grid: h.grid().clone(),
            partials,
        })
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            let mut hu = self.grid.hessian_at(u, p);
            hu.add_diagonal(u[p]);
            *o = self.partials[p].contract(&hu);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut e = vec![0.0; n];
        (0..n)
            .map(|p| {
                e[p] = 1.0;
                let mut hu = self.grid.hessian_at(&e, p);
                hu.add_diagonal(1.0);
                e[p] = 0.0;
                self.partials[p].contract(&hu)
            })
            .collect()
    }
}

/// Damped Newton iteration for `sigma_k(W(h)) = 1/f_eff` started at `h_init`.
///
/// Each update solves `(P L P + Q) d = -P R`, where `L` is the
/// linearization, `P` removes linear harmonics and `Q = I - P`.
pub fn newton_solve(h_init: &SupportField, f_eff: &[f64], k: usize, opts: NewtonOptions) -> Result<EllipticSolution> {
    let grid = h_init.grid().clone();
    grid.check_field(f_eff)?;
    if let Some(p) = f_eff.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("f_eff must be positive and finite (node {p})")));
    }
    let d = grid.dim();
    if k == 0 || k > d {
        return Err(Error::Domain(format!("order k = {k} outside 1..={d}")));
    }
    if !is_strictly_convex(&curvature_matrix(h_init), k, 0.0) {
        return Err(Error::Convexity("initial guess is not strictly convex".into()));
    }
    let inv_f: Vec<f64> = f_eff.iter().map(|v| 1.0 / v).collect();
    let moment = grid.moment(&inv_f);
    let moment_norm = dot(&moment, &moment).sqrt();
    if moment_norm > 1e-6 {
        return Err(Error::Unsolvable(format!(
            "first moment of 1/f_eff is {moment_norm:e}, above 1e-6"
        )));
    }

    let n = grid.len();
    let proj = Projector::new(&grid);
    let mut h = h_init.clone();
    let mut r = residual(&h, &inv_f, k);
    let mut pr = r.clone();
    proj.remove(&mut pr);
    let finish = |h: SupportField, r: &[f64], pr: &[f64], it: usize, converged: bool| EllipticSolution {
        residual_sup: sup(r),
        projected_residual: sup(pr),
        moment_multiplier: proj.as_point(&proj.coefficients(r)),
        h,
        method: Method::DampedNewton,
        iterations: it,
        converged,
    };

    for it in 0..=opts.max_iter {
        if sup(&r) < opts.tol {
            return Ok(finish(h, &r, &pr, it, true));
        }
        if sup(&pr) < 1e-3 * opts.tol {
            // remaining residual is a linear harmonic the equation cannot remove
            return Ok(finish(h, &r, &pr, it, false));
        }
        if it == opts.max_iter {
            break;
        }

        let lin = Linearization::new(&h, k)?;
        let apply = |u: &[f64], out: &mut [f64]| {
            let mut pu = u.to_vec();
            proj.remove(&mut pu);
            let mut lu = vec![0.0; n];
            lin.apply(&pu, &mut lu);
            proj.remove(&mut lu);
            let mut qu = vec![0.0; n];
            proj.keep(u, &mut qu);
            for i in 0..n {
                out[i] = lu[i] + qu[i];
            }
        };
        let rhs: Vec<f64> = pr.iter().map(|v| -v).collect();
        let delta = if n <= opts.dense_limit {
            let mut a = nalgebra::DMatrix::zeros(n, n);
            let mut e = vec![0.0; n];
            let mut col = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                apply(&e, &mut col);
                e[j] = 0.0;
                for i in 0..n {
                    a[(i, j)] = col[i];
                }
            }
            a.lu()
                .solve(&nalgebra::DVector::from_vec(rhs))
                .ok_or_else(|| Error::Domain("singular Newton system".into()))?
                .iter()
                .copied()
                .collect::<Vec<f64>>()
        } else {
            let diag = lin.diagonal();
            bicgstab(apply, &diag, &rhs, opts.linear_tol, 20 * n.max(50))?
        };

        let merit = proj.weighted_norm(&pr);
        let mut alpha = 1.0;
        let mut lost_convexity = false;
        loop {
            let trial: Vec<f64> = h.values().iter().zip(&delta).map(|(a, b)| a + alpha * b).collect();
            let cand = h.with_values(trial);
            if is_strictly_convex(&curvature_matrix(&cand), k, 0.0) {
                let r_new = residual(&cand, &inv_f, k);
                let mut pr_new = r_new.clone();
                proj.remove(&mut pr_new);
                if proj.weighted_norm(&pr_new) < merit {
                    h = cand;
                    r = r_new;
                    pr = pr_new;
                    break;
                }
            } else {
                lost_convexity = true;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                let last = Some(h.values().to_vec());
                return Err(if lost_convexity {
                    Error::Convexity(format!(
                        "damping could not keep the iterate strictly convex at iteration {it}; last convex residual {:e}",
                        sup(&r)
                    ))
                } else {
                    Error::NonConvergence {
                        what: "newton damping",
                        iterations: it,
                        detail: format!("no decrease from residual {:e}", sup(&r)),
                        last,
                    }
                });
            }
        }
    }
    Err(Error::NonConvergence {
        what: "newton",
        iterations: opts.max_iter,
        detail: format!("residual {:e}", sup(&r)),
        last: Some(h.values().to_vec()),
    })
}

/// Whether `hess f^{1/k} + f^{1/k} I` is positive semidefinite everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub min_eigenvalue: f64,
    pub node: usize,
    pub satisfied: bool,
}

pub fn check_condition_ii(grid: &DomainGrid, f: &[f64], k: usize) -> Result<ConditionReport> {
    grid.check_field(f)?;
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    let g: Vec<f64> = f.iter().map(|v| v.powf(1.0 / k as f64)).collect();
    let mut best = (f64::INFINITY, 0);
    for p in 0..grid.len() {
        let mut m = grid.hessian_at(&g, p);
        m.add_diagonal(g[p]);
        let lo = eig_extremes(&m).0;
        if lo < best.0 {
            best = (lo, p);
        }
    }
    Ok(ConditionReport {
        min_eigenvalue: best.0,
        node: best.1,
        satisfied: best.0 >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::GridSpec;

    fn circle(n: usize) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(GridSpec::circle(n)).unwrap())
    }

    #[test]
    fn constant_density() {
        let g = circle(64);
        let sol = fourier_solve_circle(g, &[1.0; 64], FourierSymbol::Continuous).unwrap();
        assert!(sol.h.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn second_harmonic() {
        let g = circle(64);
        let eps = 0.3;
        let f = ScalarField::from_fn(&g, |x| 1.0 / (1.0 + eps * (2.0 * x[1].atan2(x[0])).cos()));
        let sol = fourier_solve_circle(g.clone(), &f, FourierSymbol::Continuous).unwrap();
        for (v, x) in sol.h.values().iter().zip(g.points()) {
            let phi = x[1].atan2(x[0]);
            assert!((v - (1.0 - eps / 3.0 * (2.0 * phi).cos())).abs() < 1e-13);
        }
    }

    #[test]
    fn resonant_is_unsolvable() {
        let g = circle(64);
        let f = ScalarField::from_fn(&g, |x| 1.0 / (1.0 + 0.2 * x[0]));
        assert!(matches!(
            fourier_solve_circle(g, &f, FourierSymbol::Continuous),
            Err(Error::Unsolvable(_))
        ));
    }

    #[test]
    fn newton_constant_solution() {
        let g = Arc::new(DomainGrid::new(GridSpec::axisym(32)).unwrap());
        let h = SupportField::ball(g.clone(), 1.1, [0.0; 3]);
        let sol = newton_solve(&h, &vec![1.0; g.len()], 2, NewtonOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.h.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn condition_ii_constant() {
        let g = DomainGrid::new(GridSpec::latlong(8, 16)).unwrap();
        let r = check_condition_ii(&g, &vec![2.0; g.len()], 2).unwrap();
        assert!(r.satisfied);
        assert!((r.min_eigenvalue - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
