//! Convex bodies through their sampled support functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, MAX_ROWS};
use crate::sphere::{dot, DomainGrid, Point, ScalarField};
use crate::symfunc::{eig_extremes, sigma_matrix_unchecked, SymMatrix};

/// Support function `h` sampled on a grid.
#[derive(Clone, Debug)]
pub struct SupportField {
    grid: Arc<DomainGrid>,
    h: ScalarField,
}

impl SupportField {
    pub fn new(grid: Arc<DomainGrid>, h: ScalarField) -> Result<Self> {
        grid.check_field(&h)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("support field has non-finite values".into()));
        }
        Ok(SupportField { grid, h })
    }

    pub fn from_fn(grid: Arc<DomainGrid>, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let h = ScalarField::from_fn(&grid, f);
        SupportField::new(grid, h)
    }

    /// Ball of radius `rho` centered at `center` (projected onto the
    /// translations the grid can represent).
    pub fn ball(grid: Arc<DomainGrid>, rho: f64, center: Point) -> Self {
        let c = grid.project_translation(center);
        let h = ScalarField::from_fn(&grid, |x| rho + dot(&c, x));
        SupportField { grid, h }
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn field(&self) -> &ScalarField {
        &self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn into_field(self) -> ScalarField {
        self.h
    }

    pub fn scaled(&self, s: f64) -> SupportField {
        SupportField {
            grid: self.grid.clone(),
            h: self.h.map(|v| s * v),
        }
    }

    /// Support function of the body translated by `c` (projected onto the
    /// translations the grid can carry).
    pub fn translated(&self, c: Point) -> SupportField {
        let lin = self.grid.linear_field(c);
        let h = self.h.iter().zip(lin.iter()).map(|(a, b)| a + b).collect();
        SupportField {
            grid: self.grid.clone(),
            h: ScalarField::new(h),
        }
    }

    pub(crate) fn with_values(&self, h: Vec<f64>) -> SupportField {
        SupportField {
            grid: self.grid.clone(),
            h: ScalarField::new(h),
        }
    }
}

/// Per-node matrix `W = hess h + h I` in the orthonormal frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureMatrixField {
    mats: Vec<SymMatrix>,
}

impl CurvatureMatrixField {
    pub fn matrices(&self) -> &[SymMatrix] {
        &self.mats
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// `sigma_k(W)` at every node.
    pub fn sigma(&self, k: usize) -> Result<Vec<f64>> {
        let d = self.mats.first().map_or(0, |m| m.dim());
        if k == 0 || k > d {
            return Err(Error::Domain(format!("order k = {k} outside 1..={d}")));
        }
        Ok(self.mats.iter().map(|m| sigma_matrix_unchecked(m, k)).collect())
    }

    /// Smallest and largest eigenvalue over all nodes.
    pub fn eigen_range(&self) -> (f64, f64) {
        self.mats.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            let (a, b) = eig_extremes(m);
            (lo.min(a), hi.max(b))
        })
    }
}

pub fn curvature_matrix(h: &SupportField) -> CurvatureMatrixField {
    let g = &h.grid;
    let mats = (0..g.len())
        .map(|p| {
            let mut w = g.hessian_at(&h.h, p);
            w.add_diagonal(h.h[p]);
            w
        })
        .collect();
    CurvatureMatrixField { mats }
}

/// Every node in `Gamma_k` with smallest eigenvalue above `margin`.
pub fn is_strictly_convex(w: &CurvatureMatrixField, k: usize, margin: f64) -> bool {
    w.mats.iter().all(|m| {
        (1..=k).all(|i| sigma_matrix_unchecked(m, i) > 0.0) && eig_extremes(m).0 > margin
    })
}

/// `(1 / omega_n) int x h(x) dx`.
pub fn steiner_point(h: &SupportField) -> Point {
    let m = h.grid.moment(&h.h);
    let w = h.grid.unit_ball_volume();
    [m[0] / w, m[1] / w, m[2] / w]
}

/// Inner and outer radii with the centers that attain them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub inner: f64,
    pub outer: f64,
    pub inner_center: Point,
    pub outer_center: Point,
}

/// Inradius and circumradius of the polytope `{y : y.x_j <= h_j}`.
///
/// Both are linear programs over the multipliers `mu >= 0` with
/// `sum mu = 1` and `sum mu_j x_j = 0`: the inradius is `min sum mu_j h_j`
/// and the circumradius `max sum mu_j h_j`. The centers are the dual
/// variables.
pub fn radii(h: &SupportField) -> Result<Radii> {
    let g = &h.grid;
    let dirs = g.translation_dirs();
    let m = 1 + dirs.len();
    debug_assert!(m <= MAX_ROWS);
    let cols: Vec<[f64; MAX_ROWS]> = g
        .points()
        .iter()
        .map(|x| {
            let mut c = [0.0; MAX_ROWS];
            c[0] = 1.0;
            for (i, d) in dirs.iter().enumerate() {
                c[i + 1] = dot(d, x);
            }
            c
        })
        .collect();
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    let center = |dual: &[f64], sign: f64| {
        let mut z = [0.0; 3];
        for (i, d) in dirs.iter().enumerate() {
            for a in 0..3 {
                z[a] += sign * dual[i + 1] * d[a];
            }
        }
        z
    };

    let inner = lp::minimize(&cols, m, &b, h.values())?;
    let neg: Vec<f64> = h.values().iter().map(|v| -v).collect();
    let outer = lp::minimize(&cols, m, &b, &neg)?;
    Ok(Radii {
        inner: inner.value,
        outer: -outer.value,
        inner_center: center(&inner.dual, 1.0),
        outer_center: center(&outer.dual, -1.0),
    })
}

fn sigma_checked(w: &CurvatureMatrixField, k: usize) -> Result<Vec<f64>> {
    let s = w.sigma(k)?;
    if let Some(p) = w.mats.iter().position(|m| !(1..=k).all(|i| sigma_matrix_unchecked(m, i) > 0.0)) {
        return Err(Error::Domain(format!("W leaves Gamma_{k} at node {p}")));
    }
    Ok(s)
}

/// Quermassintegral from already computed `sigma_k(W)`.
///
/// The support function is centered at its Steiner point first. In the
/// continuum this changes nothing (the first moment of `sigma_k` vanishes);
/// on the grid it makes the value exactly translation invariant.
pub(crate) fn quermass_from_sigma(h: &SupportField, sigma_k: &[f64], k: usize) -> f64 {
    let g = &h.grid;
    let z = steiner_point(h);
    let total: f64 = g
        .points()
        .iter()
        .zip(g.weights())
        .zip(h.values())
        .zip(sigma_k)
        .map(|(((x, w), hv), s)| w * (hv - dot(&z, x)) * s)
        .sum();
    total / (k + 1) as f64
}

/// `W_{n-1-k} = (1 / (k+1)) int h sigma_k(W) dx`.
pub fn quermassintegral(h: &SupportField, k: usize) -> Result<f64> {
    let w = curvature_matrix(h);
    let s = sigma_checked(&w, k)?;
    Ok(quermass_from_sigma(h, &s, k))
}

/// `int x sigma_k(W) dx`, zero for every closed body.
pub fn necessary_condition_residual(h: &SupportField, k: usize) -> Result<Point> {
    let w = curvature_matrix(h);
    let s = w.sigma(k)?;
    Ok(h.grid.moment(&s))
}

/// Snapshot of body-level quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyMetrics {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub steiner: Point,
    /// `W_{n-1-k}`.
    pub quermass: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn body_metrics(h: &SupportField, k: usize) -> Result<BodyMetrics> {
    let w = curvature_matrix(h);
    let s = sigma_checked(&w, k)?;
    let r = radii(h)?;
    let (lambda_min, lambda_max) = w.eigen_range();
    Ok(BodyMetrics {
        inner_radius: r.inner,
        outer_radius: r.outer,
        steiner: steiner_point(h),
        quermass: quermass_from_sigma(h, &s, k),
        sigma_min: s.iter().copied().fold(f64::INFINITY, f64::min),
        sigma_max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lambda_min,
        lambda_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::GridSpec;
    use std::f64::consts::PI;

    fn grid(spec: GridSpec) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(spec).unwrap())
    }

    fn ellipsoid(g: Arc<DomainGrid>, a: f64, b: f64) -> SupportField {
        // axis of revolution e3, equatorial semi-axis a, polar semi-axis b
        SupportField::from_fn(g, |x| {
            let s2 = x[0] * x[0] + x[1] * x[1];
            (a * a * s2 + b * b * x[2] * x[2]).sqrt()
        })
        .unwrap()
    }

    #[test]
    fn ball_matrix() {
        let g = grid(GridSpec::latlong(16, 32));
        let h = SupportField::ball(g, 1.5, [0.1, -0.2, 0.3]);
        for m in curvature_matrix(&h).matrices() {
            assert!((m.get(0, 0) - 1.5).abs() < 1e-10);
            assert!((m.get(1, 1) - 1.5).abs() < 1e-10);
            assert!(m.get(0, 1).abs() < 1e-10);
        }
    }

    #[test]
    fn point_body_not_convex() {
        let g = grid(GridSpec::axisym(32));
        let h = SupportField::new(g.clone(), g.linear_field([0.0, 0.0, 1.0])).unwrap();
        assert!(!is_strictly_convex(&curvature_matrix(&h), 2, 0.0));
        let ball = SupportField::ball(g, 1.0, [0.0; 3]);
        assert!(is_strictly_convex(&curvature_matrix(&ball), 2, 0.99));
    }

    #[test]
    fn translated_ball_radii() {
        for spec in [GridSpec::circle(64), GridSpec::axisym(32), GridSpec::latlong(12, 24)] {
            let g = grid(spec);
            let h = SupportField::ball(g, 0.8, [0.2, -0.1, 0.3]);
            let r = radii(&h).unwrap();
            assert!((r.inner - 0.8).abs() < 1e-12, "{spec}");
            assert!((r.outer - 0.8).abs() < 1e-12, "{spec}");
        }
    }

    #[test]
    fn ellipsoid_radii() {
        let h = ellipsoid(grid(GridSpec::axisym(256)), 2.0, 1.0);
        let r = radii(&h).unwrap();
        assert!((r.inner - 1.0).abs() < 1e-4);
        assert!((r.outer - 2.0).abs() < 1e-4);
    }

    #[test]
    fn ball_quermass() {
        let g = grid(GridSpec::latlong(16, 32));
        let rho = 1.3;
        let h = SupportField::ball(g.clone(), rho, [0.0; 3]);
        assert!((quermassintegral(&h, 2).unwrap() - 4.0 * PI * rho.powi(3) / 3.0).abs() < 1e-10);
        assert!((quermassintegral(&h, 1).unwrap() - 4.0 * PI * rho * rho).abs() < 1e-10);
        let t = h.translated([0.3, 0.1, -0.2]);
        assert!((quermassintegral(&t, 2).unwrap() - 4.0 * PI * rho.powi(3) / 3.0).abs() < 1e-10);
    }

    #[test]
    fn steiner_of_ball() {
        let g = grid(GridSpec::latlong(16, 32));
        let c = [0.3, -0.4, 0.25];
        let z = steiner_point(&SupportField::ball(g, 2.0, c));
        for a in 0..3 {
            assert!((z[a] - c[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_violation_is_domain_error() {
        let g = grid(GridSpec::circle(32));
        let h = SupportField::new(g.clone(), g.linear_field([1.0, 0.0, 0.0]).map(|v| v - 0.5)).unwrap();
        assert!(matches!(quermassintegral(&h, 1), Err(Error::Domain(_))));
    }
}
