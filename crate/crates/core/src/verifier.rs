//! Population checks of the quantitative estimates on bodies and runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::RandomBodies;
use crate::error::{Error, Result};
use crate::flow::RunOutcome;
use crate::geometry::{curvature_matrix, necessary_condition_residual, radii, SupportField};
use crate::sphere::{norm, DomainGrid, GridMode, GridSpec, Point};
use crate::symfunc::eig_extremes;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub population: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub bound: f64,
    pub pass: bool,
    /// Index of the first sample outside the bound.
    pub offending: Option<usize>,
    pub seed: Option<u64>,
    pub details: BTreeMap<String, f64>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {:>6} worst={:<12.6e} bound={:<12.6e} {}",
            self.check,
            self.population,
            self.worst,
            self.bound,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// `4 sqrt(2) n^6`, the explicit constant in the non-collapsing estimate.
pub fn chou_wang_bound(n: usize) -> f64 {
    4.0 * 2f64.sqrt() * (n as f64).powi(6)
}

/// `R^2 / (r lambda_max)` of one body.
pub fn chou_wang_ratio(h: &SupportField) -> Result<f64> {
    let r = radii(h)?;
    let (_, lambda_max) = curvature_matrix(h).eigen_range();
    if !(r.inner > 0.0 && lambda_max > 0.0) {
        return Err(Error::Domain("body is degenerate (r or lambda_max not positive)".into()));
    }
    Ok(r.outer * r.outer / (r.inner * lambda_max))
}

/// Checks `R^2 / (r lambda_max) <= 4 sqrt(2) n^6` on every body.
pub fn check_chou_wang(bodies: &[SupportField]) -> Result<CheckReport> {
    let n = bodies.first().map_or(3, |b| b.grid().ambient_dim());
    let bound = chou_wang_bound(n);
    let ratios: Vec<f64> = bodies
        .par_iter()
        .map(chou_wang_ratio)
        .collect::<Result<Vec<_>>>()?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let offending = ratios.iter().position(|&r| !(r <= bound));
    let mut details = BTreeMap::new();
    details.insert("min_ratio".into(), ratios.iter().copied().fold(f64::INFINITY, f64::min));
    Ok(CheckReport {
        check: "chou-wang".into(),
        population: bodies.len(),
        worst,
        bound,
        pass: offending.is_none(),
        offending,
        seed: None,
        details,
    })
}

/// Random population plus ellipsoids of revolution with axis ratios up to 20.
pub fn chou_wang_population(grid: &Arc<DomainGrid>, count: usize, seed: u64) -> Result<CheckReport> {
    let gen = RandomBodies::new(seed);
    let mut bodies: Vec<SupportField> = (0..count as u64)
        .into_par_iter()
        .map(|i| gen.body(grid, i))
        .collect::<Result<Vec<_>>>()?;
    let n_random = bodies.len();
    for ratio in [1.0, 2.0, 5.0, 10.0, 20.0] {
        for (a, b) in [(ratio, 1.0), (1.0, ratio)] {
            let axes = match grid.mode() {
                GridMode::Circle => [a, b, 0.0],
                _ => [a, a, b],
            };
            bodies.push(SupportField::from_fn(grid.clone(), |x| {
                crate::bodies::ellipsoid_support(axes, x)
            })?);
        }
    }
    let mut report = check_chou_wang(&bodies)?;
    report.seed = Some(seed);
    report.details.insert("random_bodies".into(), n_random as f64);
    report
        .details
        .insert("ellipsoids".into(), (bodies.len() - n_random) as f64);
    Ok(report)
}

/// Meridional radius `a^2 b^2 / (a^2 sin^2 t + b^2 cos^2 t)^{3/2}` of the
/// ellipsoid of revolution, `t` the angle of the normal to the axis.
pub fn ellipsoid_meridional_radius(a: f64, b: f64, theta: f64) -> f64 {
    let q = a * a * theta.sin().powi(2) + b * b * theta.cos().powi(2);
    a * a * b * b / q.powf(1.5)
}

/// Boundary point with outer normal `(sin t, cos t)` as `(|y'|, y_n)`.
pub fn ellipsoid_boundary_point(a: f64, b: f64, theta: f64) -> (f64, f64) {
    let h = (a * a * theta.sin().powi(2) + b * b * theta.cos().powi(2)).sqrt();
    (a * a * theta.sin().abs() / h, b * b * theta.cos() / h)
}

/// Both lower bounds on the largest principal radius at `y`.
pub fn ellipsoid_radius_bounds(a: f64, b: f64, y_perp: f64, y_n: f64) -> (f64, f64) {
    let first = (b.powi(4) + (a * a - b * b) * y_n * y_n).powf(1.5) / (a * b.powi(4));
    let second = (y_perp / a).powi(3) * b * b / a;
    (first, second)
}

struct EllipsoidErrors {
    meridional: f64,
    map: f64,
    /// Largest `|lambda_discrete - lambda_exact|` of the top eigenvalue.
    top: f64,
}

/// Angle of the normal at node `x` from the axis of revolution.
fn axis_angle(mode: GridMode, x: &Point) -> f64 {
    match mode {
        GridMode::Circle => x[0].abs().min(1.0).acos(),
        _ => x[2].clamp(-1.0, 1.0).acos(),
    }
}

/// Axis of revolution and the perpendicular radial direction at `x`.
fn axis_coords(mode: GridMode, y: &Point) -> (f64, f64) {
    match mode {
        GridMode::Circle => (y[1].abs(), y[0]),
        _ => ((y[0] * y[0] + y[1] * y[1]).sqrt(), y[2]),
    }
}

fn ellipsoid_axes(mode: GridMode, a: f64, b: f64) -> Point {
    match mode {
        // the axis of revolution is e1 on the circle
        GridMode::Circle => [b, a, 0.0],
        _ => [a, a, b],
    }
}

fn ellipsoid_errors(grid: &Arc<DomainGrid>, a: f64, b: f64) -> Result<EllipsoidErrors> {
    let mode = grid.mode();
    let axes = ellipsoid_axes(mode, a, b);
    let h = SupportField::from_fn(grid.clone(), |x| crate::bodies::ellipsoid_support(axes, x))?;
    let w = curvature_matrix(&h);
    let grad = grid.gradient(h.values())?;
    let mut out = EllipsoidErrors {
        meridional: 0.0,
        map: 0.0,
        top: 0.0,
    };
    for p in 0..grid.len() {
        let x = grid.points()[p];
        let t = axis_angle(mode, &x);
        let m = &w.matrices()[p];
        // e_1 of the frame is the meridional direction except on the circle,
        // where it is the only direction
        out.meridional = out.meridional.max((m.get(0, 0) - ellipsoid_meridional_radius(a, b, t)).abs());
        let hx = h.values()[p];
        let lat = a * a / hx;
        let exact_top = if mode == GridMode::Circle {
            ellipsoid_meridional_radius(a, b, t)
        } else {
            ellipsoid_meridional_radius(a, b, t).max(lat)
        };
        out.top = out.top.max((eig_extremes(m).1 - exact_top).abs());
        let [e1, e2] = grid.frames()[p];
        let mut y = [0.0; 3];
        let mut exact = [0.0; 3];
        for c in 0..3 {
            y[c] = grad[p][0] * e1[c] + grad[p][1] * e2[c] + hx * x[c];
            exact[c] = axes[c] * axes[c] * x[c] / hx;
        }
        let diff = [y[0] - exact[0], y[1] - exact[1], y[2] - exact[2]];
        out.map = out.map.max(norm(&diff));
    }
    Ok(out)
}

fn refined(spec: GridSpec) -> GridSpec {
    match spec.mode {
        GridMode::Circle => GridSpec::circle(2 * spec.n_phi),
        GridMode::Axisym => GridSpec::axisym(2 * spec.n_theta),
        GridMode::Latlong => GridSpec::latlong(2 * spec.n_theta, 2 * spec.n_phi),
    }
}

/// Closed-form radius, boundary map and radius bounds of the ellipsoid of
/// revolution with equatorial semi-axis `a` and polar semi-axis `b`.
///
/// The discrete parts must converge at second order (error ratio at least 3
/// under one refinement); the inequality chain is checked pointwise on the
/// closed forms with slack `1e-8`, and on the discrete top eigenvalue with
/// its measured discretization error as extra slack.
pub fn check_ellipsoid_formulas(a: f64, b: f64, grid: &Arc<DomainGrid>) -> Result<CheckReport> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain("semi-axes must be positive".into()));
    }
    let mode = grid.mode();
    let coarse = ellipsoid_errors(grid, a, b)?;
    let fine_grid = Arc::new(DomainGrid::new(refined(grid.spec()))?);
    let fine = ellipsoid_errors(&fine_grid, a, b)?;
    let order = |c: f64, f: f64| if c < 1e-12 { f64::INFINITY } else { c / f.max(1e-300) };
    let meridional_order = order(coarse.meridional, fine.meridional);
    let map_order = order(coarse.map, fine.map);

    let slack = 1e-8;
    let mut chain_min: f64 = f64::INFINITY;
    let mut b8_defect: f64 = 0.0;
    let mut discrete_min: f64 = f64::INFINITY;
    let mut offending = None;
    let axes = ellipsoid_axes(mode, a, b);
    let h = SupportField::from_fn(grid.clone(), |x| crate::bodies::ellipsoid_support(axes, x))?;
    let w = curvature_matrix(&h);
    for p in 0..grid.len() {
        let x = grid.points()[p];
        let t = axis_angle(mode, &x);
        let (y_perp, y_n) = ellipsoid_boundary_point(a, b, t);
        let merid = ellipsoid_meridional_radius(a, b, t);
        let lambda = if mode == GridMode::Circle {
            merid
        } else {
            merid.max(a * a / h.values()[p])
        };
        let (first, second) = ellipsoid_radius_bounds(a, b, y_perp, y_n);
        let lhs = (b.powi(4) + (a * a - b * b) * y_n * y_n) / b.powi(4);
        let mid = y_perp * y_perp / (a * a) + (a * a - y_perp * y_perp) / (b * b);
        b8_defect = b8_defect.max((lhs - mid).abs() / lhs);
        let gap = (lambda - first).min(first - second) / lambda.max(1.0);
        chain_min = chain_min.min(gap);
        if (gap < -slack || mid < y_perp * y_perp / (a * a) - slack) && offending.is_none() {
            offending = Some(p);
        }
        let lam_disc = eig_extremes(&w.matrices()[p]).1;
        discrete_min = discrete_min.min(lam_disc - first + coarse.top);
        // sanity: the coordinates of the exact boundary point
        debug_assert!({
            let (yp, yn) = axis_coords(mode, &[a * a * x[0] / h.values()[p], a * a * x[1] / h.values()[p], b * b * x[2] / h.values()[p]]);
            mode == GridMode::Circle || ((yp - y_perp).abs() < 1e-9 && (yn - y_n).abs() < 1e-9)
        });
    }

    let order_ok = meridional_order >= 3.0 && map_order >= 3.0;
    let chain_ok = offending.is_none() && b8_defect <= slack && discrete_min >= -1e-6;
    let mut details = BTreeMap::new();
    details.insert("meridional_error".into(), coarse.meridional);
    details.insert("meridional_error_refined".into(), fine.meridional);
    details.insert("meridional_order_ratio".into(), meridional_order);
    details.insert("map_error".into(), coarse.map);
    details.insert("map_error_refined".into(), fine.map);
    details.insert("map_order_ratio".into(), map_order);
    details.insert("chain_min_gap".into(), chain_min);
    details.insert("b8_relative_defect".into(), b8_defect);
    details.insert("discrete_min_gap".into(), discrete_min);
    details.insert("discretization_margin".into(), coarse.top);
    Ok(CheckReport {
        check: "ellipsoid".into(),
        population: grid.len(),
        worst: chain_min,
        bound: -slack,
        pass: order_ok && chain_ok,
        offending,
        seed: None,
        details,
    })
}

/// Observed constants along a run: `sigma_k` range, the non-collapsing
/// ratio `r lambda_max / R^2` against `1 / (4 sqrt(2) n^6)`, the inradius
/// floor, `lambda_max / (1 + R_0)^{3/2}` and the Steiner drift.
pub fn check_run_estimates(run: &RunOutcome, ambient_dim: usize) -> Result<CheckReport> {
    let snaps = &run.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Config("run has fewer than two snapshots".into()));
    }
    let bound = 1.0 / chou_wang_bound(ambient_dim);
    let outer_sup = snaps.iter().map(|s| s.metrics.outer_radius).fold(0.0, f64::max);
    let mut sigma_min = f64::INFINITY;
    let mut sigma_max: f64 = 0.0;
    let mut ratio_min = f64::INFINITY;
    let mut r_min = f64::INFINITY;
    let mut lambda_ratio: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let z0 = snaps[0].metrics.steiner;
    let mut offending = None;
    for (i, s) in snaps.iter().enumerate() {
        let m = &s.metrics;
        sigma_min = sigma_min.min(m.sigma_min);
        sigma_max = sigma_max.max(m.sigma_max);
        let ratio = m.inner_radius * m.lambda_max / (m.outer_radius * m.outer_radius);
        ratio_min = ratio_min.min(ratio);
        r_min = r_min.min(m.inner_radius);
        lambda_ratio = lambda_ratio.max(m.lambda_max / (1.0 + outer_sup).powf(1.5));
        let dz = [m.steiner[0] - z0[0], m.steiner[1] - z0[1], m.steiner[2] - z0[2]];
        drift = drift.max(norm(&dz));
        if (!(m.sigma_min > 0.0) || !(m.inner_radius > 0.0) || !(ratio >= bound)) && offending.is_none() {
            offending = Some(i);
        }
    }
    let mut details = BTreeMap::new();
    details.insert("sigma_min".into(), sigma_min);
    details.insert("sigma_max".into(), sigma_max);
    details.insert("inradius_min".into(), r_min);
    details.insert("lambda_over_outer_pow".into(), lambda_ratio);
    details.insert("steiner_drift".into(), drift);
    details.insert("steiner_initial_norm".into(), norm(&z0));
    Ok(CheckReport {
        check: "run-estimates".into(),
        population: snaps.len(),
        worst: ratio_min,
        bound,
        pass: offending.is_none(),
        offending,
        seed: None,
        details,
    })
}

/// `|int x sigma_k dx|` of random bodies on each grid in `specs` (coarse to
/// fine). `worst` is the largest residual on the finest grid; `bound` is the
/// caller's threshold.
pub fn check_necessary_condition(
    specs: &[GridSpec],
    count: usize,
    seed: u64,
    k: usize,
    bound: f64,
) -> Result<CheckReport> {
    let grids: Vec<Arc<DomainGrid>> = specs
        .iter()
        .map(|s| DomainGrid::new(*s).map(Arc::new))
        .collect::<Result<_>>()?;
    let finest = grids.last().ok_or_else(|| Error::Config("no grids given".into()))?;
    let gen = RandomBodies::new(seed);
    let per_body: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            grids
                .iter()
                .map(|g| {
                    let b = gen.body_checked_on(g, finest, i)?;
                    Ok(norm(&necessary_condition_residual(&b, k)?))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut details = BTreeMap::new();
    for (gi, s) in specs.iter().enumerate() {
        let worst = per_body.iter().map(|v| v[gi]).fold(0.0, f64::max);
        details.insert(format!("max_residual[{s}]"), worst);
    }
    let mut min_ratio = f64::INFINITY;
    for gi in 1..specs.len() {
        for v in &per_body {
            if v[gi - 1] > 1e-13 {
                min_ratio = min_ratio.min(v[gi - 1] / v[gi].max(1e-300));
            }
        }
    }
    details.insert("min_refinement_ratio".into(), min_ratio);
    let last = specs.len() - 1;
    let worst = per_body.iter().map(|v| v[last]).fold(0.0, f64::max);
    let offending = per_body.iter().position(|v| !(v[last] < bound));
    Ok(CheckReport {
        check: "necessary-condition".into(),
        population: count,
        worst,
        bound,
        pass: offending.is_none(),
        offending,
        seed: Some(seed),
        details,
    })
}
