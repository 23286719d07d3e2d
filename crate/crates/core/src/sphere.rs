//! Grids on `S^1` and `S^2` and the covariant operators acting on them.
//!
//! Three layouts are supported: a uniform circle, an axisymmetric meridian
//! profile and a latitude-longitude grid. Latitudes are cell centered,
//! `theta_i = (i + 1/2) pi / N`, so no node sits on a pole. Values beyond a
//! pole are read from the node across it (`(theta, phi) -> (-theta, phi + pi)`).
//!
//! Difference quotients use trigonometric denominators (`4 sin^2(d/2)` and
//! `2 sin d` instead of `d^2` and `2 d`). They are second order for smooth
//! fields and exact on first harmonics, so restrictions of linear functions
//! have `hess h + h I = 0` up to rounding.
//!
//! Quadrature: trapezoid in longitude and Fejer's first rule in `cos theta`,
//! whose nodes are exactly the cell-centered latitudes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symfunc::SymMatrix;

/// Point of the ambient space. For circle grids the third entry is zero.
pub type Point = [f64; 3];

pub const DEFAULT_CIRCLE: usize = 256;
pub const DEFAULT_AXISYM: usize = 256;
pub const DEFAULT_LATLONG: (usize, usize) = (96, 192);

const MIN_NODES_PER_CIRCLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Circle,
    Axisym,
    Latlong,
}

/// Resolution and layout; the textual form is `circle:256`, `axisym:256`
/// or `latlong:96x192`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: GridMode,
    /// Number of latitude rings (axisym, latlong).
    pub n_theta: usize,
    /// Number of longitudes (circle, latlong).
    pub n_phi: usize,
}

impl GridSpec {
    pub fn circle(n: usize) -> Self {
        GridSpec {
            mode: GridMode::Circle,
            n_theta: 0,
            n_phi: n,
        }
    }

    pub fn axisym(n: usize) -> Self {
        GridSpec {
            mode: GridMode::Axisym,
            n_theta: n,
            n_phi: 0,
        }
    }

    pub fn latlong(n_theta: usize, n_phi: usize) -> Self {
        GridSpec {
            mode: GridMode::Latlong,
            n_theta,
            n_phi,
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            GridMode::Circle => write!(f, "circle:{}", self.n_phi),
            GridMode::Axisym => write!(f, "axisym:{}", self.n_theta),
            GridMode::Latlong => write!(f, "latlong:{}x{}", self.n_theta, self.n_phi),
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse grid spec {s:?}"));
        let (mode, res) = match s.split_once(':') {
            Some((m, r)) => (m.trim(), Some(r.trim())),
            None => (s.trim(), None),
        };
        let parse = |r: &str| r.parse::<usize>().map_err(|_| bad());
        match mode {
            "circle" => Ok(GridSpec::circle(res.map(parse).transpose()?.unwrap_or(DEFAULT_CIRCLE))),
            "axisym" => Ok(GridSpec::axisym(res.map(parse).transpose()?.unwrap_or(DEFAULT_AXISYM))),
            "latlong" => match res {
                None => Ok(GridSpec::latlong(DEFAULT_LATLONG.0, DEFAULT_LATLONG.1)),
                Some(r) => {
                    let (a, b) = r.split_once('x').ok_or_else(bad)?;
                    Ok(GridSpec::latlong(parse(a)?, parse(b)?))
                }
            },
            _ => Err(bad()),
        }
    }
}

/// One real value per grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        ScalarField(values)
    }

    pub fn constant(grid: &DomainGrid, c: f64) -> Self {
        ScalarField(vec![c; grid.len()])
    }

    /// Samples `f` at the node unit vectors.
    pub fn from_fn(grid: &DomainGrid, f: impl Fn(&Point) -> f64) -> Self {
        ScalarField(grid.points().iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Ring {
    sin: f64,
    cot: f64,
}

/// Immutable grid with nodes, quadrature weights, tangent frames and
/// stencil constants.
#[derive(Clone, Debug)]
pub struct DomainGrid {
    spec: GridSpec,
    points: Vec<Point>,
    weights: Vec<f64>,
    frames: Vec<[Point; 2]>,
    thetas: Vec<f64>,
    phis: Vec<f64>,
    rings: Vec<Ring>,
    c2_theta: f64,
    c1_theta: f64,
    c2_phi: f64,
    c1_phi: f64,
}

/// Fejer's first rule on `[-1, 1]` at `mu_i = cos((i + 1/2) pi / n)`.
fn fejer_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * PI / n as f64;
            let s: f64 = (1..=n / 2)
                .map(|j| (2.0 * j as f64 * t).cos() / (4.0 * (j * j) as f64 - 1.0))
                .sum();
            2.0 / n as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

impl DomainGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        match spec.mode {
            GridMode::Circle => {
                if spec.n_phi < MIN_NODES_PER_CIRCLE {
                    return Err(Error::Config(format!(
                        "circle grid needs at least {MIN_NODES_PER_CIRCLE} nodes, got {}",
                        spec.n_phi
                    )));
                }
            }
            GridMode::Axisym => {
                if spec.n_theta < MIN_NODES_PER_CIRCLE {
                    return Err(Error::Config(format!(
                        "axisymmetric grid needs at least {MIN_NODES_PER_CIRCLE} rings, got {}",
                        spec.n_theta
                    )));
                }
            }
            GridMode::Latlong => {
                if spec.n_phi < MIN_NODES_PER_CIRCLE || spec.n_phi % 2 != 0 {
                    return Err(Error::Config(format!(
                        "lat-long grid needs an even number >= {MIN_NODES_PER_CIRCLE} of longitudes, got {}",
                        spec.n_phi
                    )));
                }
                if spec.n_theta < MIN_NODES_PER_CIRCLE / 2 {
                    return Err(Error::Config(format!(
                        "lat-long grid needs at least {} rings, got {}",
                        MIN_NODES_PER_CIRCLE / 2,
                        spec.n_theta
                    )));
                }
            }
        }

        let dtheta = if spec.n_theta > 0 { PI / spec.n_theta as f64 } else { 0.0 };
        let dphi = if spec.n_phi > 0 { 2.0 * PI / spec.n_phi as f64 } else { 0.0 };
        let thetas: Vec<f64> = (0..spec.n_theta).map(|i| (i as f64 + 0.5) * dtheta).collect();
        let phis: Vec<f64> = (0..spec.n_phi).map(|j| j as f64 * dphi).collect();
        let rings = thetas
            .iter()
            .map(|&t| Ring {
                sin: t.sin(),
                cot: t.cos() / t.sin(),
            })
            .collect();
        let (c2_theta, c1_theta) = if dtheta > 0.0 {
            (1.0 / (4.0 * (0.5 * dtheta).sin().powi(2)), 1.0 / (2.0 * dtheta.sin()))
        } else {
            (0.0, 0.0)
        };
        let (c2_phi, c1_phi) = if dphi > 0.0 {
            (1.0 / (4.0 * (0.5 * dphi).sin().powi(2)), 1.0 / (2.0 * dphi.sin()))
        } else {
            (0.0, 0.0)
        };

        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut frames = Vec::new();
        match spec.mode {
            GridMode::Circle => {
                for &p in &phis {
                    let (s, c) = p.sin_cos();
                    points.push([c, s, 0.0]);
                    frames.push([[-s, c, 0.0], [0.0; 3]]);
                    weights.push(dphi);
                }
            }
            GridMode::Axisym => {
                let fw = fejer_weights(spec.n_theta);
                for (i, &t) in thetas.iter().enumerate() {
                    let (s, c) = t.sin_cos();
                    points.push([s, 0.0, c]);
                    frames.push([[c, 0.0, -s], [0.0, 1.0, 0.0]]);
                    weights.push(2.0 * PI * fw[i]);
                }
            }
            GridMode::Latlong => {
                let fw = fejer_weights(spec.n_theta);
                for (i, &t) in thetas.iter().enumerate() {
                    let (st, ct) = t.sin_cos();
                    for &p in &phis {
                        let (sp, cp) = p.sin_cos();
                        points.push([st * cp, st * sp, ct]);
                        frames.push([[ct * cp, ct * sp, -st], [-sp, cp, 0.0]]);
                        weights.push(dphi * fw[i]);
                    }
                }
            }
        }

        Ok(DomainGrid {
            spec,
            points,
            weights,
            frames,
            thetas,
            phis,
            rings,
            c2_theta,
            c1_theta,
            c2_phi,
            c1_phi,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn mode(&self) -> GridMode {
        self.spec.mode
    }

    /// Dimension `n` of the ambient space.
    pub fn ambient_dim(&self) -> usize {
        match self.spec.mode {
            GridMode::Circle => 2,
            _ => 3,
        }
    }

    /// Dimension `n - 1` of the sphere (size of the curvature matrices).
    pub fn dim(&self) -> usize {
        self.ambient_dim() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Orthonormal tangent frame `(e_1, e_2)` at each node; `e_2` is zero on
    /// the circle.
    pub fn frames(&self) -> &[[Point; 2]] {
        &self.frames
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    /// Volume of the unit ball in the ambient space.
    pub fn unit_ball_volume(&self) -> f64 {
        match self.ambient_dim() {
            2 => PI,
            _ => 4.0 * PI / 3.0,
        }
    }

    /// Total measure of the sphere.
    pub fn sphere_measure(&self) -> f64 {
        match self.ambient_dim() {
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        }
    }

    /// Unit directions in which a translation is representable on this grid.
    /// Axisymmetric grids only carry translations along the axis.
    pub fn translation_dirs(&self) -> Vec<Point> {
        match self.spec.mode {
            GridMode::Circle => vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            GridMode::Axisym => vec![[0.0, 0.0, 1.0]],
            GridMode::Latlong => vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Projects a vector onto the representable translations.
    pub fn project_translation(&self, c: Point) -> Point {
        match self.spec.mode {
            GridMode::Circle => [c[0], c[1], 0.0],
            GridMode::Axisym => [0.0, 0.0, c[2]],
            GridMode::Latlong => c,
        }
    }

    /// Values of the linear function `x -> c . x` (restricted to the
    /// representable translations).
    pub fn linear_field(&self, c: Point) -> ScalarField {
        let c = self.project_translation(c);
        ScalarField(self.points.iter().map(|x| dot(&c, x)).collect())
    }

    pub fn check_field(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Config(format!(
                "field has {} values but grid {} has {} nodes",
                values.len(),
                self.spec,
                self.len()
            )));
        }
        Ok(())
    }

    /// Quadrature `sum_j w_j g_j`, accumulated in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// First moment `int x g(x) dx`.
    pub fn moment(&self, values: &[f64]) -> Point {
        debug_assert_eq!(values.len(), self.len());
        let mut m = [0.0; 3];
        for ((x, w), v) in self.points.iter().zip(&self.weights).zip(values) {
            for a in 0..3 {
                m[a] += w * v * x[a];
            }
        }
        self.project_translation(m)
    }

    /// Node index on a lat-long grid, with wrap in longitude and reflection
    /// across the poles.
    #[inline]
    fn ll_index(&self, i: isize, j: isize) -> usize {
        let nt = self.spec.n_theta as isize;
        let np = self.spec.n_phi as isize;
        let (i, j) = if i < 0 {
            (-1 - i, j + np / 2)
        } else if i >= nt {
            (2 * nt - 1 - i, j + np / 2)
        } else {
            (i, j)
        };
        (i * np + j.rem_euclid(np)) as usize
    }

    /// Tangent gradient in the node frame. The second component is zero on
    /// the circle and on axisymmetric grids.
    pub fn gradient(&self, h: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.check_field(h)?;
        Ok((0..self.len()).map(|p| self.gradient_at(h, p)).collect())
    }

    #[inline]
    pub(crate) fn gradient_at(&self, h: &[f64], p: usize) -> [f64; 2] {
        match self.spec.mode {
            GridMode::Circle => {
                let n = h.len();
                [self.c1_phi * (h[(p + 1) % n] - h[(p + n - 1) % n]), 0.0]
            }
            GridMode::Axisym => {
                let n = h.len();
                let up = if p + 1 < n { h[p + 1] } else { h[n - 1] };
                let dn = if p > 0 { h[p - 1] } else { h[0] };
                [self.c1_theta * (up - dn), 0.0]
            }
            GridMode::Latlong => {
                let np = self.spec.n_phi;
                let (i, j) = ((p / np) as isize, (p % np) as isize);
                let ht = self.c1_theta * (h[self.ll_index(i + 1, j)] - h[self.ll_index(i - 1, j)]);
                let hp = self.c1_phi * (h[self.ll_index(i, j + 1)] - h[self.ll_index(i, j - 1)]);
                [ht, hp / self.rings[i as usize].sin]
            }
        }
    }

    /// Covariant Hessian of `h` in the orthonormal node frame.
    pub fn covariant_hessian(&self, h: &[f64]) -> Result<Vec<SymMatrix>> {
        self.check_field(h)?;
        Ok((0..self.len()).map(|p| self.hessian_at(h, p)).collect())
    }

    #[inline]
    pub(crate) fn hessian_at(&self, h: &[f64], p: usize) -> SymMatrix {
        match self.spec.mode {
            GridMode::Circle => {
                let n = h.len();
                let c = h[p];
                SymMatrix::new1(self.c2_phi * (h[(p + 1) % n] - 2.0 * c + h[(p + n - 1) % n]))
            }
            GridMode::Axisym => {
                let n = h.len();
                let c = h[p];
                let up = if p + 1 < n { h[p + 1] } else { h[n - 1] };
                let dn = if p > 0 { h[p - 1] } else { h[0] };
                let htt = self.c2_theta * (up - 2.0 * c + dn);
                let ht = self.c1_theta * (up - dn);
                SymMatrix::new2(htt, 0.0, self.rings[p].cot * ht)
            }
            GridMode::Latlong => {
                let np = self.spec.n_phi;
                let (i, j) = ((p / np) as isize, (p % np) as isize);
                let ring = self.rings[i as usize];
                let c = h[p];
                let s = h[self.ll_index(i + 1, j)];
                let n = h[self.ll_index(i - 1, j)];
                let e = h[self.ll_index(i, j + 1)];
                let w = h[self.ll_index(i, j - 1)];
                let se = h[self.ll_index(i + 1, j + 1)];
                let sw = h[self.ll_index(i + 1, j - 1)];
                let ne = h[self.ll_index(i - 1, j + 1)];
                let nw = h[self.ll_index(i - 1, j - 1)];
                let htt = self.c2_theta * (s - 2.0 * c + n);
                let ht = self.c1_theta * (s - n);
                let hpp = self.c2_phi * (e - 2.0 * c + w);
                let hp = self.c1_phi * (e - w);
                let htp = self.c1_theta * self.c1_phi * (se - sw - ne + nw);
                let inv_sin = 1.0 / ring.sin;
                SymMatrix::new2(
                    htt,
                    (htp - ring.cot * hp) * inv_sin,
                    hpp * inv_sin * inv_sin + ring.cot * ht,
                )
            }
        }
    }

    /// Laplace-Beltrami operator written directly as one stencil.
    pub fn laplace_beltrami(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_field(h)?;
        let n = h.len();
        let out = match self.spec.mode {
            GridMode::Circle => (0..n)
                .map(|p| self.c2_phi * (h[(p + 1) % n] + h[(p + n - 1) % n] - 2.0 * h[p]))
                .collect(),
            GridMode::Axisym => (0..n)
                .map(|p| {
                    let up = h[(p + 1).min(n - 1)];
                    let dn = h[p.saturating_sub(1)];
                    let cot = self.rings[p].cot;
                    (self.c2_theta + cot * self.c1_theta) * up + (self.c2_theta - cot * self.c1_theta) * dn
                        - 2.0 * self.c2_theta * h[p]
                })
                .collect(),
            GridMode::Latlong => {
                let np = self.spec.n_phi;
                (0..n)
                    .map(|p| {
                        let (i, j) = ((p / np) as isize, (p % np) as isize);
                        let ring = self.rings[i as usize];
                        let a = self.c2_phi / (ring.sin * ring.sin);
                        (self.c2_theta + ring.cot * self.c1_theta) * h[self.ll_index(i + 1, j)]
                            + (self.c2_theta - ring.cot * self.c1_theta) * h[self.ll_index(i - 1, j)]
                            + a * (h[self.ll_index(i, j + 1)] + h[self.ll_index(i, j - 1)])
                            - 2.0 * (self.c2_theta + a) * h[p]
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    /// Absolute row sums of the stencils behind the Hessian entries
    /// `(11, 12, 22)` at node `p`; used for step-size bounds.
    pub(crate) fn stencil_row_sums(&self, p: usize) -> [f64; 3] {
        match self.spec.mode {
            GridMode::Circle => [4.0 * self.c2_phi, 0.0, 0.0],
            GridMode::Axisym => {
                let cot = self.rings[p].cot.abs();
                [4.0 * self.c2_theta, 0.0, 2.0 * self.c1_theta * cot]
            }
            GridMode::Latlong => {
                let ring = self.rings[p / self.spec.n_phi];
                let cot = ring.cot.abs();
                let inv_sin = 1.0 / ring.sin;
                [
                    4.0 * self.c2_theta,
                    (4.0 * self.c1_theta * self.c1_phi + 2.0 * self.c1_phi * cot) * inv_sin,
                    4.0 * self.c2_phi * inv_sin * inv_sin + 2.0 * self.c1_theta * cot,
                ]
            }
        }
    }
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}
