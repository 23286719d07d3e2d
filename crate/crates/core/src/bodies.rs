//! Built-in densities and initial bodies, and random convex bodies.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{curvature_matrix, SupportField};
use crate::sphere::{dot, DomainGrid, GridMode, Point, ScalarField};

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse {what} from {s:?}")))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(p, what)).collect()
}

fn point_from(v: &[f64], what: &str) -> Result<Point> {
    match v {
        [a, b] => Ok([*a, *b, 0.0]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::Config(format!("{what} needs 2 or 3 components"))),
    }
}

/// Longitude on circle grids, colatitude otherwise.
fn angle(grid: &DomainGrid, x: &Point) -> f64 {
    match grid.mode() {
        GridMode::Circle => x[1].atan2(x[0]),
        _ => x[2].clamp(-1.0, 1.0).acos(),
    }
}

/// Prescribed density `f`.
///
/// Text forms: `constant:c`, `exponential:v1,v2[,v3][@c]` for `c e^{v.x}`,
/// `harmonic:e1@m1[,e2@m2...]` for `1/f = 1 + sum e cos(m phi)` on the
/// circle (`cos(m theta)` on the sphere), and `file:path`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DensitySpec {
    Constant(f64),
    Exponential { v: Point, c: f64 },
    Harmonic(Vec<(f64, u32)>),
    File(PathBuf),
}

impl DensitySpec {
    pub fn sample(&self, grid: &DomainGrid) -> Result<ScalarField> {
        let f = match self {
            DensitySpec::Constant(c) => ScalarField::constant(grid, *c),
            DensitySpec::Exponential { v, c } => {
                if grid.project_translation(*v) != *v {
                    return Err(Error::Config(format!(
                        "exponent vector {v:?} not representable on {}",
                        grid.spec()
                    )));
                }
                ScalarField::from_fn(grid, |x| c * dot(v, x).exp())
            }
            DensitySpec::Harmonic(terms) => ScalarField::from_fn(grid, |x| {
                let a = angle(grid, x);
                1.0 / (1.0 + terms.iter().map(|(e, m)| e * (*m as f64 * a).cos()).sum::<f64>())
            }),
            DensitySpec::File(path) => crate::io::read_field(path, grid)?,
        };
        if let Some(p) = f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("density {self} is not positive at node {p}")));
        }
        Ok(f)
    }
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("density spec {s:?} lacks a kind")))?;
        match kind.trim() {
            "constant" => Ok(DensitySpec::Constant(parse_f64(rest, "constant")?)),
            "exponential" => {
                let (v, c) = match rest.split_once('@') {
                    Some((v, c)) => (v, parse_f64(c, "scale")?),
                    None => (rest, 1.0),
                };
                Ok(DensitySpec::Exponential {
                    v: point_from(&parse_list(v, "exponent")?, "exponent")?,
                    c,
                })
            }
            "harmonic" => {
                let terms = rest
                    .split(',')
                    .map(|t| {
                        let (e, m) = t
                            .split_once('@')
                            .ok_or_else(|| Error::Config(format!("harmonic term {t:?} needs eps@m")))?;
                        let m = m
                            .trim()
                            .parse::<u32>()
                            .map_err(|_| Error::Config(format!("bad mode in {t:?}")))?;
                        Ok((parse_f64(e, "amplitude")?, m))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DensitySpec::Harmonic(terms))
            }
            "file" => Ok(DensitySpec::File(PathBuf::from(rest))),
            other => Err(Error::Config(format!("unknown density kind {other:?}"))),
        }
    }
}

fn fmt_point(v: &Point) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Constant(c) => write!(f, "constant:{c}"),
            DensitySpec::Exponential { v, c } => write!(f, "exponential:{}@{c}", fmt_point(v)),
            DensitySpec::Harmonic(t) => {
                let parts: Vec<String> = t.iter().map(|(e, m)| format!("{e}@{m}")).collect();
                write!(f, "harmonic:{}", parts.join(","))
            }
            DensitySpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl From<DensitySpec> for String {
    fn from(d: DensitySpec) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DensitySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Initial body.
///
/// Text forms: `ball:rho`, `ellipsoid:a,b[,c]`, `powcos:base,eps,m` for
/// `base (1 + eps cos^m theta)` (`cos^m phi` on the circle), `file:path`.
/// Two-parameter ellipsoids on the sphere have equatorial semi-axis `a` and
/// polar semi-axis `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BodySpec {
    Ball(f64),
    Ellipsoid(Vec<f64>),
    PowCos { base: f64, eps: f64, m: u32 },
    File(PathBuf),
}

/// Support function of the ellipsoid with semi-axes `axes` along the
/// coordinate directions.
pub fn ellipsoid_support(axes: Point, x: &Point) -> f64 {
    ((axes[0] * x[0]).powi(2) + (axes[1] * x[1]).powi(2) + (axes[2] * x[2]).powi(2)).sqrt()
}

impl BodySpec {
    pub fn sample(&self, grid: Arc<DomainGrid>) -> Result<SupportField> {
        match self {
            BodySpec::Ball(rho) => Ok(SupportField::ball(grid, *rho, [0.0; 3])),
            BodySpec::Ellipsoid(ax) => {
                let axes = match (grid.mode(), ax.as_slice()) {
                    (GridMode::Circle, [a, b]) => [*a, *b, 0.0],
                    (GridMode::Circle, _) => {
                        return Err(Error::Config("ellipse needs two semi-axes".into()));
                    }
                    (_, [a, b]) => [*a, *a, *b],
                    (GridMode::Latlong, [a, b, c]) => [*a, *b, *c],
                    _ => {
                        return Err(Error::Config(
                            "ellipsoid needs a,b (or a,b,c on lat-long grids)".into(),
                        ))
                    }
                };
                if axes[..grid.ambient_dim()].iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Config("semi-axes must be positive".into()));
                }
                SupportField::from_fn(grid, |x| ellipsoid_support(axes, x))
            }
            BodySpec::PowCos { base, eps, m } => {
                let g = grid.clone();
                SupportField::from_fn(grid, |x| {
                    let c = match g.mode() {
                        GridMode::Circle => x[0],
                        _ => x[2],
                    };
                    base * (1.0 + eps * c.powi(*m as i32))
                })
            }
            BodySpec::File(path) => {
                let f = crate::io::read_field(path, &grid)?;
                SupportField::new(grid, f)
            }
        }
    }
}

impl FromStr for BodySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("body spec {s:?} lacks a kind")))?;
        match kind.trim() {
            "ball" => Ok(BodySpec::Ball(parse_f64(rest, "radius")?)),
            "ellipsoid" => Ok(BodySpec::Ellipsoid(parse_list(rest, "semi-axis")?)),
            "powcos" => match parse_list(rest, "powcos parameter")?.as_slice() {
                [base, eps, m] if *m >= 0.0 && m.fract() == 0.0 => Ok(BodySpec::PowCos {
                    base: *base,
                    eps: *eps,
                    m: *m as u32,
                }),
                _ => Err(Error::Config(format!("powcos needs base,eps,m in {s:?}"))),
            },
            "file" => Ok(BodySpec::File(PathBuf::from(rest))),
            other => Err(Error::Config(format!("unknown body kind {other:?}"))),
        }
    }
}

impl fmt::Display for BodySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodySpec::Ball(r) => write!(f, "ball:{r}"),
            BodySpec::Ellipsoid(a) => {
                let parts: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                write!(f, "ellipsoid:{}", parts.join(","))
            }
            BodySpec::PowCos { base, eps, m } => write!(f, "powcos:{base},{eps},{m}"),
            BodySpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl From<BodySpec> for String {
    fn from(d: BodySpec) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for BodySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Generator of smooth strictly convex bodies `h = 1 + p(x)`, with `p` a
/// random polynomial of degree 1 to 4 (trigonometric on the circle, in
/// `cos theta` on axisymmetric grids).
///
/// Body `i` of seed `s` is drawn from its own ChaCha stream, so any subset
/// of the population can be regenerated independently.
#[derive(Clone, Debug)]
pub struct RandomBodies {
    pub seed: u64,
    /// Required smallest eigenvalue of `W`.
    pub margin: f64,
    pub amplitude: f64,
}

impl RandomBodies {
    pub fn new(seed: u64) -> Self {
        RandomBodies {
            seed,
            margin: 0.1,
            amplitude: 0.3,
        }
    }

    fn monomials() -> Vec<(i32, i32, i32)> {
        // x^a y^b z^c with 1 <= a + b + c <= 4
        let mut exps = Vec::new();
        for a in 0..=4 {
            for b in 0..=4 - a {
                for c in 0..=4 - a - b {
                    if a + b + c >= 1 {
                        exps.push((a, b, c));
                    }
                }
            }
        }
        exps
    }

    fn draw(&self, mode: GridMode, index: u64) -> (Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let n = match mode {
            GridMode::Circle => 8,
            GridMode::Axisym => 4,
            GridMode::Latlong => Self::monomials().len(),
        };
        let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (c, self.amplitude * rng.random_range(0.2..1.0))
    }

    fn perturbation(mode: GridMode, c: &[f64], x: &Point) -> f64 {
        match mode {
            GridMode::Circle => {
                let phi = x[1].atan2(x[0]);
                (1..=4)
                    .map(|m| {
                        let m_f = m as f64;
                        (c[2 * m - 2] * (m_f * phi).cos() + c[2 * m - 1] * (m_f * phi).sin()) / m_f
                    })
                    .sum()
            }
            GridMode::Axisym => (0..4).map(|i| c[i] * x[2].powi(i as i32 + 1)).sum(),
            GridMode::Latlong => {
                Self::monomials()
                    .iter()
                    .zip(c)
                    .map(|(&(a, b, e), ci)| ci * x[0].powi(a) * x[1].powi(b) * x[2].powi(e))
                    .sum::<f64>()
                    / 4.0
            }
        }
    }

    /// Body number `index`.
    pub fn body(&self, grid: &Arc<DomainGrid>, index: u64) -> Result<SupportField> {
        self.body_checked_on(grid, grid, index)
    }

    /// Body number `index` sampled on `grid`, with the admissibility margin
    /// checked on `reference`. Sampling one body on several grids this way
    /// keeps the same continuous body.
    pub fn body_checked_on(&self, grid: &Arc<DomainGrid>, reference: &Arc<DomainGrid>, index: u64) -> Result<SupportField> {
        if grid.mode() != reference.mode() {
            return Err(Error::Config("reference grid must have the same layout".into()));
        }
        let mode = grid.mode();
        let (c, mut s) = self.draw(mode, index);
        // shrink the perturbation until W has the required margin
        for _ in 0..60 {
            let body = SupportField::from_fn(reference.clone(), |x| 1.0 + s * Self::perturbation(mode, &c, x))?;
            let (lo, _) = curvature_matrix(&body).eigen_range();
            if lo >= self.margin {
                return SupportField::from_fn(grid.clone(), |x| 1.0 + s * Self::perturbation(mode, &c, x));
            }
            s *= 0.7;
        }
        Err(Error::NonConvergence {
            what: "random body",
            iterations: 60,
            detail: format!("no admissible perturbation for body {index}"),
            last: None,
        })
    }

    pub fn population(&self, grid: &Arc<DomainGrid>, count: usize) -> Result<Vec<SupportField>> {
        (0..count as u64).map(|i| self.body(grid, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::GridSpec;

    #[test]
    fn density_round_trip() {
        for s in ["constant:2", "exponential:0.5,0,0.1@2", "harmonic:0.3@2,0.1@4", "file:a/b.txt"] {
            let d: DensitySpec = s.parse().unwrap();
            let again: DensitySpec = d.to_string().parse().unwrap();
            assert_eq!(d, again);
        }
        assert!("harmonic:0.3".parse::<DensitySpec>().is_err());
        assert!("gauss:1".parse::<DensitySpec>().is_err());
    }

    #[test]
    fn harmonic_density_values() {
        let g = DomainGrid::new(GridSpec::circle(16)).unwrap();
        let f = DensitySpec::Harmonic(vec![(0.3, 2)]).sample(&g).unwrap();
        assert!((f[0] - 1.0 / 1.3).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_density_rejected() {
        let g = DomainGrid::new(GridSpec::circle(16)).unwrap();
        assert!(DensitySpec::Harmonic(vec![(1.5, 2)]).sample(&g).is_err());
        assert!(DensitySpec::Constant(-1.0).sample(&g).is_err());
    }

    #[test]
    fn body_specs() {
        let g = Arc::new(DomainGrid::new(GridSpec::axisym(16)).unwrap());
        let h = "powcos:1.2,0.1,2".parse::<BodySpec>().unwrap().sample(g.clone()).unwrap();
        let z = g.points()[0][2];
        assert!((h.values()[0] - 1.2 * (1.0 + 0.1 * z * z)).abs() < 1e-15);
        let e = "ellipsoid:2,1".parse::<BodySpec>().unwrap().sample(g.clone()).unwrap();
        let x = g.points()[3];
        assert!((e.values()[3] - (4.0 * x[0] * x[0] + x[2] * x[2]).sqrt()).abs() < 1e-15);
        assert!("ellipsoid:2,1,3".parse::<BodySpec>().unwrap().sample(g).is_err());
    }

    #[test]
    fn random_bodies_reproducible_and_convex() {
        let g = Arc::new(DomainGrid::new(GridSpec::latlong(12, 24)).unwrap());
        let gen = RandomBodies::new(7);
        let a = gen.body(&g, 3).unwrap();
        let b = gen.body(&g, 3).unwrap();
        assert_eq!(a.values(), b.values());
        let c = gen.body(&g, 4).unwrap();
        assert_ne!(a.values(), c.values());
        let (lo, _) = curvature_matrix(&a).eigen_range();
        assert!(lo >= 0.1);
    }
}
