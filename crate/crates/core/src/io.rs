//! Reading tabulated fields and writing run artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Snapshot;
use crate::geometry::SupportField;
use crate::sphere::{DomainGrid, GridMode, GridSpec, ScalarField};

pub const SCHEMA: u32 = 1;

pub const TIMESERIES_COLUMNS: [&str; 12] = [
    "t",
    "dt",
    "J",
    "speed_sup",
    "min_h",
    "max_h",
    "r",
    "R",
    "sigma_min",
    "sigma_max",
    "lambda_max",
    "w11",
];

/// Node values with the grid they belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub schema: u32,
    pub grid: String,
    pub values: Vec<f64>,
}

/// Reads one value per node.
///
/// Either the JSON written by [`write_field_json`], or plain text whose first
/// line is `# grid <spec>` followed by one number per line (`#` starts a
/// comment).
pub fn read_field(path: &Path, grid: &DomainGrid) -> Result<ScalarField> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let (spec, values) = if text.trim_start().starts_with('{') {
        let f: FieldFile = serde_json::from_str(&text)?;
        (f.grid, f.values)
    } else {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let spec = header
            .trim()
            .strip_prefix('#')
            .and_then(|h| h.trim().strip_prefix("grid"))
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Config(format!("{}: first line must be '# grid <spec>'", path.display())))?;
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| {
                Error::Config(format!("{}: line {}: not a number", path.display(), i + 2))
            })?);
        }
        (spec, values)
    };
    let spec: GridSpec = spec.parse()?;
    if spec != grid.spec() {
        return Err(Error::Config(format!(
            "{} was written for grid {spec}, expected {}",
            path.display(),
            grid.spec()
        )));
    }
    grid.check_field(&values)?;
    Ok(ScalarField::new(values))
}

pub fn write_field_json(path: &Path, h: &SupportField) -> Result<()> {
    let f = FieldFile {
        schema: SCHEMA,
        grid: h.grid().spec().to_string(),
        values: h.values().to_vec(),
    };
    fs::write(path, serde_json::to_string(&f)? + "\n")?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// One row per snapshot, columns [`TIMESERIES_COLUMNS`].
pub fn write_timeseries(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TIMESERIES_COLUMNS)?;
    for s in snapshots {
        w.write_record([
            num(s.t),
            num(s.dt),
            num(s.j),
            num(s.speed_sup),
            num(s.min_h),
            num(s.max_h),
            num(s.metrics.inner_radius),
            num(s.metrics.outer_radius),
            num(s.metrics.sigma_min),
            num(s.metrics.sigma_max),
            num(s.metrics.lambda_max),
            num(s.w11),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Body metrics per snapshot: `t, r, R, steiner_*, W, sigma_min, sigma_max,
/// lambda_max`.
pub fn write_metrics(path: &Path, snapshots: &[Snapshot], ambient_dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t", "r", "R", "steiner_x", "steiner_y"];
    if ambient_dim == 3 {
        header.push("steiner_z");
    }
    header.extend(["W", "sigma_min", "sigma_max", "lambda_max"]);
    w.write_record(&header)?;
    for s in snapshots {
        let m = &s.metrics;
        let mut row = vec![num(s.t), num(m.inner_radius), num(m.outer_radius)];
        row.extend(m.steiner[..ambient_dim].iter().map(|v| num(*v)));
        row.extend([num(m.quermass), num(m.sigma_min), num(m.sigma_max), num(m.lambda_max)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of longitudes used when revolving an axisymmetric profile.
pub const MESH_REVOLUTION: usize = 64;

/// Boundary points `F(x) = grad h + h x` as a plain-text polygon mesh:
/// `v x y z` lines, then `f i j ...` lines with 1-based indices.
pub fn write_mesh(path: &Path, h: &SupportField) -> Result<()> {
    let g = h.grid();
    let grad = g.gradient(h.values())?;
    let pts: Vec<[f64; 3]> = (0..g.len())
        .map(|p| {
            let x = g.points()[p];
            let [e1, e2] = g.frames()[p];
            let hv = h.values()[p];
            let mut y = [0.0; 3];
            for a in 0..3 {
                y[a] = grad[p][0] * e1[a] + grad[p][1] * e2[a] + hv * x[a];
            }
            y
        })
        .collect();
    let mut out = String::new();
    let mut faces: Vec<Vec<usize>> = Vec::new();
    let push_v = |out: &mut String, y: [f64; 3]| {
        out.push_str(&format!("v {} {} {}\n", y[0], y[1], y[2]));
    };
    match g.mode() {
        GridMode::Circle => {
            for y in &pts {
                push_v(&mut out, *y);
            }
            faces.push((0..pts.len()).collect());
        }
        GridMode::Axisym => {
            let m = MESH_REVOLUTION;
            for y in &pts {
                for j in 0..m {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    push_v(&mut out, [y[0] * phi.cos(), y[0] * phi.sin(), y[2]]);
                }
            }
            ring_faces(&mut faces, pts.len(), m);
        }
        GridMode::Latlong => {
            for y in &pts {
                push_v(&mut out, *y);
            }
            ring_faces(&mut faces, g.spec().n_theta, g.spec().n_phi);
        }
    }
    for f in faces {
        let idx: Vec<String> = f.iter().map(|i| (i + 1).to_string()).collect();
        out.push_str(&format!("f {}\n", idx.join(" ")));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Quads between consecutive rings plus one cap polygon at each pole.
fn ring_faces(faces: &mut Vec<Vec<usize>>, rings: usize, per_ring: usize) {
    let id = |i: usize, j: usize| i * per_ring + j % per_ring;
    faces.push((0..per_ring).rev().map(|j| id(0, j)).collect());
    for i in 0..rings - 1 {
        for j in 0..per_ring {
            faces.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    faces.push((0..per_ring).map(|j| id(rings - 1, j)).collect());
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn text_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = DomainGrid::new(GridSpec::circle(8)).unwrap();
        let p = dir.path().join("f.txt");
        let mut text = String::from("# grid circle:8\n");
        for i in 0..8 {
            text.push_str(&format!("{}\n", 1.0 + i as f64));
        }
        fs::write(&p, text).unwrap();
        let f = read_field(&p, &g).unwrap();
        assert_eq!(f[7], 8.0);
        let other = DomainGrid::new(GridSpec::circle(16)).unwrap();
        assert!(matches!(read_field(&p, &other), Err(Error::Config(_))));
    }

    #[test]
    fn json_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(DomainGrid::new(GridSpec::axisym(8)).unwrap());
        let h = SupportField::ball(g.clone(), 1.25, [0.0; 3]);
        let p = dir.path().join("h.json");
        write_field_json(&p, &h).unwrap();
        assert_eq!(read_field(&p, &g).unwrap().values(), h.values());
    }

    #[test]
    fn mesh_of_ball() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(DomainGrid::new(GridSpec::latlong(4, 8)).unwrap());
        let h = SupportField::ball(g, 2.0, [0.0; 3]);
        let p = dir.path().join("m.obj");
        write_mesh(&p, &h).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let verts: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
        assert_eq!(verts.len(), 32);
        for v in verts {
            let c: Vec<f64> = v[2..].split(' ').map(|s| s.parse().unwrap()).collect();
            let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            assert!((r - 2.0).abs() < 1e-12);
        }
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 2 + 3 * 8);
    }
}
