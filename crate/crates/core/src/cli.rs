//! Command-line front end.
//!
//! Options come from flags and an optional TOML file (`--config`); flags win.
//! Every run directory gets `config.json` with the resolved settings.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bodies::{BodySpec, DensitySpec};
use crate::elliptic::{fourier_solve_circle, newton_solve, EllipticSolution, FourierSymbol, NewtonOptions};
use crate::error::{Error, Result};
use crate::flow::{theta_bisection, BisectionConfig, Flow, FlowConfig, RunOutcome};
use crate::geometry::SupportField;
use crate::io;
use crate::sphere::{DomainGrid, GridMode, GridSpec};
use crate::symfunc::binomial;
use crate::verifier::{self, CheckReport};
use crate::xi::solve_xi;

#[derive(Parser, Debug)]
#[command(name = "cmflow", version, about = "Logarithmic curvature flow on support functions")]
struct Cli {
    /// TOML file with default option values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow from theta * h0.
    Flow(FlowArgs),
    /// Bisect theta until the run converges.
    SweepTheta(SweepArgs),
    /// Solve for the weighting vector xi.
    Xi(CommonArgs),
    /// Solve the stationary equation directly.
    Elliptic(EllipticArgs),
    /// Check the quantitative estimates.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// circle:N, axisym:N or latlong:NTxNP
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// constant:c, exponential:v[@c], harmonic:e@m[,...] or file:path
    #[arg(long)]
    f: Option<String>,
    /// Initial body: ball:rho, ellipsoid:a,b[,c], powcos:base,eps,m or file:path
    #[arg(long)]
    h0: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    weighted: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct FlowArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
    /// Also write the final boundary as a polygon mesh.
    #[arg(long)]
    mesh: bool,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    theta_lo: Option<f64>,
    #[arg(long)]
    theta_hi: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
    /// Probes run in parallel per round.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    mesh: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EllipticMethod {
    Auto,
    Fourier,
    Newton,
}

#[derive(Args, Debug, Clone)]
struct EllipticArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    method: Option<EllipticMethod>,
    /// Use the continuous symbol 1 - m^2 instead of the discrete one.
    #[arg(long)]
    continuous_symbol: bool,
    #[arg(long)]
    mesh: bool,
}

#[derive(Args, Debug, Clone)]
struct VerifyArgs {
    #[command(subcommand)]
    check: VerifyCommand,
}

#[derive(Subcommand, Debug, Clone)]
enum VerifyCommand {
    /// R^2 / (r lambda_max) over a random population.
    ChouWang {
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Closed forms for an ellipsoid of revolution.
    Ellipsoid {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// |int x sigma_k| over random bodies on refined grids.
    Necessary {
        #[arg(long)]
        n: Option<usize>,
        /// Pass threshold on the finest grid.
        #[arg(long, default_value_t = 1e-8)]
        bound: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Observed constants along one flow run.
    Estimates {
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        max_time: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Values read from `--config`. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    grid: Option<String>,
    k: Option<usize>,
    f: Option<String>,
    h0: Option<String>,
    tol: Option<f64>,
    weighted: Option<bool>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    theta: Option<f64>,
    theta_lo: Option<f64>,
    theta_hi: Option<f64>,
    max_time: Option<f64>,
    jobs: Option<usize>,
    mesh: Option<bool>,
    n: Option<usize>,
}

/// Fully resolved settings, echoed as `config.json`.
#[derive(Clone, Debug, Serialize)]
struct Resolved {
    schema: u32,
    command: String,
    grid: String,
    k: usize,
    f: String,
    h0: String,
    tol: f64,
    weighted: bool,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    mesh: bool,
    #[serde(skip)]
    out: Option<PathBuf>,
}

const DEFAULT_GRID: &str = "circle:256";

fn resolve(command: &str, c: &CommonArgs, file: &FileConfig) -> Result<Resolved> {
    let grid = c.grid.clone().or(file.grid.clone()).unwrap_or(DEFAULT_GRID.into());
    let spec: GridSpec = grid.parse()?;
    Ok(Resolved {
        schema: io::SCHEMA,
        command: command.into(),
        grid: spec.to_string(),
        k: c.k.or(file.k).unwrap_or(1),
        f: c.f.clone().or(file.f.clone()).unwrap_or("constant:1".into()),
        h0: c.h0.clone().or(file.h0.clone()).unwrap_or("ball:1".into()),
        tol: c.tol.or(file.tol).unwrap_or(1e-6),
        weighted: c.weighted || file.weighted.unwrap_or(false),
        seed: c.seed.or(file.seed).unwrap_or(0),
        theta: None,
        theta_lo: None,
        theta_hi: None,
        max_time: None,
        jobs: None,
        n: None,
        mesh: file.mesh.unwrap_or(false),
        out: c.out.clone().or(file.out.clone()),
    })
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

struct Problem {
    grid: Arc<DomainGrid>,
    f: DensitySpec,
    h0: SupportField,
}

fn problem(r: &Resolved) -> Result<Problem> {
    let grid = Arc::new(DomainGrid::new(r.grid.parse()?)?);
    let f: DensitySpec = r.f.parse()?;
    let h0 = r.h0.parse::<BodySpec>()?.sample(grid.clone())?;
    Ok(Problem { grid, f, h0 })
}

fn flow_config(r: &Resolved, p: &Problem) -> Result<FlowConfig> {
    let mut cfg = FlowConfig::new(r.k, p.f.sample(&p.grid)?);
    cfg.weighted = r.weighted;
    cfg.tol_converge = positive("tol", r.tol)?;
    if let Some(t) = r.max_time {
        cfg.max_time = positive("max_time", t)?;
    }
    Ok(cfg)
}

fn out_dir(r: &Resolved) -> Result<Option<PathBuf>> {
    match &r.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            io::write_json(&dir.join("config.json"), r)?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn run_summary(run: &RunOutcome, flow: &Flow) -> serde_json::Value {
    let s = &run.final_state;
    json!({
        "schema": io::SCHEMA,
        "classification": run.classification,
        "reason": run.reason,
        "theta": run.theta,
        "t": s.t,
        "steps": run.steps.len(),
        "speed_sup": s.speed_sup,
        "J": s.j,
        "rejected_convexity": run.rejected_convexity,
        "rejected_functional": run.rejected_functional,
        "xi": &flow.xi()[..flow.grid().ambient_dim()],
    })
}

fn write_run(dir: &Path, run: &RunOutcome, flow: &Flow, mesh: bool) -> Result<()> {
    let d = flow.grid().ambient_dim();
    io::write_timeseries(&dir.join("timeseries.csv"), &run.snapshots)?;
    io::write_metrics(&dir.join("metrics.csv"), &run.snapshots, d)?;
    io::write_field_json(&dir.join("final_h.json"), &run.final_state.h)?;
    io::write_json(&dir.join("summary.json"), &run_summary(run, flow))?;
    if mesh {
        io::write_mesh(&dir.join("final_mesh.obj"), &run.final_state.h)?;
    }
    Ok(())
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn cmd_flow(a: &FlowArgs, file: &FileConfig) -> Result<()> {
    let mut r = resolve("flow", &a.common, file)?;
    r.theta = Some(positive("theta", a.theta.or(file.theta).unwrap_or(1.0))?);
    r.max_time = a.max_time.or(file.max_time);
    r.mesh |= a.mesh;
    let p = problem(&r)?;
    let mut cfg = flow_config(&r, &p)?;
    cfg.theta = r.theta.unwrap_or(1.0);
    let flow = Flow::new(p.grid.clone(), cfg)?;
    let run = flow.run(&p.h0)?;
    if let Some(dir) = out_dir(&r)? {
        write_run(&dir, &run, &flow, r.mesh)?;
    }
    print_json(&run_summary(&run, &flow))
}

fn cmd_sweep(a: &SweepArgs, file: &FileConfig) -> Result<()> {
    let mut r = resolve("sweep-theta", &a.common, file)?;
    let lo = positive("theta_lo", a.theta_lo.or(file.theta_lo).unwrap_or(0.5))?;
    let hi = positive("theta_hi", a.theta_hi.or(file.theta_hi).unwrap_or(2.0))?;
    r.theta_lo = Some(lo);
    r.theta_hi = Some(hi);
    r.max_time = a.max_time.or(file.max_time);
    r.jobs = Some(a.jobs.or(file.jobs).unwrap_or(1).max(1));
    r.mesh |= a.mesh;
    let p = problem(&r)?;
    let flow = Flow::new(p.grid.clone(), flow_config(&r, &p)?)?;
    let mut bc = BisectionConfig::new(lo, hi);
    bc.jobs = r.jobs.unwrap_or(1);
    let b = theta_bisection(&flow, &p.h0, bc)?;
    let mut summary = run_summary(&b.outcome, &flow);
    summary["theta_star"] = json!(b.theta_star);
    summary["window"] = json!([b.window.0, b.window.1]);
    summary["converged"] = json!(b.converged);
    summary["probes"] = json!(b.probes.len());
    if let Some(dir) = out_dir(&r)? {
        write_run(&dir, &b.outcome, &flow, r.mesh)?;
        io::write_json(&dir.join("summary.json"), &summary)?;
        io::write_json(&dir.join("probes.json"), &b.probes)?;
    }
    print_json(&summary)?;
    if !b.converged {
        return Err(Error::NonConvergence {
            what: "theta bisection",
            iterations: b.probes.len(),
            detail: format!("window [{}, {}] without a converged run", b.window.0, b.window.1),
            last: None,
        });
    }
    Ok(())
}

fn cmd_xi(a: &CommonArgs, file: &FileConfig) -> Result<()> {
    let r = resolve("xi", a, file)?;
    let grid = DomainGrid::new(r.grid.parse()?)?;
    let f = r.f.parse::<DensitySpec>()?.sample(&grid)?;
    let x = solve_xi(&f, &grid)?;
    let v = json!({
        "schema": io::SCHEMA,
        "xi": &x.xi[..grid.ambient_dim()],
        "residual": x.residual_norm,
        "iterations": x.iterations,
        "converged": x.converged,
    });
    if let Some(dir) = out_dir(&r)? {
        io::write_json(&dir.join("xi.json"), &v)?;
    }
    print_json(&v)?;
    if !x.converged {
        return Err(Error::NonConvergence {
            what: "xi newton",
            iterations: x.iterations,
            detail: format!("residual {:e}", x.residual_norm),
            last: None,
        });
    }
    Ok(())
}

fn cmd_elliptic(a: &EllipticArgs, file: &FileConfig) -> Result<()> {
    let r = resolve("elliptic", &a.common, file)?;
    let p = problem(&r)?;
    let f = p.f.sample(&p.grid)?;
    let xi = if r.weighted { solve_xi(&f, &p.grid)?.xi } else { [0.0; 3] };
    let f_eff: Vec<f64> = f
        .iter()
        .zip(p.grid.points())
        .map(|(v, x)| v * crate::sphere::dot(&xi, x).exp())
        .collect();
    let method = a.method.unwrap_or(EllipticMethod::Auto);
    let fourier = match method {
        EllipticMethod::Fourier => true,
        EllipticMethod::Newton => false,
        EllipticMethod::Auto => p.grid.mode() == GridMode::Circle && r.k == 1,
    };
    let sol: EllipticSolution = if fourier {
        if p.grid.mode() != GridMode::Circle || r.k != 1 {
            return Err(Error::Config("fourier method needs a circle grid and k = 1".into()));
        }
        let symbol = if a.continuous_symbol {
            FourierSymbol::Continuous
        } else {
            FourierSymbol::Discrete
        };
        fourier_solve_circle(p.grid.clone(), &f_eff, symbol)?
    } else {
        let opts = NewtonOptions {
            tol: r.tol,
            ..NewtonOptions::default()
        };
        // start from the ball whose sigma_k matches the mean of 1/f_eff
        let h_init = if a.common.h0.is_none() && file.h0.is_none() {
            let mean = p.grid.integrate(&f_eff.iter().map(|v| 1.0 / v).collect::<Vec<_>>())
                / p.grid.sphere_measure();
            let rho = (mean / binomial(p.grid.dim(), r.k)).powf(1.0 / r.k as f64);
            SupportField::ball(p.grid.clone(), rho, [0.0; 3])
        } else {
            p.h0.clone()
        };
        newton_solve(&h_init, &f_eff, r.k, opts)?
    };
    let v = json!({
        "schema": io::SCHEMA,
        "method": sol.method,
        "residual_sup": sol.residual_sup,
        "projected_residual": sol.projected_residual,
        "moment_multiplier": &sol.moment_multiplier[..p.grid.ambient_dim()],
        "iterations": sol.iterations,
        "converged": sol.converged,
        "xi": &xi[..p.grid.ambient_dim()],
    });
    if let Some(dir) = out_dir(&r)? {
        io::write_field_json(&dir.join("solution_h.json"), &sol.h)?;
        io::write_json(&dir.join("elliptic.json"), &v)?;
        if a.mesh || file.mesh.unwrap_or(false) {
            io::write_mesh(&dir.join("solution_mesh.obj"), &sol.h)?;
        }
    }
    print_json(&v)?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            what: "elliptic solve",
            iterations: sol.iterations,
            detail: format!("residual {:e}", sol.residual_sup),
            last: None,
        });
    }
    Ok(())
}

fn emit_report(r: &Resolved, report: &CheckReport) -> Result<()> {
    if let Some(dir) = out_dir(r)? {
        io::write_json(&dir.join("report.json"), report)?;
        fs::write(dir.join("summary.txt"), format!("{report}\n"))?;
    }
    println!("{}", serde_json::to_string(report)?);
    eprintln!("{report}");
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, file: &FileConfig) -> Result<()> {
    match &a.check {
        VerifyCommand::ChouWang { n, common } => {
            let mut c = common.clone();
            c.grid = c.grid.or(file.grid.clone()).or(Some("latlong:24x48".into()));
            let mut r = resolve("verify chou-wang", &c, file)?;
            r.n = Some(n.or(file.n).unwrap_or(1000));
            let grid = Arc::new(DomainGrid::new(r.grid.parse()?)?);
            let report = verifier::chou_wang_population(&grid, r.n.unwrap_or(0), r.seed)?;
            emit_report(&r, &report)
        }
        VerifyCommand::Ellipsoid { a: ea, b: eb, common } => {
            let mut c = common.clone();
            c.grid = c.grid.or(file.grid.clone()).or(Some("axisym:64".into()));
            let r = resolve("verify ellipsoid", &c, file)?;
            let grid = Arc::new(DomainGrid::new(r.grid.parse()?)?);
            let report = verifier::check_ellipsoid_formulas(*ea, *eb, &grid)?;
            emit_report(&r, &report)
        }
        VerifyCommand::Necessary { n, bound, common } => {
            let mut c = common.clone();
            c.grid = c.grid.or(file.grid.clone()).or(Some("latlong:48x96".into()));
            let mut r = resolve("verify necessary", &c, file)?;
            r.n = Some(n.or(file.n).unwrap_or(20));
            let fine: GridSpec = r.grid.parse()?;
            let specs: Vec<GridSpec> = [4, 2, 1]
                .iter()
                .map(|d| match fine.mode {
                    GridMode::Circle => GridSpec::circle(fine.n_phi / d),
                    GridMode::Axisym => GridSpec::axisym(fine.n_theta / d),
                    GridMode::Latlong => GridSpec::latlong(fine.n_theta / d, fine.n_phi / d),
                })
                .collect();
            let report = verifier::check_necessary_condition(&specs, r.n.unwrap_or(0), r.seed, r.k, *bound)?;
            emit_report(&r, &report)
        }
        VerifyCommand::Estimates { theta, max_time, common } => {
            let mut r = resolve("verify estimates", common, file)?;
            r.theta = Some(positive("theta", theta.or(file.theta).unwrap_or(1.0))?);
            r.max_time = max_time.or(file.max_time);
            let p = problem(&r)?;
            let mut cfg = flow_config(&r, &p)?;
            cfg.theta = r.theta.unwrap_or(1.0);
            let flow = Flow::new(p.grid.clone(), cfg)?;
            let run = flow.run(&p.h0)?;
            let report = verifier::check_run_estimates(&run, p.grid.ambient_dim())?;
            emit_report(&r, &report)
        }
    }
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = read_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Flow(a) => cmd_flow(a, &file),
        Command::SweepTheta(a) => cmd_sweep(a, &file),
        Command::Xi(a) => cmd_xi(a, &file),
        Command::Elliptic(a) => cmd_elliptic(a, &file),
        Command::Verify(a) => cmd_verify(a, &file),
    }
}

fn report_error(kind: &str, message: &str, code: i32) {
    let line = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{line}");
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 2 for configuration errors, 3 for
/// numerical faults, 4 for non-convergence.
pub fn parse_and_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            report_error("config", first, 2);
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            report_error(e.kind(), &e.to_string(), code);
            code
        }
    }
}
