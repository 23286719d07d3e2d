//! Explicit integration of `dh/dt = log(sigma_k(W) f_eff)`.
//!
//! Steps are Heun (RK2) with step-size control. A step is rejected when an
//! intermediate state leaves `Gamma_k`, the result is not strictly convex,
//! or the functional `J` grows beyond a small slack.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{body_metrics, quermass_from_sigma, steiner_point, BodyMetrics, SupportField};
use crate::sphere::{dot, DomainGrid, Point, ScalarField};
use crate::symfunc::{eig_extremes, min_eigenvector, sigma_matrix_unchecked, sigma_partial_unchecked};
use crate::xi::solve_xi;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub k: usize,
    /// Prescribed density, one value per node.
    pub f: ScalarField,
    pub weighted: bool,
    /// Weighting vector; solved from `f` when `weighted` and unset.
    pub xi: Option<Point>,
    /// Dilation of the initial body.
    pub theta: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the explicit stability limit allowed per step.
    pub cfl: f64,
    /// Converged once `sup |h_t|` drops below this.
    pub tol_converge: f64,
    /// Defaults to `0.05 min(theta h0)`.
    pub shrink_floor: Option<f64>,
    /// Defaults to `20 max(theta h0)`.
    pub expand_ceiling: Option<f64>,
    pub max_time: f64,
    pub max_steps: usize,
    pub convexity_margin: f64,
    /// Relative slack for the monotonicity test on `J`.
    pub j_slack: f64,
    /// Classify as shrinking (expanding) once `h_t` has been negative
    /// (positive) at every node for `sign_persistence` accepted steps.
    pub sign_classification: bool,
    pub sign_persistence: usize,
    /// Full snapshot every this many accepted steps; 0 keeps only the first
    /// and the last.
    pub snapshot_every: usize,
}

impl FlowConfig {
    pub fn new(k: usize, f: ScalarField) -> Self {
        FlowConfig {
            k,
            f,
            weighted: false,
            xi: None,
            theta: 1.0,
            dt_init: 1e-2,
            dt_min: 1e-12,
            dt_max: 1.0,
            cfl: 0.9,
            tol_converge: 1e-6,
            shrink_floor: None,
            expand_ceiling: None,
            max_time: 1e3,
            max_steps: 2_000_000,
            convexity_margin: 0.0,
            j_slack: 1e-9,
            sign_classification: true,
            sign_persistence: 20,
            snapshot_every: 200,
        }
    }

    fn validate(&self, grid: &DomainGrid) -> Result<()> {
        let d = grid.dim();
        if self.k == 0 || self.k > d {
            return Err(Error::Config(format!("k = {} outside 1..={d}", self.k)));
        }
        grid.check_field(&self.f)?;
        if let Some(p) = self.f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("f must be positive and finite (node {p})")));
        }
        let positive = [
            ("theta", self.theta),
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("cfl", self.cfl),
            ("tol_converge", self.tol_converge),
            ("max_time", self.max_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dt_min > self.dt_max {
            return Err(Error::Config("dt_min exceeds dt_max".into()));
        }
        if self.convexity_margin < 0.0 || self.j_slack < 0.0 {
            return Err(Error::Config("convexity_margin and j_slack must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Shrank,
    Expanded,
    Converged,
    Stalled,
}

/// What ended a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SpeedBelowTolerance,
    BelowShrinkFloor,
    AboveExpandCeiling,
    SpeedNegative,
    SpeedPositive,
    StepUnderflow,
    MaxSteps,
    MaxTime,
}

/// Accepted state of the flow.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub h: SupportField,
    pub last_dt: f64,
    pub j: f64,
    /// `h_t` at this state.
    pub speed: Vec<f64>,
    pub speed_sup: f64,
    /// `sigma_k(W)` at this state.
    pub sigma: Vec<f64>,
    /// Explicit stability limit on the step.
    pub dt_limit: f64,
}

impl FlowState {
    pub fn metrics(&self, k: usize) -> Result<BodyMetrics> {
        body_metrics(&self.h, k)
    }
}

/// Per accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub j: f64,
    pub speed_sup: f64,
    pub min_h: f64,
    pub max_h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub dt: f64,
    pub j: f64,
    pub speed_sup: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub metrics: BodyMetrics,
    pub w11: f64,
    /// `-int (sigma_k - 1/f_eff) h_t dx`.
    pub dj_dt: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub classification: Classification,
    pub reason: StopReason,
    pub theta: f64,
    pub final_state: FlowState,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub rejected_convexity: usize,
    pub rejected_functional: usize,
}

impl RunOutcome {
    /// Accepted steps whose `J` grew by more than `slack (1 + |J|)`.
    pub fn monotonicity_violations(&self, slack: f64) -> usize {
        self.steps
            .windows(2)
            .filter(|w| w[1].j > w[0].j + slack * (1.0 + w[0].j.abs()))
            .count()
    }
}

/// Diagnostic from the `C^2` estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct W11 {
    pub value: f64,
    pub node: usize,
}

struct Eval {
    speed: Vec<f64>,
    sigma: Vec<f64>,
    min_eig: f64,
    dt_limit: f64,
}

enum Attempt {
    Accepted(FlowState),
    LeftCone,
    LostConvexity,
    FunctionalIncrease,
}

/// A configured flow on one grid.
#[derive(Clone, Debug)]
pub struct Flow {
    cfg: FlowConfig,
    grid: Arc<DomainGrid>,
    xi: Point,
    log_f_eff: Vec<f64>,
    inv_f_eff: Vec<f64>,
}

impl Flow {
    pub fn new(grid: Arc<DomainGrid>, mut cfg: FlowConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let xi = if cfg.weighted {
            match cfg.xi {
                Some(xi) => grid.project_translation(xi),
                None => solve_xi(&cfg.f, &grid)?.xi,
            }
        } else {
            [0.0; 3]
        };
        if cfg.weighted {
            cfg.xi = Some(xi);
        }
        let log_f_eff: Vec<f64> = cfg
            .f
            .iter()
            .zip(grid.points())
            .map(|(f, x)| f.ln() + dot(&xi, x))
            .collect();
        let inv_f_eff = log_f_eff.iter().map(|l| (-l).exp()).collect();
        Ok(Flow {
            cfg,
            grid,
            xi,
            log_f_eff,
            inv_f_eff,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    /// Weighting vector in use (zero when unweighted).
    pub fn xi(&self) -> Point {
        self.xi
    }

    /// `f e^{xi.x}` (or `f`).
    pub fn f_eff(&self) -> ScalarField {
        ScalarField::new(self.log_f_eff.iter().map(|l| l.exp()).collect())
    }

    fn check(&self, h: &SupportField) -> Result<()> {
        if !Arc::ptr_eq(h.grid(), &self.grid) && h.grid().spec() != self.grid.spec() {
            return Err(Error::Config(format!(
                "support field on {} but flow on {}",
                h.grid().spec(),
                self.grid.spec()
            )));
        }
        Ok(())
    }

    /// Speed, `sigma_k` and step limit, or `None` if some node leaves `Gamma_k`.
    fn evaluate(&self, h: &[f64]) -> Option<Eval> {
        let g = &self.grid;
        let k = self.cfg.k;
        let n = g.len();
        let mut speed = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        let mut min_eig = f64::INFINITY;
        let mut rho: f64 = 0.0;
        for p in 0..n {
            let mut w = g.hessian_at(h, p);
            w.add_diagonal(h[p]);
            for i in 1..k {
                if sigma_matrix_unchecked(&w, i) <= 0.0 {
                    return None;
                }
            }
            let s = sigma_matrix_unchecked(&w, k);
            if !(s > 0.0) {
                return None;
            }
            speed.push(s.ln() + self.log_f_eff[p]);
            sigma.push(s);
            min_eig = min_eig.min(eig_extremes(&w).0);

            // Gershgorin bound for the linearized speed
            let pd = sigma_partial_unchecked(&w, k);
            let rs = g.stencil_row_sums(p);
            let mut row = pd.trace().abs() + pd.get(0, 0).abs() * rs[0];
            if pd.dim() == 2 {
                row += 2.0 * pd.get(0, 1).abs() * rs[1] + pd.get(1, 1).abs() * rs[2];
            }
            rho = rho.max(row / s);
        }
        let dt_limit = if rho > 0.0 { 2.0 / rho } else { f64::INFINITY };
        Some(Eval {
            speed,
            sigma,
            min_eig,
            dt_limit,
        })
    }

    fn functional_from(&self, h: &SupportField, sigma: &[f64]) -> f64 {
        let lin: f64 = self
            .grid
            .weights()
            .iter()
            .zip(h.values())
            .zip(&self.inv_f_eff)
            .map(|((w, hv), i)| w * hv * i)
            .sum();
        lin - quermass_from_sigma(h, sigma, self.cfg.k)
    }

    fn state_at(&self, h: SupportField, t: f64, last_dt: f64) -> Result<FlowState> {
        let e = self.evaluate(h.values()).ok_or_else(|| {
            Error::Convexity(format!("support field leaves Gamma_{}", self.cfg.k))
        })?;
        let j = self.functional_from(&h, &e.sigma);
        let speed_sup = e.speed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(FlowState {
            t,
            h,
            last_dt,
            j,
            speed: e.speed,
            speed_sup,
            sigma: e.sigma,
            dt_limit: e.dt_limit,
        })
    }

    /// `log(sigma_k(W) f_eff)` at every node.
    pub fn speed(&self, h: &SupportField) -> Result<ScalarField> {
        self.check(h)?;
        let e = self
            .evaluate(h.values())
            .ok_or_else(|| Error::Convexity(format!("sigma_{} not positive at every node", self.cfg.k)))?;
        Ok(ScalarField::new(e.speed))
    }

    /// `J = -W_{n-1-k} + int h / f_eff dx`.
    pub fn functional(&self, h: &SupportField) -> Result<f64> {
        self.check(h)?;
        let e = self
            .evaluate(h.values())
            .ok_or_else(|| Error::Domain(format!("W leaves Gamma_{}", self.cfg.k)))?;
        Ok(self.functional_from(h, &e.sigma))
    }

    /// State at time zero for the given (already dilated) support field.
    pub fn initial_state(&self, h: SupportField) -> Result<FlowState> {
        self.check(&h)?;
        self.state_at(h, 0.0, 0.0)
    }

    fn attempt(&self, state: &FlowState, dt: f64) -> Attempt {
        let h0 = state.h.values();
        let stage: Vec<f64> = h0.iter().zip(&state.speed).map(|(h, s)| h + dt * s).collect();
        let Some(e1) = self.evaluate(&stage) else {
            return Attempt::LeftCone;
        };
        let next: Vec<f64> = h0
            .iter()
            .zip(state.speed.iter().zip(&e1.speed))
            .map(|(h, (a, b))| h + 0.5 * dt * (a + b))
            .collect();
        let Some(e2) = self.evaluate(&next) else {
            return Attempt::LeftCone;
        };
        if !(e2.min_eig > self.cfg.convexity_margin) {
            return Attempt::LostConvexity;
        }
        let h = state.h.with_values(next);
        let j = self.functional_from(&h, &e2.sigma);
        if j > state.j + self.cfg.j_slack * (1.0 + state.j.abs()) {
            return Attempt::FunctionalIncrease;
        }
        let speed_sup = e2.speed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Attempt::Accepted(FlowState {
            t: state.t + dt,
            h,
            last_dt: dt,
            j,
            speed: e2.speed,
            speed_sup,
            sigma: e2.sigma,
            dt_limit: e2.dt_limit,
        })
    }

    /// One accepted Heun step, halving `dt` on rejection. Returns the new
    /// state and the step size that was accepted.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let mut dt = dt.min(self.cfg.cfl * state.dt_limit).min(self.cfg.dt_max);
        while dt >= self.cfg.dt_min {
            if let Attempt::Accepted(s) = self.attempt(state, dt) {
                return Ok(s);
            }
            dt *= 0.5;
        }
        Err(Error::NonConvergence {
            what: "flow step",
            iterations: 0,
            detail: format!("step size fell below {:e}", self.cfg.dt_min),
            last: None,
        })
    }

    /// `e_1^T hess(log f_eff) e_1 + log f_eff + log sigma_k` at the node
    /// where `W` has its smallest eigenvalue, `e_1` the matching eigenvector.
    pub fn w11(&self, h: &SupportField) -> Result<W11> {
        self.check(h)?;
        let g = &self.grid;
        let mut best = (f64::INFINITY, 0usize);
        let mut w_best = None;
        for p in 0..g.len() {
            let mut w = g.hessian_at(h.values(), p);
            w.add_diagonal(h.values()[p]);
            let lo = eig_extremes(&w).0;
            if lo < best.0 {
                best = (lo, p);
                w_best = Some(w);
            }
        }
        let (_, p) = best;
        let w = w_best.ok_or_else(|| Error::Domain("empty grid".into()))?;
        let s = sigma_matrix_unchecked(&w, self.cfg.k);
        if !(s > 0.0) {
            return Err(Error::Domain(format!("sigma_{} not positive at node {p}", self.cfg.k)));
        }
        let e = min_eigenvector(&w);
        let hl = g.hessian_at(&self.log_f_eff, p);
        let mut quad = 0.0;
        for i in 0..e.len() {
            for j in 0..e.len() {
                quad += e[i] * hl.get(i, j) * e[j];
            }
        }
        Ok(W11 {
            value: quad + self.log_f_eff[p] + s.ln(),
            node: p,
        })
    }

    fn snapshot(&self, state: &FlowState) -> Result<Snapshot> {
        let metrics = state.metrics(self.cfg.k)?;
        let (min_h, max_h) = centered_extremes(&state.h);
        let dj_dt = -self
            .grid
            .weights()
            .iter()
            .zip(&state.sigma)
            .zip(&self.inv_f_eff)
            .zip(&state.speed)
            .map(|(((w, s), i), v)| w * (s - i) * v)
            .sum::<f64>();
        Ok(Snapshot {
            t: state.t,
            dt: state.last_dt,
            j: state.j,
            speed_sup: state.speed_sup,
            min_h,
            max_h,
            metrics,
            w11: self.w11(&state.h)?.value,
            dj_dt,
        })
    }

    /// Runs the flow from `theta h0` until it is classified.
    pub fn run(&self, h0: &SupportField) -> Result<RunOutcome> {
        self.run_with_theta(h0, self.cfg.theta)
    }

    pub fn run_with_theta(&self, h0: &SupportField, theta: f64) -> Result<RunOutcome> {
        self.check(h0)?;
        let cfg = &self.cfg;
        let h = h0.scaled(theta);
        let lo0 = h.field().min();
        let hi0 = h.field().max();
        let floor = cfg.shrink_floor.unwrap_or(0.05 * lo0);
        let ceiling = cfg.expand_ceiling.unwrap_or(20.0 * hi0);
        if !(floor < lo0 && hi0 < ceiling) {
            return Err(Error::Config(format!(
                "thresholds must bracket the initial body: {floor} < {lo0}, {hi0} < {ceiling}"
            )));
        }
        let mut state = self.initial_state(h).map_err(|e| match e {
            Error::Convexity(m) => Error::Config(format!("theta h0 is not admissible: {m}")),
            other => other,
        })?;
        let w = crate::geometry::curvature_matrix(&state.h);
        if !crate::geometry::is_strictly_convex(&w, cfg.k, cfg.convexity_margin) {
            return Err(Error::Config("theta h0 is not strictly convex".into()));
        }

        let record = |s: &FlowState| {
            let (min_h, max_h) = centered_extremes(&s.h);
            StepRecord {
                t: s.t,
                dt: s.last_dt,
                j: s.j,
                speed_sup: s.speed_sup,
                min_h,
                max_h,
            }
        };
        let mut steps = vec![record(&state)];
        let mut snapshots = vec![self.snapshot(&state)?];
        let mut rejected_convexity = 0;
        let mut rejected_functional = 0;
        let mut dt_ctrl = cfg.dt_init.min(cfg.dt_max);
        let mut streak = 0;
        let mut neg_run = 0;
        let mut pos_run = 0;
        let mut accepted = 0usize;

        let (classification, reason) = loop {
            if state.speed_sup < cfg.tol_converge {
                break (Classification::Converged, StopReason::SpeedBelowTolerance);
            }
            if accepted >= cfg.max_steps {
                break (Classification::Stalled, StopReason::MaxSteps);
            }
            let remaining = cfg.max_time - state.t;
            if remaining <= 1e-14 * cfg.max_time {
                break (Classification::Stalled, StopReason::MaxTime);
            }
            let dt = dt_ctrl.min(cfg.cfl * state.dt_limit).min(remaining);
            match self.attempt(&state, dt) {
                Attempt::Accepted(next) => {
                    state = next;
                    accepted += 1;
                    streak += 1;
                    if streak >= 5 {
                        dt_ctrl = (dt_ctrl * 1.2).min(cfg.dt_max);
                        streak = 0;
                    }
                    let rec = record(&state);
                    steps.push(rec);
                    if cfg.snapshot_every > 0 && accepted % cfg.snapshot_every == 0 {
                        snapshots.push(self.snapshot(&state)?);
                    }
                    if rec.min_h < floor {
                        break (Classification::Shrank, StopReason::BelowShrinkFloor);
                    }
                    if rec.max_h > ceiling {
                        break (Classification::Expanded, StopReason::AboveExpandCeiling);
                    }
                    if cfg.sign_classification {
                        let (lo, hi) = state
                            .speed
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                        let eps = 1e-12;
                        neg_run = if hi < -eps { neg_run + 1 } else { 0 };
                        pos_run = if lo > eps { pos_run + 1 } else { 0 };
                        if neg_run >= cfg.sign_persistence {
                            break (Classification::Shrank, StopReason::SpeedNegative);
                        }
                        if pos_run >= cfg.sign_persistence {
                            break (Classification::Expanded, StopReason::SpeedPositive);
                        }
                    }
                }
                rejected => {
                    match rejected {
                        Attempt::FunctionalIncrease => rejected_functional += 1,
                        _ => rejected_convexity += 1,
                    }
                    streak = 0;
                    dt_ctrl = 0.5 * dt;
                    if dt_ctrl < cfg.dt_min {
                        let mean: f64 = self.grid.integrate(&state.speed);
                        if mean < 0.0 {
                            break (Classification::Shrank, StopReason::StepUnderflow);
                        }
                        break (Classification::Stalled, StopReason::StepUnderflow);
                    }
                }
            }
        };
        if snapshots.last().map(|s| s.t) != Some(state.t) {
            snapshots.push(self.snapshot(&state)?);
        }
        Ok(RunOutcome {
            classification,
            reason,
            theta,
            final_state: state,
            steps,
            snapshots,
            rejected_convexity,
            rejected_functional,
        })
    }
}

/// Min and max of `h - zeta.x` with `zeta` the Steiner point.
pub fn centered_extremes(h: &SupportField) -> (f64, f64) {
    let z = steiner_point(h);
    h.values()
        .iter()
        .zip(h.grid().points())
        .map(|(v, x)| v - dot(&z, x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Result of the search for the critical dilation.
#[derive(Clone, Debug)]
pub struct Bisection {
    /// Converged dilation, or the midpoint of the final window.
    pub theta_star: f64,
    pub window: (f64, f64),
    pub converged: bool,
    /// Converged run, or the run at the last probe.
    pub outcome: RunOutcome,
    pub probes: Vec<Probe>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub theta: f64,
    pub classification: Classification,
    pub t_end: f64,
    pub steps: usize,
    /// Accepted steps with `J` above the slack (see [`RunOutcome::monotonicity_violations`]).
    pub j_increases: usize,
    pub rejected_functional: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Stop once `hi - lo < min_window * theta_lo`.
    pub min_window: f64,
    /// Probes evaluated per round (k-section); 1 is plain bisection.
    pub jobs: usize,
}

impl BisectionConfig {
    pub fn new(theta_lo: f64, theta_hi: f64) -> Self {
        BisectionConfig {
            theta_lo,
            theta_hi,
            min_window: 1e-12,
            jobs: 1,
        }
    }
}

fn probe(o: &RunOutcome, slack: f64) -> Probe {
    Probe {
        theta: o.theta,
        classification: o.classification,
        t_end: o.final_state.t,
        steps: o.steps.len() - 1,
        j_increases: o.monotonicity_violations(slack),
        rejected_functional: o.rejected_functional,
    }
}

/// Side of the critical dilation a run lies on: `Some(false)` below
/// (shrinking), `Some(true)` above (expanding), `None` converged.
fn side(flow: &Flow, o: &RunOutcome) -> Option<bool> {
    match o.classification {
        Classification::Shrank => Some(false),
        Classification::Expanded => Some(true),
        Classification::Converged => None,
        Classification::Stalled => Some(flow.grid.integrate(&o.final_state.speed) > 0.0),
    }
}

/// Bisects over the dilation until a run converges or the window closes.
pub fn theta_bisection(flow: &Flow, h0: &SupportField, bc: BisectionConfig) -> Result<Bisection> {
    if !(bc.theta_lo > 0.0 && bc.theta_lo < bc.theta_hi) {
        return Err(Error::Config(format!(
            "need 0 < theta_lo < theta_hi, got {} and {}",
            bc.theta_lo, bc.theta_hi
        )));
    }
    let jobs = bc.jobs.max(1);
    let run_many = |thetas: &[f64]| -> Result<Vec<RunOutcome>> {
        if jobs == 1 || thetas.len() == 1 {
            thetas.iter().map(|&t| flow.run_with_theta(h0, t)).collect()
        } else {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| thetas.par_iter().map(|&t| flow.run_with_theta(h0, t)).collect())
        }
    };

    let ends = run_many(&[bc.theta_lo, bc.theta_hi])?;
    let mut probes: Vec<Probe> = ends.iter().map(|o| probe(o, flow.cfg.j_slack)).collect();
    let [lo_run, hi_run]: [RunOutcome; 2] = ends.try_into().expect("two runs");
    if lo_run.classification != Classification::Shrank || hi_run.classification != Classification::Expanded {
        return Err(Error::Config(format!(
            "bracket does not straddle the critical dilation: theta_lo = {} {:?}, theta_hi = {} {:?}",
            bc.theta_lo, lo_run.classification, bc.theta_hi, hi_run.classification
        )));
    }

    let (mut lo, mut hi) = (bc.theta_lo, bc.theta_hi);
    let mut last = lo_run;
    while hi - lo >= bc.min_window * bc.theta_lo {
        let thetas: Vec<f64> = (1..=jobs)
            .map(|i| lo + (hi - lo) * i as f64 / (jobs + 1) as f64)
            .collect();
        let runs = run_many(&thetas)?;
        probes.extend(runs.iter().map(|o| probe(o, flow.cfg.j_slack)));
        let sides: Vec<Option<bool>> = runs.iter().map(|r| side(flow, r)).collect();
        if let Some(i) = sides.iter().position(Option::is_none) {
            let r = runs.into_iter().nth(i).expect("index in range");
            return Ok(Bisection {
                theta_star: r.theta,
                window: (lo, hi),
                converged: true,
                outcome: r,
                probes,
            });
        }
        // first probe above the critical dilation; the one before it is below
        let first_above = sides.iter().position(|s| *s == Some(true)).unwrap_or(jobs);
        let new_hi = if first_above < jobs { thetas[first_above] } else { hi };
        let new_lo = if first_above > 0 { thetas[first_above - 1] } else { lo };
        last = runs
            .into_iter()
            .nth(first_above.min(jobs - 1))
            .expect("index in range");
        lo = new_lo;
        hi = new_hi;
    }
    Ok(Bisection {
        theta_star: 0.5 * (lo + hi),
        window: (lo, hi),
        converged: false,
        outcome: last,
        probes,
    })
}
