//! Receding-horizon obstacle avoidance.
//!
//! Each iteration builds a parameter vector from the vehicle position, a
//! horizon point toward the destination and one sensed obstacle, predicts a
//! trajectory, certifies it and executes it to its endpoint. Predictions that
//! do not certify are refined from the prediction as a warm start; if that
//! also fails the analytic oracle path is used.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::cbp::{CompositeBernstein, Knots};
use crate::error::{Error, Result};
use crate::oracles::oracle_solution;
use crate::problems::{
    warm_start_refine, Constants, DecisionVector, ProblemInstance, ProblemKind, RefineOptions,
    ThetaVector,
};
use crate::seq2seq::ModelState;
use crate::verify::{
    certify, default_max_elevation, obstacle_polynomial, Certificate, ConstraintBound, Status,
    EQUALITY_TOL,
};

pub const MAX_ITERATIONS: usize = 100;

/// Horizon endpoints are kept this far outside every obstacle disc.
pub const ENDPOINT_CLEARANCE: f64 = 0.5;

/// Distance of the placeholder obstacle used when nothing is sensed.
pub const SENTINEL_DISTANCE: f64 = 1e3;

/// Samples per executed segment in the path CSV.
const CSV_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub start: [f64; 2],
    pub destination: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    pub sensing_radius: f64,
    pub horizon_distance: f64,
    pub goal_tolerance: f64,
    pub constants: Constants,
}

impl Default for Scenario {
    /// Three obstacles staggered along a 10 m corridor.
    fn default() -> Self {
        let obstacle = |x, y| Obstacle {
            center: [x, y],
            radius: 1.0,
        };
        Self {
            start: [0.0, 5.0],
            destination: [10.0, 5.0],
            obstacles: vec![obstacle(2.5, 5.2), obstacle(5.5, 4.7), obstacle(8.5, 5.3)],
            sensing_radius: 4.0,
            horizon_distance: 3.0,
            goal_tolerance: 0.3,
            constants: Constants::default(),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        let bad = |m: String| Err(Error::Scenario(m));
        if !(self.horizon_distance > 0.0) || !(self.goal_tolerance > 0.0) {
            return bad("horizon_distance and goal_tolerance must be positive".into());
        }
        if !(self.sensing_radius >= 0.0) {
            return bad("sensing_radius must be nonnegative".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) || o.radius > self.constants.radius() {
                return bad(format!(
                    "obstacle {i} radius {} must lie in (0, sqrt(d) = {}]",
                    o.radius,
                    self.constants.radius()
                ));
            }
            if dist(self.destination, o.center) <= o.radius {
                return bad(format!("destination lies inside obstacle {i}"));
            }
            if dist(self.start, o.center) <= o.radius {
                return bad(format!("start lies inside obstacle {i}"));
            }
        }
        Ok(())
    }

    fn check_position(&self, pos: [f64; 2]) -> Result<()> {
        match self.obstacles.iter().position(|o| dist(pos, o.center) < o.radius) {
            Some(i) => Err(Error::Scenario(format!(
                "vehicle at ({}, {}) is inside obstacle {i}",
                pos[0], pos[1]
            ))),
            None => Ok(()),
        }
    }

    /// Indices of obstacles whose disc edge is within sensing range, nearest
    /// first, ties by lower index.
    pub fn sensed(&self, pos: [f64; 2]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.obstacles.len())
            .filter(|&i| {
                let o = &self.obstacles[i];
                dist(pos, o.center) - o.radius <= self.sensing_radius
            })
            .collect();
        idx.sort_by(|&a, &b| {
            dist(pos, self.obstacles[a].center)
                .total_cmp(&dist(pos, self.obstacles[b].center))
                .then(a.cmp(&b))
        });
        idx
    }

    /// Point at `horizon_distance` toward the destination, or the destination
    /// itself when nearer. A point that would land within
    /// [`ENDPOINT_CLEARANCE`] of a disc is pushed along the same ray past it.
    pub fn horizon_point(&self, pos: [f64; 2]) -> [f64; 2] {
        let total = dist(pos, self.destination);
        if total <= self.horizon_distance {
            return self.destination;
        }
        let dir = [
            (self.destination[0] - pos[0]) / total,
            (self.destination[1] - pos[1]) / total,
        ];
        let mut s = self.horizon_distance;
        for _ in 0..=self.obstacles.len() {
            let at = [pos[0] + s * dir[0], pos[1] + s * dir[1]];
            let Some(o) = self
                .obstacles
                .iter()
                .find(|o| dist(at, o.center) < o.radius + ENDPOINT_CLEARANCE)
            else {
                break;
            };
            let r = o.radius + ENDPOINT_CLEARANCE;
            let rel = [o.center[0] - pos[0], o.center[1] - pos[1]];
            let b = rel[0] * dir[0] + rel[1] * dir[1];
            let c = rel[0] * rel[0] + rel[1] * rel[1] - r * r;
            s = s.max(b + (b * b - c).max(0.0).sqrt());
            if s >= total {
                return self.destination;
            }
        }
        [pos[0] + s * dir[0], pos[1] + s * dir[1]]
    }

    fn sentinel(&self, pos: [f64; 2]) -> [f64; 2] {
        let total = dist(pos, self.destination);
        let dir = if total > 0.0 {
            [
                (self.destination[0] - pos[0]) / total,
                (self.destination[1] - pos[1]) / total,
            ]
        } else {
            [1.0, 0.0]
        };
        [
            pos[0] - SENTINEL_DISTANCE * dir[1],
            pos[1] + SENTINEL_DISTANCE * dir[0],
        ]
    }

    fn theta_with(&self, pos: [f64; 2], obstacle: [f64; 2]) -> Result<ThetaVector> {
        let goal = self.horizon_point(pos);
        ThetaVector::new(
            ProblemKind::ObstacleAvoidance,
            vec![pos[0], pos[1], goal[0], goal[1], obstacle[0], obstacle[1]],
        )
    }
}

/// Parameter vector for the next horizon, using the nearest sensed obstacle
/// or a far sentinel when none is sensed.
pub fn build_theta(scenario: &Scenario, vehicle_pos: [f64; 2]) -> Result<ThetaVector> {
    scenario.check_position(vehicle_pos)?;
    let center = match scenario.sensed(vehicle_pos).first() {
        Some(&i) => scenario.obstacles[i].center,
        None => scenario.sentinel(vehicle_pos),
    };
    scenario.theta_with(vehicle_pos, center)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    Refined,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub theta: ThetaVector,
    /// Index of the obstacle encoded in `theta`; `None` for the sentinel.
    pub obstacle: Option<usize>,
    pub predicted: Option<DecisionVector>,
    pub predicted_certificate: Option<Certificate>,
    pub trajectory: DecisionVector,
    pub certificate: Certificate,
    pub fallback: Fallback,
}

fn check_model(scenario: &Scenario, model: &ModelState) -> Result<()> {
    if model.meta.kind != ProblemKind::ObstacleAvoidance {
        return Err(Error::Configuration(format!(
            "planner needs an obstacle-avoidance model, got {}",
            model.meta.kind.name()
        )));
    }
    if model.meta.constants != scenario.constants {
        return Err(Error::Configuration(
            "model and scenario constants differ".into(),
        ));
    }
    Ok(())
}

fn certify_default(instance: &ProblemInstance, z: &DecisionVector) -> Result<Certificate> {
    certify(instance, z, default_max_elevation(instance), EQUALITY_TOL)
}

/// Penalty refinement leaves violations of order `1 / penalty`, so the
/// planner refines against slightly tighter constraints than it certifies.
pub const PLANNER_REFINE: RefineOptions = RefineOptions {
    iterations: 3000,
    penalty: 1e3,
};

fn tightened(instance: &ProblemInstance) -> ProblemInstance {
    let mut out = instance.clone();
    out.constants.d *= 1.02;
    out.constants.u_min *= 1.05;
    out.constants.u_max *= 0.99;
    out.config.delta_p *= 0.5;
    out
}

/// Keeps the predicted path, replaces the controls by the exact derivative
/// of the states and rescales each segment's duration so that the largest
/// hodograph control point sits just below `u_max`.
fn retime_states(instance: &ProblemInstance, z: &DecisionVector) -> Result<DecisionVector> {
    let n = z.states.degree();
    let target = instance.constants.u_max * (1.0 - 1e-3);
    let u = z.states.derivative()?.elevate(n)?;
    let knots = z.knots();
    let mut times = vec![knots.start()];
    for seg in 0..knots.segments() {
        let peak = (0..=n)
            .map(|j| crate::problems::norm(u.point(seg, j)))
            .fold(0.0, f64::max);
        let stretch = if peak > 0.0 { peak / target } else { 1.0 };
        times.push(times[seg] + stretch * knots.width(seg));
    }
    let knots = Knots::new(times)?;
    let states = CompositeBernstein::new(knots, n, z.states.dim(), z.states.coeffs().to_vec())?;
    let controls = states.derivative()?.elevate(n)?;
    DecisionVector::new(states, Some(controls))
}

/// Predict, certify, and fall back until a certified trajectory exists.
/// The refinement step first imposes the boundary conditions exactly, then
/// runs penalty descent from the prediction and re-imposes them.
fn solve_horizon(model: &ModelState, theta: ThetaVector, obstacle: Option<usize>) -> Result<StepOutcome> {
    let instance = model.instance(&theta)?;
    let mut predicted = None;
    let mut predicted_certificate = None;
    match model.predict(&theta) {
        Ok(z) => {
            let cert = certify_default(&instance, &z)?;
            predicted = Some(z);
            predicted_certificate = Some(cert);
        }
        Err(e) => debug!("prediction unusable: {e}"),
    }
    let done = |trajectory, certificate, fallback, predicted, predicted_certificate| StepOutcome {
        theta: theta.clone(),
        obstacle,
        predicted,
        predicted_certificate,
        trajectory,
        certificate,
        fallback,
    };
    if let (Some(z), Some(cert)) = (&predicted, &predicted_certificate) {
        if cert.is_certified() {
            return Ok(done(z.clone(), cert.clone(), Fallback::None, predicted.clone(), predicted_certificate.clone()));
        }
        let projected = instance.project_boundary(z);
        let retimed = retime_states(&instance, &projected)?;
        let cert = certify_default(&instance, &retimed)?;
        debug!("retimed certificate: {:?}", cert.constraints);
        if cert.is_certified() {
            return Ok(done(retimed, cert, Fallback::Refined, predicted, predicted_certificate));
        }
        let refined = warm_start_refine(&tightened(&instance), &retimed, PLANNER_REFINE)
            .unwrap_or_else(|e| *e.best);
        let refined = instance.project_boundary(&refined);
        let cert = certify_default(&instance, &refined)?;
        debug!("refined certificate: {:?}", cert.constraints);
        if cert.is_certified() {
            return Ok(done(refined, cert, Fallback::Refined, predicted, predicted_certificate));
        }
    }
    let oracle = oracle_solution(&instance)?.z;
    let cert = certify_default(&instance, &oracle)?;
    if !cert.is_certified() {
        return Err(Error::Numeric(format!(
            "oracle trajectory for theta {:?} did not certify",
            theta.values()
        )));
    }
    Ok(done(oracle, cert, Fallback::Oracle, predicted, predicted_certificate))
}

/// Whether every coefficient of the clearance polynomial for `o` is
/// nonnegative, elevating up to the certificate cap.
fn clears(instance: &ProblemInstance, z: &DecisionVector, o: &Obstacle) -> Result<bool> {
    let g = obstacle_polynomial(&z.states, o.center, o.radius * o.radius)?;
    let n = z.states.degree();
    let cap = default_max_elevation(instance).max(2 * n);
    let mut degree = g.degree();
    loop {
        let p = if degree == g.degree() { g.clone() } else { g.elevate(degree)? };
        if p.coeffs().iter().all(|&c| c >= 0.0) {
            return Ok(true);
        }
        if degree + n > cap {
            return Ok(false);
        }
        degree += n;
    }
}

/// One horizon. The nearest sensed obstacle goes into the parameter vector;
/// if the resulting trajectory is not certified clear of another sensed
/// obstacle, the next nearest is tried instead.
pub fn plan_step(scenario: &Scenario, model: &ModelState, vehicle_pos: [f64; 2]) -> Result<StepOutcome> {
    check_model(scenario, model)?;
    scenario.check_position(vehicle_pos)?;
    let sensed = scenario.sensed(vehicle_pos);
    if sensed.is_empty() {
        let theta = scenario.theta_with(vehicle_pos, scenario.sentinel(vehicle_pos))?;
        return solve_horizon(model, theta, None);
    }
    let mut first = None;
    for &i in &sensed {
        let theta = scenario.theta_with(vehicle_pos, scenario.obstacles[i].center)?;
        let step = solve_horizon(model, theta, Some(i))?;
        let instance = model.instance(&step.theta)?;
        let mut all_clear = true;
        for &j in sensed.iter().filter(|&&j| j != i) {
            if !clears(&instance, &step.trajectory, &scenario.obstacles[j])? {
                all_clear = false;
                break;
            }
        }
        if all_clear {
            return Ok(step);
        }
        debug!("trajectory around obstacle {i} is not clear of the other sensed obstacles");
        first.get_or_insert(step);
    }
    warn!("no single-obstacle horizon clears every sensed obstacle; using the nearest");
    Ok(first.expect("at least one sensed obstacle"))
}

/// Control points and knots of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub knots: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl From<&DecisionVector> for CurveRecord {
    fn from(z: &DecisionVector) -> Self {
        Self {
            knots: z.knots().values().to_vec(),
            states: z.states.points().map(<[f64]>::to_vec).collect(),
            controls: z
                .controls
                .as_ref()
                .map(|u| u.points().map(<[f64]>::to_vec).collect())
                .unwrap_or_default(),
        }
    }
}

/// Certificate without wall time, so logs are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub status: Status,
    pub constraints: Vec<ConstraintBound>,
}

impl From<&Certificate> for CertificateRecord {
    fn from(c: &Certificate) -> Self {
        Self {
            status: c.status,
            constraints: c.constraints.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanIteration {
    pub theta: Vec<f64>,
    pub obstacle: Option<usize>,
    pub predicted: Option<CurveRecord>,
    pub predicted_certificate: Option<CertificateRecord>,
    pub certificate: CertificateRecord,
    pub fallback_used: Fallback,
    pub executed: CurveRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLog {
    pub scenario: Scenario,
    pub max_iterations: usize,
    pub iterations: Vec<PlanIteration>,
    pub reached_goal: bool,
    pub total_time: f64,
    #[serde(skip)]
    pub executed: Vec<DecisionVector>,
}

/// Runs horizons until the vehicle is within `goal_tolerance` of the
/// destination or [`MAX_ITERATIONS`] horizons have been executed.
pub fn run(scenario: &Scenario, model: &ModelState) -> Result<PlanLog> {
    scenario.validate()?;
    check_model(scenario, model)?;
    let mut log = PlanLog {
        scenario: scenario.clone(),
        max_iterations: MAX_ITERATIONS,
        iterations: Vec::new(),
        reached_goal: false,
        total_time: 0.0,
        executed: Vec::new(),
    };
    let mut pos = scenario.start;
    while dist(pos, scenario.destination) > scenario.goal_tolerance {
        if log.iterations.len() == MAX_ITERATIONS {
            warn!("iteration cap reached {:.3} m from the destination", dist(pos, scenario.destination));
            return Ok(log);
        }
        let step = plan_step(scenario, model, pos)?;
        debug!(
            "iteration {}: fallback {:?}, t_final {:.4}",
            log.iterations.len(),
            step.fallback,
            step.trajectory.t_final()
        );
        let z = &step.trajectory;
        log.total_time += z.t_final() - z.knots().start();
        let end = z.states.points().last().expect("curve has points");
        pos = [end[0], end[1]];
        log.iterations.push(PlanIteration {
            theta: step.theta.values().to_vec(),
            obstacle: step.obstacle,
            predicted: step.predicted.as_ref().map(CurveRecord::from),
            predicted_certificate: step.predicted_certificate.as_ref().map(CertificateRecord::from),
            certificate: CertificateRecord::from(&step.certificate),
            fallback_used: step.fallback,
            executed: CurveRecord::from(z),
        });
        log.executed.push(step.trajectory);
    }
    log.reached_goal = true;
    Ok(log)
}

impl PlanLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan log serializes")
    }

    /// Obstacles that appeared in some horizon's parameter vector.
    pub fn handled_obstacles(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.iterations.iter().filter_map(|it| it.obstacle).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Smallest `|x - c|^2` over `samples` points spread uniformly in time
    /// along the executed path, for the given obstacles.
    pub fn min_squared_clearance(&self, obstacles: &[usize], samples: usize) -> Result<f64> {
        let mut best = f64::INFINITY;
        if self.executed.is_empty() || obstacles.is_empty() {
            return Ok(best);
        }
        let durations: Vec<f64> = self
            .executed
            .iter()
            .map(|z| z.t_final() - z.knots().start())
            .collect();
        let total: f64 = durations.iter().sum();
        let samples = samples.max(2);
        let mut seg = 0;
        let mut offset = 0.0;
        for i in 0..samples {
            let t = total * i as f64 / (samples - 1) as f64;
            while seg + 1 < durations.len() && t > offset + durations[seg] {
                offset += durations[seg];
                seg += 1;
            }
            let z = &self.executed[seg];
            let local = (z.knots().start() + t - offset).min(z.t_final());
            let x = z.states.eval(local)?;
            for &j in obstacles {
                let c = self.scenario.obstacles[j].center;
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                best = best.min(d2);
            }
        }
        Ok(best)
    }

    /// Executed path as `t,x,y,speed`.
    pub fn path_csv(&self) -> Result<String> {
        let mut out = String::from("t,x,y,speed\n");
        let mut offset = 0.0;
        for z in &self.executed {
            let (t0, t1) = (z.knots().start(), z.t_final());
            for i in 0..CSV_SAMPLES {
                let t = (t0 + (t1 - t0) * i as f64 / (CSV_SAMPLES - 1) as f64).min(t1);
                let x = z.states.eval(t)?;
                let speed = match &z.controls {
                    Some(u) => {
                        let v = u.eval(t)?;
                        v[0].hypot(v[1])
                    }
                    None => f64::NAN,
                };
                writeln!(out, "{},{},{},{}", offset + t - t0, x[0], x[1], speed).expect("string write");
            }
            offset += t1 - t0;
        }
        Ok(out)
    }

    /// Per-iteration curves as `curve,t,x,y`, where `curve` is `executed`
    /// or `predicted`.
    pub fn iteration_csv(&self, i: usize) -> Result<String> {
        let mut out = String::from("curve,t,x,y\n");
        let it = &self.iterations[i];
        let mut emit = |name: &str, rec: &CurveRecord| -> Result<()> {
            let z = curve_from_record(rec)?;
            let (t0, t1) = (z.knots().start(), z.t_final());
            for k in 0..CSV_SAMPLES {
                let t = (t0 + (t1 - t0) * k as f64 / (CSV_SAMPLES - 1) as f64).min(t1);
                let x = z.states.eval(t)?;
                writeln!(out, "{name},{t},{},{}", x[0], x[1]).expect("string write");
            }
            Ok(())
        };
        emit("executed", &it.executed)?;
        if let Some(p) = &it.predicted {
            emit("predicted", p)?;
        }
        Ok(out)
    }

    /// Writes `plan.json`, `path.csv` and `iteration_NNN.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("plan.json"), self.to_json())?;
        std::fs::write(dir.join("path.csv"), self.path_csv()?)?;
        for i in 0..self.iterations.len() {
            std::fs::write(dir.join(format!("iteration_{i:03}.csv")), self.iteration_csv(i)?)?;
        }
        Ok(())
    }
}

fn curve_from_record(rec: &CurveRecord) -> Result<DecisionVector> {
    let knots = Knots::new(rec.knots.clone())?;
    let segments = rec.knots.len() - 1;
    let degree = rec.states.len() / segments - 1;
    let states = CompositeBernstein::from_points(knots.clone(), degree, &rec.states)?;
    let controls = if rec.controls.is_empty() {
        None
    } else {
        Some(CompositeBernstein::from_points(knots, degree, &rec.controls)?)
    };
    DecisionVector::new(states, controls)
}
