//! Parameterized problem definitions and their collocation transcriptions.
//!
//! Two problems are provided:
//!
//! * `Brachistochrone`: a calculus-of-variations problem. The path is the
//!   planar parametric curve `(x(s), y(s))`, `y` measured positive downward,
//!   over the fixed parameter domain `[0, theta_1]`. The running cost is the
//!   travel time `sqrt(x'^2 + y'^2) / sqrt(2 g y)`, integrated segment by
//!   segment with a Gauss-Legendre rule.
//! * `ObstacleAvoidance`: minimum-time single-integrator motion from
//!   `(theta_1, theta_2)` to `(theta_3, theta_4)` around a disc centred at
//!   `(theta_5, theta_6)` with squared clearance `d`, speed in
//!   `[u_min, u_max]`. Knot times are decision variables.

mod refine;

pub use refine::{
    merit, merit_gradient, pack, unpack, violation, warm_start_refine, RefineError, RefineOptions,
};

use serde::{Deserialize, Serialize};

use crate::cbp::{collocation_derivative_matrix, CompositeBernstein, Knots};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Floor applied to `y` inside the travel-time integrand.
pub const BRACHISTOCHRONE_Y_FLOOR: f64 = 1e-6;

/// Gauss-Legendre nodes per segment for the travel-time integral.
pub const COST_QUADRATURE_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Brachistochrone,
    ObstacleAvoidance,
}

impl ProblemKind {
    pub fn theta_len(self) -> usize {
        match self {
            ProblemKind::Brachistochrone => 2,
            ProblemKind::ObstacleAvoidance => 6,
        }
    }

    /// State dimension `n_x`.
    pub fn state_dim(self) -> usize {
        2
    }

    /// Control dimension `n_u`.
    pub fn control_dim(self) -> usize {
        match self {
            ProblemKind::Brachistochrone => 0,
            ProblemKind::ObstacleAvoidance => 2,
        }
    }

    pub fn free_knots(self) -> bool {
        matches!(self, ProblemKind::ObstacleAvoidance)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Brachistochrone => "brachistochrone",
            ProblemKind::ObstacleAvoidance => "obstacle_avoidance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "brachistochrone" => Ok(ProblemKind::Brachistochrone),
            "obstacle_avoidance" | "obstacle" | "obstacle-avoidance" => {
                Ok(ProblemKind::ObstacleAvoidance)
            }
            other => Err(Error::Argument(format!(
                "unknown problem kind {other:?} (expected brachistochrone or obstacle_avoidance)"
            ))),
        }
    }
}

/// Problem parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    kind: ProblemKind,
    values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(kind: ProblemKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.theta_len() {
            return Err(Error::Parameter(format!(
                "{} expects {} parameters, got {}",
                kind.name(),
                kind.theta_len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("parameters must be finite".into()));
        }
        if kind == ProblemKind::Brachistochrone && !(values[0] > 0.0 && values[1] > 0.0) {
            return Err(Error::Parameter(format!(
                "brachistochrone endpoint must have positive x and depth, got {values:?}"
            )));
        }
        Ok(Self { kind, values })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> [f64; 2] {
        match self.kind {
            ProblemKind::Brachistochrone => [0.0, 0.0],
            ProblemKind::ObstacleAvoidance => [self.values[0], self.values[1]],
        }
    }

    pub fn goal(&self) -> [f64; 2] {
        match self.kind {
            ProblemKind::Brachistochrone => [self.values[0], self.values[1]],
            ProblemKind::ObstacleAvoidance => [self.values[2], self.values[3]],
        }
    }

    /// Obstacle centre `(theta_5, theta_6)`.
    pub fn obstacle(&self) -> Option<[f64; 2]> {
        match self.kind {
            ProblemKind::Brachistochrone => None,
            ProblemKind::ObstacleAvoidance => Some([self.values[4], self.values[5]]),
        }
    }
}

/// Physical constants and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub g: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Squared clearance radius.
    pub d: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            g: 9.81,
            u_min: 0.2,
            u_max: 1.0,
            d: 1.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) {
            return Err(Error::Parameter("g must be positive".into()));
        }
        if !(self.u_min >= 0.0 && self.u_min < self.u_max) {
            return Err(Error::Parameter(format!(
                "speed bounds must satisfy 0 <= u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if !(self.d > 0.0) {
            return Err(Error::Parameter("squared clearance d must be positive".into()));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.d.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionConfig {
    /// Segment count `K`.
    pub segments: usize,
    /// Per-segment degree `N`.
    pub degree: usize,
    /// Bound on the collocated dynamics residual norm.
    pub delta_p: f64,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            segments: 3,
            degree: 10,
            delta_p: 1e-2,
        }
    }
}

impl TranscriptionConfig {
    pub fn validate(&self, kind: ProblemKind) -> Result<()> {
        if self.segments == 0 {
            return Err(Error::Configuration("K must be at least 1".into()));
        }
        let min_degree = match kind {
            ProblemKind::Brachistochrone => 1,
            ProblemKind::ObstacleAvoidance => 2,
        };
        if self.degree < min_degree {
            return Err(Error::Configuration(format!(
                "N must be at least {min_degree} for {}",
                kind.name()
            )));
        }
        if !(self.delta_p >= 0.0) {
            return Err(Error::Configuration("delta_P must be nonnegative".into()));
        }
        Ok(())
    }

    /// `M + 1`.
    pub fn num_points(&self) -> usize {
        self.segments * (self.degree + 1)
    }
}

/// Control points of the states, optional controls and (through the knots)
/// the final time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub states: CompositeBernstein,
    pub controls: Option<CompositeBernstein>,
}

impl DecisionVector {
    pub fn new(states: CompositeBernstein, controls: Option<CompositeBernstein>) -> Result<Self> {
        if let Some(u) = &controls {
            if u.knots() != states.knots() || u.degree() != states.degree() {
                return Err(Error::Structure(
                    "states and controls must share knots and degree".into(),
                ));
            }
        }
        if !(states.knots().end() > 0.0) {
            return Err(Error::Structure("final time must be positive".into()));
        }
        Ok(Self { states, controls })
    }

    pub fn knots(&self) -> &Knots {
        self.states.knots()
    }

    pub fn t_final(&self) -> f64 {
        self.states.knots().end()
    }

    /// Stacked control points `[x_j, u_j]` in flattened order.
    pub fn stacked_points(&self) -> Vec<Vec<f64>> {
        match &self.controls {
            None => self.states.points().map(<[f64]>::to_vec).collect(),
            Some(u) => self
                .states
                .points()
                .zip(u.points())
                .map(|(x, u)| x.iter().chain(u).copied().collect())
                .collect(),
        }
    }
}

/// A fully specified problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub theta: ThetaVector,
    pub config: TranscriptionConfig,
    pub constants: Constants,
}

/// JSON form of a problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub kind: ProblemKind,
    pub theta: Vec<f64>,
    #[serde(rename = "K")]
    pub segments: usize,
    #[serde(rename = "N")]
    pub degree: usize,
    #[serde(rename = "delta_P")]
    pub delta_p: f64,
    pub constants: Constants,
}

impl ProblemInstance {
    pub fn new(theta: ThetaVector, config: TranscriptionConfig, constants: Constants) -> Result<Self> {
        config.validate(theta.kind())?;
        constants.validate()?;
        Ok(Self {
            theta,
            config,
            constants,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.theta.kind()
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            kind: self.kind(),
            theta: self.theta.values().to_vec(),
            segments: self.config.segments,
            degree: self.config.degree,
            delta_p: self.config.delta_p,
            constants: self.constants,
        }
    }

    pub fn from_document(doc: &InstanceDocument) -> Result<Self> {
        Self::new(
            ThetaVector::new(doc.kind, doc.theta.clone())?,
            TranscriptionConfig {
                segments: doc.segments,
                degree: doc.degree,
                delta_p: doc.delta_p,
            },
            doc.constants,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    /// Instance document and decision-vector curves separated by `---` lines.
    pub fn warm_start_export(&self, z: &DecisionVector) -> String {
        let mut out = self.to_json();
        out.push_str("\n---\n");
        out.push_str(&z.states.to_text());
        if let Some(u) = &z.controls {
            out.push_str("---\n");
            out.push_str(&u.to_text());
        }
        out
    }

    pub fn warm_start_import(text: &str) -> Result<(Self, DecisionVector)> {
        let mut parts = text.split("\n---\n");
        let instance = Self::from_json(
            parts
                .next()
                .ok_or_else(|| Error::Parse("missing instance document".into()))?,
        )?;
        let states = CompositeBernstein::from_text(
            parts
                .next()
                .ok_or_else(|| Error::Parse("missing state curve".into()))?,
        )?;
        let controls = parts.next().map(CompositeBernstein::from_text).transpose()?;
        let z = DecisionVector::new(states, controls)?;
        instance.check_shape(&z)?;
        Ok((instance, z))
    }

    /// Knots the fixed-domain problem uses.
    pub fn fixed_knots(&self) -> Result<Knots> {
        match self.kind() {
            ProblemKind::Brachistochrone => {
                Knots::uniform(0.0, self.theta.values()[0], self.config.segments)
            }
            ProblemKind::ObstacleAvoidance => Err(Error::Structure(
                "obstacle avoidance knots are decision variables".into(),
            )),
        }
    }

    /// Checks that `z` has the dimensions this instance expects.
    pub fn check_shape(&self, z: &DecisionVector) -> Result<()> {
        let kind = self.kind();
        let x = &z.states;
        if x.dim() != kind.state_dim()
            || x.degree() != self.config.degree
            || x.segments() != self.config.segments
        {
            return Err(Error::Shape(format!(
                "state curve is {}-d, K={}, N={}; instance expects {}-d, K={}, N={}",
                x.dim(),
                x.segments(),
                x.degree(),
                kind.state_dim(),
                self.config.segments,
                self.config.degree
            )));
        }
        match (&z.controls, kind.control_dim()) {
            (None, 0) => Ok(()),
            (Some(u), n) if n > 0 && u.dim() == n => Ok(()),
            _ => Err(Error::Shape(format!(
                "{} expects {} control components",
                kind.name(),
                kind.control_dim()
            ))),
        }
    }

    /// Discretized Bolza cost.
    pub fn cost(&self, z: &DecisionVector) -> Result<f64> {
        self.check_shape(z)?;
        match self.kind() {
            ProblemKind::ObstacleAvoidance => Ok(z.t_final()),
            ProblemKind::Brachistochrone => travel_time(&z.states, self.constants.g),
        }
    }

    /// Collocated dynamics residual `D x - f(x, u)` at every control point.
    pub fn dynamics_residual(&self, z: &DecisionVector) -> Result<Vec<Vec<f64>>> {
        let u = z.controls.as_ref().ok_or_else(|| {
            Error::Structure(format!("{} has no controls", self.kind().name()))
        })?;
        self.check_shape(z)?;
        let x = &z.states;
        let n = x.degree();
        let dim = x.dim();
        let mut out = Vec::with_capacity(x.num_points());
        for k in 0..x.segments() {
            let d = collocation_derivative_matrix(n, x.knots().width(k))?;
            for j in 0..=n {
                let mut r = vec![0.0; dim];
                for i in 0..=n {
                    let w = d[[i, j]];
                    if w != 0.0 {
                        for (rc, xc) in r.iter_mut().zip(x.point(k, i)) {
                            *rc += w * xc;
                        }
                    }
                }
                // single integrator: f(x, u) = u
                for (rc, uc) in r.iter_mut().zip(u.point(k, j)) {
                    *rc -= uc;
                }
                out.push(r);
            }
        }
        Ok(out)
    }

    /// Boundary conditions, read from the first and last control points only.
    pub fn equality_residual(&self, z: &DecisionVector) -> Vec<f64> {
        let first = z.states.first_point();
        let last = z.states.last_point();
        let start = self.theta.start();
        let goal = self.theta.goal();
        vec![
            first[0] - start[0],
            first[1] - start[1],
            last[0] - goal[0],
            last[1] - goal[1],
        ]
    }

    /// Copy of `z` with the boundary conditions and state knot continuity
    /// imposed exactly. Coincident knot points move to their midpoint; the
    /// end point errors are then removed by a shift that blends linearly
    /// from the start correction to the goal correction along the curve.
    pub fn project_boundary(&self, z: &DecisionVector) -> DecisionVector {
        let mut out = z.clone();
        let dim = out.states.dim();
        let n = out.states.degree();
        let segments = out.states.segments();
        let per_segment = (n + 1) * dim;
        let start = self.theta.start();
        let goal = self.theta.goal();
        let c = out.states.coeffs_mut();
        for k in 1..segments {
            let (left, right) = (k * per_segment - dim, k * per_segment);
            for i in 0..dim {
                let mid = 0.5 * (c[left + i] + c[right + i]);
                c[left + i] = mid;
                c[right + i] = mid;
            }
        }
        let last = c.len() - dim;
        let d0 = [start[0] - c[0], start[1] - c[1]];
        let d1 = [goal[0] - c[last], goal[1] - c[last + 1]];
        for k in 0..segments {
            for j in 0..=n {
                let w = (k as f64 + j as f64 / n as f64) / segments as f64;
                let at = k * per_segment + j * dim;
                for i in 0..2 {
                    c[at + i] += (1.0 - w) * d0[i] + w * d1[i];
                }
            }
        }
        c[..2].copy_from_slice(&start);
        c[last..last + 2].copy_from_slice(&goal);
        out
    }

    /// Path constraints `h <= 0` at every control point:
    /// `[u_min^2 - |u|^2, |u|^2 - u_max^2, d - |x - c|^2]`.
    pub fn inequality_residual(&self, z: &DecisionVector) -> Vec<Vec<f64>> {
        let (Some(c), Some(u)) = (self.theta.obstacle(), z.controls.as_ref()) else {
            return Vec::new();
        };
        let k = &self.constants;
        z.states
            .points()
            .zip(u.points())
            .map(|(x, u)| {
                let speed2 = u[0] * u[0] + u[1] * u[1];
                let dx = x[0] - c[0];
                let dy = x[1] - c[1];
                vec![
                    k.u_min * k.u_min - speed2,
                    speed2 - k.u_max * k.u_max,
                    k.d - (dx * dx + dy * dy),
                ]
            })
            .collect()
    }

    /// Largest constraint violation in the sense of the transcription.
    pub fn max_violation(&self, z: &DecisionVector) -> Result<Violations> {
        let equality = self
            .equality_residual(z)
            .iter()
            .chain(z.states.knot_continuity_residual().iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let inequality = self
            .inequality_residual(z)
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let dynamics = match z.controls {
            Some(_) => self
                .dynamics_residual(z)?
                .iter()
                .map(|r| norm(r))
                .fold(0.0f64, f64::max),
            None => 0.0,
        };
        Ok(Violations {
            equality,
            inequality,
            dynamics,
        })
    }
}

/// Worst-case constraint measures of a decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violations {
    /// Largest absolute boundary or knot-continuity residual.
    pub equality: f64,
    /// Largest inequality entry (`-inf` when there are none).
    pub inequality: f64,
    /// Largest dynamics residual norm.
    pub dynamics: f64,
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Travel time along a parametric path `(x(s), y(s))` with `y` positive downward.
pub fn travel_time(path: &CompositeBernstein, g: f64) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(COST_QUADRATURE_NODES);
    let deriv = path.derivative()?;
    let depth_tolerance = 1e-3 * (1.0 + path.last_point()[1].abs());
    let mut total = 0.0;
    for k in 0..path.segments() {
        let h = path.knots().width(k);
        for (s, w) in nodes.iter().zip(&weights) {
            let p = path.eval_segment(k, *s);
            let v = deriv.eval_segment(k, *s);
            if p[1] < -depth_tolerance {
                return Err(Error::Domain(format!(
                    "path rises above the release height (y = {})",
                    p[1]
                )));
            }
            let y = p[1].max(BRACHISTOCHRONE_Y_FLOOR);
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            total += h * w * speed / (2.0 * g * y).sqrt();
        }
    }
    if !total.is_finite() {
        return Err(Error::Domain("travel time is not finite".into()));
    }
    Ok(total)
}
