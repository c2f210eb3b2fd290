//! Oracle decision vectors: analytic solutions expressed in the transcription.

use crate::cbp::{CompositeBernstein, Knots};
use crate::error::{Error, Result};
use crate::problems::{norm, DecisionVector, ProblemInstance, ProblemKind};

use super::cycloid::solve_brachistochrone;
use super::fit::fit_control_points;
use super::obstacle::{solve_obstacle_path, PathSegment, TangentArcPath};

/// Extra radius the oracle path keeps from the obstacle, so the fitted curve
/// clears the true disc by a margin the hull test can see.
pub const OBSTACLE_PLAN_MARGIN: f64 = 2e-3;

/// Fraction of `delta_P` an oracle control may spend on clipping its speed.
const DYNAMICS_SLACK: f64 = 0.99;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub z: DecisionVector,
    /// Optimal cost of the continuous problem.
    pub analytic_cost: f64,
    /// Sup-norm fit error of the state curve.
    pub fit_error: f64,
}

pub fn oracle_solution(instance: &ProblemInstance) -> Result<OracleSolution> {
    match instance.kind() {
        ProblemKind::Brachistochrone => brachistochrone(instance),
        ProblemKind::ObstacleAvoidance => obstacle(instance),
    }
}

fn brachistochrone(instance: &ProblemInstance) -> Result<OracleSolution> {
    let sol = solve_brachistochrone(&instance.theta, instance.constants.g)?;
    let knots = instance.fixed_knots()?;
    let span = knots.end();
    let fit = fit_control_points(|s| sol.point_at(s, span).to_vec(), &knots, instance.config.degree)?;
    Ok(OracleSolution {
        z: DecisionVector::new(fit.curve, None)?,
        analytic_cost: sol.travel_time,
        fit_error: fit.max_error,
    })
}

/// Arc-length knots: each path piece gets at least one segment when
/// `K` allows, and spare segments split whichever piece currently has the
/// longest segments. With fewer segments than pieces the knots are uniform.
fn arc_length_knots(path: &TangentArcPath, segments: usize) -> Result<Knots> {
    let lengths: Vec<f64> = path.segments.iter().map(PathSegment::length).collect();
    let total = path.total_length;
    if segments < lengths.len() {
        return Knots::uniform(0.0, total, segments);
    }
    let mut counts = vec![1usize; lengths.len()];
    for _ in lengths.len()..segments {
        let (i, _) = lengths
            .iter()
            .zip(&counts)
            .map(|(l, c)| l / *c as f64)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        counts[i] += 1;
    }
    let mut values = vec![0.0];
    let mut acc = 0.0;
    for (l, c) in lengths.iter().zip(&counts) {
        for j in 1..=*c {
            values.push(acc + l * j as f64 / *c as f64);
        }
        acc += l;
    }
    let last = values.len() - 1;
    values[last] = total;
    Knots::new(values)
}

fn retime(curve: &CompositeBernstein, knots: Knots) -> Result<CompositeBernstein> {
    CompositeBernstein::new(knots, curve.degree(), curve.dim(), curve.coeffs().to_vec())
}

/// Control curve `u` with `x' = u` up to clipping of the speed to `u_max`.
fn controls_for(states: &CompositeBernstein) -> Result<CompositeBernstein> {
    states.derivative()?.elevate(states.degree())
}

fn obstacle(instance: &ProblemInstance) -> Result<OracleSolution> {
    let theta = &instance.theta;
    let k = instance.constants;
    let center = theta.obstacle().expect("obstacle parameters");
    let (start, goal) = (theta.start(), theta.goal());
    let radius = k.radius();
    let path = solve_obstacle_path(start, goal, center, radius + OBSTACLE_PLAN_MARGIN)?;
    if !(path.total_length > 0.0) {
        return Err(Error::Parameter("start and goal coincide".into()));
    }
    let analytic_cost = solve_obstacle_path(start, goal, center, radius)?.total_length / k.u_max;

    let arc = arc_length_knots(&path, instance.config.segments)?;
    let fit = fit_control_points(|s| path.point_at(s).to_vec(), &arc, instance.config.degree)?;
    let unit_time = Knots::new(arc.values().iter().map(|s| s / k.u_max).collect())?;
    let states = retime(&fit.curve, unit_time)?;

    // Hodograph control points of a curved piece sit outside the speed
    // circle; slow those segments until the clipped speed fits delta_P.
    let u = controls_for(&states)?;
    let cap = k.u_max + DYNAMICS_SLACK * instance.config.delta_p;
    let n = states.degree();
    let mut times = vec![0.0];
    for seg in 0..states.segments() {
        let peak = (0..=n).map(|j| norm(u.point(seg, j))).fold(0.0, f64::max);
        let stretch = (peak / cap).max(1.0);
        times.push(times[seg] + stretch * states.knots().width(seg));
    }
    let states = retime(&states, Knots::new(times)?)?;

    let mut u = controls_for(&states)?;
    let ceiling = k.u_max * (1.0 - 1e-12);
    for p in u.coeffs_mut().chunks_exact_mut(2) {
        let s = norm(p);
        if s > ceiling {
            p[0] *= ceiling / s;
            p[1] *= ceiling / s;
        }
    }
    Ok(OracleSolution {
        z: DecisionVector::new(states, Some(u))?,
        analytic_cost,
        fit_error: fit.max_error,
    })
}
