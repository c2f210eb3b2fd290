//! Prediction metrics against the analytic oracles.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::oracles::cycloid::solve_brachistochrone;
use crate::oracles::oracle_solution;
use crate::problems::{DecisionVector, ProblemInstance, ProblemKind, ThetaVector};

/// Samples per trajectory for the trajectory error.
pub const TRAJECTORY_SAMPLES: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    /// Mean squared state error over uniform samples of the normalized time.
    pub trajectory_mse: f64,
    /// Mean of `100 |J_pred - J*| / J*`.
    pub cost_violation_percent: f64,
    /// Mean wall time of one prediction.
    pub inference_seconds: f64,
    /// Predictions whose cost could not be evaluated (counted as 100%).
    pub cost_failures: usize,
}

fn reference_point(instance: &ProblemInstance, reference: &Reference, tau: f64) -> Result<Vec<f64>> {
    match reference {
        Reference::Cycloid(sol) => {
            let span = instance.theta.values()[0];
            Ok(sol.point_at(tau * span, span).to_vec())
        }
        Reference::Curve(z) => z.states.eval(tau * z.t_final()),
    }
}

enum Reference {
    Cycloid(crate::oracles::CycloidSolution),
    Curve(DecisionVector),
}

/// Mean squared error between `z` and the oracle, sampled at
/// [`TRAJECTORY_SAMPLES`] uniform fractions of each trajectory's duration.
pub fn trajectory_mse(instance: &ProblemInstance, z: &DecisionVector) -> Result<f64> {
    let reference = match instance.kind() {
        ProblemKind::Brachistochrone => {
            Reference::Cycloid(solve_brachistochrone(&instance.theta, instance.constants.g)?)
        }
        ProblemKind::ObstacleAvoidance => Reference::Curve(oracle_solution(instance)?.z),
    };
    let t0 = z.knots().start();
    let span = z.t_final() - t0;
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..TRAJECTORY_SAMPLES {
        let tau = i as f64 / (TRAJECTORY_SAMPLES - 1) as f64;
        let p = z.states.eval((t0 + tau * span).min(z.t_final()))?;
        let q = reference_point(instance, &reference, tau)?;
        for (a, b) in p.iter().zip(&q) {
            total += (a - b) * (a - b);
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Analytic optimal cost of an instance.
pub fn analytic_cost(instance: &ProblemInstance) -> Result<f64> {
    Ok(oracle_solution(instance)?.analytic_cost)
}

/// Runs `predict` on every parameter vector and aggregates the metrics.
pub fn evaluate<F>(
    thetas: &[ThetaVector],
    instance_for: impl Fn(&ThetaVector) -> Result<ProblemInstance>,
    mut predict: F,
) -> Result<EvalReport>
where
    F: FnMut(&ThetaVector) -> Result<DecisionVector>,
{
    if thetas.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let mut mse = 0.0;
    let mut violation = 0.0;
    let mut seconds = 0.0;
    let mut failures = 0usize;
    for theta in thetas {
        let instance = instance_for(theta)?;
        let clock = Instant::now();
        let z = predict(theta)?;
        seconds += clock.elapsed().as_secs_f64();
        mse += trajectory_mse(&instance, &z)?;
        let best = analytic_cost(&instance)?;
        match instance.cost(&z) {
            Ok(c) if c.is_finite() => violation += 100.0 * (c - best).abs() / best,
            _ => {
                failures += 1;
                violation += 100.0;
            }
        }
    }
    let n = thetas.len() as f64;
    Ok(EvalReport {
        count: thetas.len(),
        trajectory_mse: mse / n,
        cost_violation_percent: violation / n,
        inference_seconds: seconds / n,
        cost_failures: failures,
    })
}
