//! Solver-free feasibility certificates for predicted trajectories.
//!
//! Boundary conditions and knot continuity are read off the first and last
//! control points. Polynomial path constraints are rewritten as scalar
//! composite Bernstein polynomials whose coefficients bound the constraint
//! from below; when a coefficient test fails the polynomial is degree
//! elevated and tested again.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cbp::CompositeBernstein;
use crate::error::Result;
use crate::problems::{norm, DecisionVector, ProblemInstance};

/// Tolerance on boundary and continuity residuals.
pub const EQUALITY_TOL: f64 = 1e-6;

/// Sampled values below `-COUNTEREXAMPLE_TOL` count as violations.
pub const COUNTEREXAMPLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Inconclusive,
    ViolatedAtEndpoint,
}

/// One certified quantity. `min_coefficient` is the smallest Bernstein
/// coefficient of the constraint written as `value >= 0`; for the boundary
/// and dynamics entries it is the remaining margin to the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBound {
    pub name: String,
    pub min_coefficient: f64,
    /// Degree of the polynomial that produced the bound.
    pub elevation_used: usize,
}

impl ConstraintBound {
    pub fn holds(&self) -> bool {
        self.min_coefficient >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub status: Status,
    pub constraints: Vec<ConstraintBound>,
    pub elapsed_seconds: f64,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Default elevation cap, `6 N`.
pub fn default_max_elevation(instance: &ProblemInstance) -> usize {
    6 * instance.config.degree
}

/// Smallest coefficient of `p`, elevating in steps of `step` up to degree
/// `max_degree` while it is negative.
fn min_coefficient_with_elevation(
    p: &CompositeBernstein,
    step: usize,
    max_degree: usize,
) -> Result<(f64, usize)> {
    let lowest = |c: &CompositeBernstein| c.coeffs().iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = lowest(p);
    let mut degree = p.degree();
    while best < 0.0 && degree + step <= max_degree && step > 0 {
        degree += step;
        best = lowest(&p.elevate(degree)?);
    }
    Ok((best, degree))
}

/// `|x - c|^2 - d` as a scalar curve of degree `2N`.
pub fn obstacle_polynomial(states: &CompositeBernstein, center: [f64; 2], d: f64) -> Result<CompositeBernstein> {
    let dx = states.component(0)?.translate(&[-center[0]])?;
    let dy = states.component(1)?.translate(&[-center[1]])?;
    dx.product(&dx)?.add(&dy.product(&dy)?)?.translate(&[-d])
}

/// `|u|^2` as a scalar curve of degree `2N`.
pub fn speed_polynomial(controls: &CompositeBernstein) -> Result<CompositeBernstein> {
    let a = controls.component(0)?;
    let b = controls.component(1)?;
    a.product(&a)?.add(&b.product(&b)?)
}

pub fn certify(
    instance: &ProblemInstance,
    z: &DecisionVector,
    max_elevation: usize,
    tol: f64,
) -> Result<Certificate> {
    let clock = Instant::now();
    instance.check_shape(z)?;
    let n = z.states.degree();
    let mut constraints = Vec::new();

    let boundary = instance
        .equality_residual(z)
        .iter()
        .chain(z.states.knot_continuity_residual().iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    constraints.push(ConstraintBound {
        name: "boundary".into(),
        min_coefficient: tol - boundary,
        elevation_used: n,
    });
    if boundary > tol {
        return Ok(Certificate {
            status: Status::ViolatedAtEndpoint,
            constraints,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
        });
    }

    if let (Some(center), Some(u)) = (instance.theta.obstacle(), z.controls.as_ref()) {
        let k = instance.constants;
        let cap = max_elevation.max(2 * n);
        let g = obstacle_polynomial(&z.states, center, k.d)?;
        let (min_g, deg_g) = min_coefficient_with_elevation(&g, n, cap)?;
        constraints.push(ConstraintBound {
            name: "obstacle".into(),
            min_coefficient: min_g,
            elevation_used: deg_g,
        });
        let s = speed_polynomial(u)?;
        let (lo, deg_lo) =
            min_coefficient_with_elevation(&s.translate(&[-k.u_min * k.u_min])?, n, cap)?;
        constraints.push(ConstraintBound {
            name: "speed_min".into(),
            min_coefficient: lo,
            elevation_used: deg_lo,
        });
        let (hi, deg_hi) = min_coefficient_with_elevation(
            &s.scale(-1.0).translate(&[k.u_max * k.u_max])?,
            n,
            cap,
        )?;
        constraints.push(ConstraintBound {
            name: "speed_max".into(),
            min_coefficient: hi,
            elevation_used: deg_hi,
        });
        let dynamics = instance
            .dynamics_residual(z)?
            .iter()
            .map(|r| norm(r))
            .fold(0.0f64, f64::max);
        constraints.push(ConstraintBound {
            name: "dynamics".into(),
            min_coefficient: instance.config.delta_p - dynamics,
            elevation_used: n,
        });
    }

    let status = if constraints.iter().all(ConstraintBound::holds) {
        Status::Certified
    } else {
        Status::Inconclusive
    };
    Ok(Certificate {
        status,
        constraints,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub t: f64,
    pub constraint: String,
    /// Constraint value in the `value >= 0` convention; negative here.
    pub value: f64,
}

/// Worst sampled violation of the path constraints over `samples` uniform
/// times, if any. A result proves infeasibility; `None` proves nothing.
pub fn counterexample_scan(
    instance: &ProblemInstance,
    z: &DecisionVector,
    samples: usize,
) -> Result<Option<Counterexample>> {
    let samples = samples.max(2);
    let (Some(center), Some(u)) = (instance.theta.obstacle(), z.controls.as_ref()) else {
        return Ok(None);
    };
    let k = instance.constants;
    let (t0, t1) = (z.knots().start(), z.knots().end());
    let mut worst: Option<Counterexample> = None;
    for i in 0..samples {
        let t = (t0 + (t1 - t0) * i as f64 / (samples - 1) as f64).min(t1);
        let x = z.states.eval(t)?;
        let v = u.eval(t)?;
        let dx = x[0] - center[0];
        let dy = x[1] - center[1];
        let speed2 = v[0] * v[0] + v[1] * v[1];
        let checks = [
            ("obstacle", dx * dx + dy * dy - k.d),
            ("speed_min", speed2 - k.u_min * k.u_min),
            ("speed_max", k.u_max * k.u_max - speed2),
        ];
        for (name, value) in checks {
            if value < -COUNTEREXAMPLE_TOL && worst.as_ref().is_none_or(|w| value < w.value) {
                worst = Some(Counterexample {
                    t,
                    constraint: name.into(),
                    value,
                });
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbp::Knots;
    use crate::oracles::oracle_solution;
    use crate::problems::{Constants, ProblemKind, ThetaVector, TranscriptionConfig};

    fn instance(theta: Vec<f64>) -> ProblemInstance {
        ProblemInstance::new(
            ThetaVector::new(ProblemKind::ObstacleAvoidance, theta).unwrap(),
            TranscriptionConfig::default(),
            Constants::default(),
        )
        .unwrap()
    }

    /// Straight constant-speed motion from `a` to `b` on K=3, N=10.
    fn straight(a: [f64; 2], b: [f64; 2]) -> DecisionVector {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let knots = Knots::uniform(0.0, len, 3).unwrap();
        let mut xs = Vec::new();
        for k in 0..3 {
            for j in 0..=10 {
                let f = (k as f64 + j as f64 / 10.0) / 3.0;
                xs.push(vec![a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
            }
        }
        let dir = vec![(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let states = CompositeBernstein::from_points(knots.clone(), 10, &xs).unwrap();
        let controls = CompositeBernstein::constant(knots, 10, &dir).unwrap();
        DecisionVector::new(states, Some(controls)).unwrap()
    }

    #[test]
    fn oracle_fit_certifies() {
        let inst = instance(vec![0.0, 0.0, 4.0, 0.0, 2.0, 0.0]);
        let z = oracle_solution(&inst).unwrap().z;
        let cert = certify(&inst, &z, default_max_elevation(&inst), EQUALITY_TOL).unwrap();
        assert!(cert.is_certified(), "{cert:?}");
        assert!(counterexample_scan(&inst, &z, 10_000).unwrap().is_none());
    }

    #[test]
    fn path_through_centre_is_refuted() {
        let inst = instance(vec![0.0, 0.0, 4.0, 0.0, 2.0, 0.0]);
        let z = straight([0.0, 0.0], [4.0, 0.0]);
        let cert = certify(&inst, &z, 60, EQUALITY_TOL).unwrap();
        assert_eq!(cert.status, Status::Inconclusive);
        let cx = counterexample_scan(&inst, &z, 1000).unwrap().unwrap();
        assert_eq!(cx.constraint, "obstacle");
        assert!(cx.value <= -1.0 + 1e-5, "{cx:?}");
    }

    #[test]
    fn shifted_endpoint_is_violated_exactly() {
        let inst = instance(vec![0.0, 0.0, 4.0, 0.0, 2.0, 5.0]);
        let mut z = straight([0.0, 0.0], [4.0, 0.0]);
        let last = z.states.coeffs().len() - 1;
        z.states.coeffs_mut()[last] += 10.0 * EQUALITY_TOL;
        let cert = certify(&inst, &z, 60, EQUALITY_TOL).unwrap();
        assert_eq!(cert.status, Status::ViolatedAtEndpoint);
    }

    #[test]
    fn tangent_path_has_no_strict_violation() {
        // the line y = 1 touches the unit disc at (2, 1)
        let inst = instance(vec![0.0, 1.0, 4.0, 1.0, 2.0, 0.0]);
        let z = straight([0.0, 1.0], [4.0, 1.0]);
        assert!(counterexample_scan(&inst, &z, 10_001).unwrap().is_none());
        let cert = certify(&inst, &z, 60, EQUALITY_TOL).unwrap();
        assert_ne!(cert.status, Status::ViolatedAtEndpoint);
    }

    #[test]
    fn elevation_never_lowers_the_minimum_coefficient() {
        let inst = instance(vec![0.0, 0.0, 4.0, 0.0, 2.0, 0.0]);
        let z = oracle_solution(&inst).unwrap().z;
        let g = obstacle_polynomial(&z.states, [2.0, 0.3], 1.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for deg in [20, 30, 40, 50] {
            let m = g.elevate(deg.max(21)).unwrap().coeffs().iter().copied().fold(f64::INFINITY, f64::min);
            assert!(m >= prev - 1e-12);
            prev = m;
        }
    }
}
