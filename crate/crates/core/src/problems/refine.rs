//! Penalty-method refinement of a decision vector.
//!
//! The merit function is
//! `cost + penalty * (sum e^2 + sum c^2 + sum max(0, h)^2 + sum max(0, |r| - delta_P)^2)`
//! with boundary residuals `e`, state knot-continuity residuals `c`, path
//! constraints `h` and collocated dynamics residuals `r`. It is minimized by
//! steepest descent with an Armijo backtracking line search.

use std::fmt;

use crate::cbp::{basis_row, collocation_derivative_matrix, CompositeBernstein, Knots};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

use super::{
    norm, DecisionVector, ProblemInstance, ProblemKind, BRACHISTOCHRONE_Y_FLOOR,
    COST_QUADRATURE_NODES,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub iterations: usize,
    pub penalty: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            penalty: 100.0,
        }
    }
}

/// Refinement hit a non-finite merit or gradient.
#[derive(Debug, Clone)]
pub struct RefineError {
    pub message: String,
    /// Lowest-merit iterate accepted before the failure.
    pub best: Box<DecisionVector>,
}

impl fmt::Display for RefineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "refinement failed: {}", self.message)
    }
}

impl std::error::Error for RefineError {}

impl From<RefineError> for Error {
    fn from(e: RefineError) -> Self {
        Error::Numeric(e.message)
    }
}

/// Sum of squared constraint violations.
pub fn violation(instance: &ProblemInstance, z: &DecisionVector) -> Result<f64> {
    instance.check_shape(z)?;
    let mut total: f64 = instance.equality_residual(z).iter().map(|e| e * e).sum();
    total += z
        .states
        .knot_continuity_residual()
        .iter()
        .flatten()
        .map(|c| c * c)
        .sum::<f64>();
    total += instance
        .inequality_residual(z)
        .iter()
        .flatten()
        .map(|h| h.max(0.0).powi(2))
        .sum::<f64>();
    if z.controls.is_some() {
        let delta = instance.config.delta_p;
        total += instance
            .dynamics_residual(z)?
            .iter()
            .map(|r| (norm(r) - delta).max(0.0).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

pub fn merit(instance: &ProblemInstance, z: &DecisionVector, penalty: f64) -> Result<f64> {
    Ok(instance.cost(z)? + penalty * violation(instance, z)?)
}

/// Flattened decision variables: state coefficients, control coefficients,
/// then the free knot times `t_1 ... t_K`.
pub fn pack(instance: &ProblemInstance, z: &DecisionVector) -> Vec<f64> {
    let mut v = z.states.coeffs().to_vec();
    if let Some(u) = &z.controls {
        v.extend_from_slice(u.coeffs());
    }
    if instance.kind().free_knots() {
        v.extend_from_slice(&z.knots().values()[1..]);
    }
    v
}

pub fn unpack(instance: &ProblemInstance, template: &DecisionVector, v: &[f64]) -> Result<DecisionVector> {
    let nx = template.states.coeffs().len();
    let nu = template.controls.as_ref().map_or(0, |u| u.coeffs().len());
    let knots = if instance.kind().free_knots() {
        let mut values = vec![template.knots().start()];
        values.extend_from_slice(&v[nx + nu..]);
        Knots::new(values)?
    } else {
        template.knots().clone()
    };
    let x = &template.states;
    let states = CompositeBernstein::new(knots.clone(), x.degree(), x.dim(), v[..nx].to_vec())?;
    let controls = template
        .controls
        .as_ref()
        .map(|u| CompositeBernstein::new(knots, u.degree(), u.dim(), v[nx..nx + nu].to_vec()))
        .transpose()?;
    DecisionVector::new(states, controls)
}

/// Gradient of [`merit`] in [`pack`] order.
pub fn merit_gradient(instance: &ProblemInstance, z: &DecisionVector, penalty: f64) -> Result<Vec<f64>> {
    instance.check_shape(z)?;
    let x = &z.states;
    let n = x.degree();
    let dim = x.dim();
    let nx = x.coeffs().len();
    let nu = z.controls.as_ref().map_or(0, |u| u.coeffs().len());
    let free = instance.kind().free_knots();
    let mut grad = vec![0.0; nx + nu + if free { x.segments() } else { 0 }];

    // cost
    match instance.kind() {
        ProblemKind::ObstacleAvoidance => {
            let last = grad.len() - 1;
            grad[last] += 1.0;
        }
        ProblemKind::Brachistochrone => {
            travel_time_gradient(x, instance.constants.g, &mut grad[..nx]);
        }
    }

    // boundary conditions
    let e = instance.equality_residual(z);
    let last = (x.num_points() - 1) * dim;
    for c in 0..2 {
        grad[c] += penalty * 2.0 * e[c];
        grad[last + c] += penalty * 2.0 * e[2 + c];
    }

    // knot continuity
    for (k, r) in x.knot_continuity_residual().iter().enumerate() {
        let left = (k * (n + 1) + n) * dim;
        let right = (k + 1) * (n + 1) * dim;
        for c in 0..dim {
            grad[left + c] += penalty * 2.0 * r[c];
            grad[right + c] -= penalty * 2.0 * r[c];
        }
    }

    let Some(u) = &z.controls else {
        return Ok(grad);
    };

    // path constraints
    let cst = instance.constants;
    let centre = instance
        .theta
        .obstacle()
        .ok_or_else(|| Error::Structure("controls without obstacle parameters".into()))?;
    for (i, (xp, up)) in x.points().zip(u.points()).enumerate() {
        let speed2 = up[0] * up[0] + up[1] * up[1];
        let lower = (cst.u_min * cst.u_min - speed2).max(0.0);
        let upper = (speed2 - cst.u_max * cst.u_max).max(0.0);
        let dx = [xp[0] - centre[0], xp[1] - centre[1]];
        let clear = (cst.d - dx[0] * dx[0] - dx[1] * dx[1]).max(0.0);
        for c in 0..2 {
            grad[nx + i * 2 + c] += penalty * 2.0 * (upper - lower) * 2.0 * up[c];
            grad[i * 2 + c] -= penalty * 2.0 * clear * 2.0 * dx[c];
        }
    }

    // dynamics
    let delta = instance.config.delta_p;
    let unit = collocation_derivative_matrix(n, 1.0)?;
    let residuals = instance.dynamics_residual(z)?;
    for k in 0..x.segments() {
        let h = x.knots().width(k);
        let mut dh = 0.0;
        for j in 0..=n {
            let idx = k * (n + 1) + j;
            let r = &residuals[idx];
            let rn = norm(r);
            let excess = rn - delta;
            if excess <= 0.0 || rn == 0.0 {
                continue;
            }
            let scale = penalty * 2.0 * excess / rn;
            let uj = u.flat_point(idx);
            for c in 0..dim {
                let gr = scale * r[c];
                for i in 0..=n {
                    let w = unit[[i, j]];
                    if w != 0.0 {
                        grad[(k * (n + 1) + i) * dim + c] += gr * w / h;
                    }
                }
                grad[nx + idx * dim + c] -= gr;
                dh -= gr * (r[c] + uj[c]) / h;
            }
        }
        if free {
            // h_k = t_{k+1} - t_k with t_0 fixed
            grad[nx + nu + k] += dh;
            if k > 0 {
                grad[nx + nu + k - 1] -= dh;
            }
        }
    }
    Ok(grad)
}

fn travel_time_gradient(path: &CompositeBernstein, g: f64, grad: &mut [f64]) {
    let (nodes, weights) = gauss_legendre(COST_QUADRATURE_NODES);
    let n = path.degree();
    let deriv = path.derivative().expect("degree checked by instance");
    for k in 0..path.segments() {
        let h = path.knots().width(k);
        for (s, w) in nodes.iter().zip(&weights) {
            let b = basis_row(n, *s);
            let lower = basis_row(n - 1, *s);
            let db: Vec<f64> = (0..=n)
                .map(|i| {
                    let left = if i > 0 { lower[i - 1] } else { 0.0 };
                    let right = if i < n { lower[i] } else { 0.0 };
                    n as f64 * (left - right)
                })
                .collect();
            let p = path.eval_segment(k, *s);
            let v = deriv.eval_segment(k, *s);
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let floored = p[1] <= BRACHISTOCHRONE_Y_FLOOR;
            let y = p[1].max(BRACHISTOCHRONE_Y_FLOOR);
            let inv = 1.0 / (2.0 * g * y).sqrt();
            for i in 0..=n {
                let base = (k * (n + 1) + i) * 2;
                if speed > 0.0 {
                    grad[base] += w * v[0] / speed * db[i] * inv;
                    grad[base + 1] += w * v[1] / speed * db[i] * inv;
                }
                if !floored {
                    grad[base + 1] -= h * w * speed * 0.5 * inv / y * b[i];
                }
            }
        }
    }
}

/// Steepest descent with backtracking on the penalty merit function.
///
/// The returned iterate never has a larger total violation than `z0`.
pub fn warm_start_refine(
    instance: &ProblemInstance,
    z0: &DecisionVector,
    options: RefineOptions,
) -> std::result::Result<DecisionVector, RefineError> {
    let fail = |message: String, best: &DecisionVector| RefineError {
        message,
        best: Box::new(best.clone()),
    };
    if options.iterations == 0 || !(options.penalty > 0.0) {
        return Err(fail("iterations must be >= 1 and penalty > 0".into(), z0));
    }
    let penalty = options.penalty;
    let eval = |z: &DecisionVector| -> f64 { merit(instance, z, penalty).unwrap_or(f64::NAN) };

    let initial_violation = violation(instance, z0).map_err(|e| fail(e.to_string(), z0))?;
    let mut current = z0.clone();
    let mut f = eval(&current);
    if !f.is_finite() {
        return Err(fail(format!("initial merit is {f}"), z0));
    }
    let mut best_violation = (initial_violation, z0.clone());
    let mut step = 1.0;
    for _ in 0..options.iterations {
        let g = merit_gradient(instance, &current, penalty).map_err(|e| fail(e.to_string(), &current))?;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if !g2.is_finite() {
            return Err(fail("non-finite merit gradient".into(), &current));
        }
        if g2 == 0.0 {
            break;
        }
        let v = pack(instance, &current);
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            if let Ok(z) = unpack(instance, &current, &trial) {
                let ft = eval(&z);
                if ft.is_finite() && ft <= f - 1e-4 * step * g2 {
                    accepted = Some((z, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((z, ft)) = accepted else {
            break;
        };
        current = z;
        f = ft;
        step *= 2.0;
        if let Ok(viol) = violation(instance, &current) {
            if viol < best_violation.0 {
                best_violation = (viol, current.clone());
            }
        }
    }
    let final_violation = violation(instance, &current).unwrap_or(f64::INFINITY);
    if final_violation <= initial_violation {
        Ok(current)
    } else {
        Ok(best_violation.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Constants, ThetaVector, TranscriptionConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_obstacle_z(rng: &mut ChaCha8Rng, instance: &ProblemInstance) -> DecisionVector {
        let cfg = instance.config;
        let mut t = 0.0;
        let mut knots = vec![0.0];
        for _ in 0..cfg.segments {
            t += rng.gen_range(0.5..2.0);
            knots.push(t);
        }
        let knots = Knots::new(knots).unwrap();
        let count = cfg.num_points() * 2;
        let xs: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let us: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.2..1.2)).collect();
        DecisionVector::new(
            CompositeBernstein::new(knots.clone(), cfg.degree, 2, xs).unwrap(),
            Some(CompositeBernstein::new(knots, cfg.degree, 2, us).unwrap()),
        )
        .unwrap()
    }

    fn check_gradient(instance: &ProblemInstance, z: &DecisionVector, penalty: f64) {
        let g = merit_gradient(instance, z, penalty).unwrap();
        let v = pack(instance, z);
        let h = 1e-6;
        let mut fd = vec![0.0; v.len()];
        for i in 0..v.len() {
            let mut plus = v.clone();
            plus[i] += h;
            let mut minus = v.clone();
            minus[i] -= h;
            let fp = merit(instance, &unpack(instance, z, &plus).unwrap(), penalty).unwrap();
            let fm = merit(instance, &unpack(instance, z, &minus).unwrap(), penalty).unwrap();
            fd[i] = (fp - fm) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale < 1e-4, "relative gradient error {}", diff / scale);
    }

    #[test]
    fn obstacle_merit_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inst = ProblemInstance::new(
            ThetaVector::new(
                ProblemKind::ObstacleAvoidance,
                vec![0.0, 0.0, 2.0, 1.0, 1.0, 0.5],
            )
            .unwrap(),
            TranscriptionConfig {
                segments: 2,
                degree: 4,
                delta_p: 1e-2,
            },
            Constants::default(),
        )
        .unwrap();
        for _ in 0..5 {
            let z = random_obstacle_z(&mut rng, &inst);
            check_gradient(&inst, &z, 3.0);
        }
    }

    #[test]
    fn brachistochrone_merit_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = ProblemInstance::new(
            ThetaVector::new(ProblemKind::Brachistochrone, vec![2.0, 1.0]).unwrap(),
            TranscriptionConfig {
                segments: 2,
                degree: 5,
                delta_p: 1e-2,
            },
            Constants::default(),
        )
        .unwrap();
        let knots = inst.fixed_knots().unwrap();
        for _ in 0..5 {
            let pts: Vec<Vec<f64>> = (0..12)
                .map(|i| {
                    let s = i as f64 / 11.0;
                    vec![2.0 * s + rng.gen_range(-0.1..0.1), 0.2 + s + rng.gen_range(0.0..0.2)]
                })
                .collect();
            let z = DecisionVector::new(
                CompositeBernstein::from_points(knots.clone(), 5, &pts).unwrap(),
                None,
            )
            .unwrap();
            check_gradient(&inst, &z, 2.0);
        }
    }

    #[test]
    fn refine_is_deterministic_and_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = ProblemInstance::new(
            ThetaVector::new(
                ProblemKind::ObstacleAvoidance,
                vec![0.0, 0.0, 3.0, 0.0, 1.5, 3.0],
            )
            .unwrap(),
            TranscriptionConfig::default(),
            Constants::default(),
        )
        .unwrap();
        let z0 = random_obstacle_z(&mut rng, &inst);
        let opts = RefineOptions {
            iterations: 50,
            penalty: 10.0,
        };
        let a = warm_start_refine(&inst, &z0, opts).unwrap();
        let b = warm_start_refine(&inst, &z0, opts).unwrap();
        assert_eq!(a, b);
        assert!(violation(&inst, &a).unwrap() <= violation(&inst, &z0).unwrap());
        let bad = RefineOptions {
            iterations: 0,
            penalty: 1.0,
        };
        assert!(warm_start_refine(&inst, &z0, bad).is_err());
    }
}
