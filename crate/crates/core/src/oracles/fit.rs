//! Least-squares fitting of composite Bernstein control points to a sampled trajectory.

use nalgebra::DMatrix;

use crate::cbp::{basis_row, CompositeBernstein, Knots};
use crate::error::{Error, Result};

/// Samples per segment used by the fit are `SAMPLES_PER_POINT * (N + 1)`.
pub const SAMPLES_PER_POINT: usize = 20;

/// A fitted curve and its sup-norm error on a dense check grid.
#[derive(Debug, Clone)]
pub struct Fit {
    pub curve: CompositeBernstein,
    pub max_error: f64,
}

/// Fits each segment independently. Segment endpoints interpolate the
/// trajectory exactly, so adjacent segments share their boundary points and
/// the curve reproduces the trajectory's endpoints.
pub fn fit_control_points<F>(trajectory: F, knots: &Knots, degree: usize) -> Result<Fit>
where
    F: Fn(f64) -> Vec<f64>,
{
    if degree == 0 {
        return Err(Error::Fit("degree must be at least 1".into()));
    }
    let dim = trajectory(knots.start()).len();
    if dim == 0 {
        return Err(Error::Fit("trajectory has no components".into()));
    }
    let n = degree;
    let samples = SAMPLES_PER_POINT * (n + 1);
    let mut coeffs = Vec::with_capacity(knots.segments() * (n + 1) * dim);

    for k in 0..knots.segments() {
        let (a, b) = knots.span(k);
        let head = trajectory(a);
        let tail = trajectory(b);
        let mut seg = vec![vec![0.0; dim]; n + 1];
        seg[0].clone_from(&head);
        seg[n].clone_from(&tail);
        if n >= 2 {
            let interior = n - 1;
            let mut design = DMatrix::<f64>::zeros(samples, interior);
            let mut rhs = DMatrix::<f64>::zeros(samples, dim);
            for r in 0..samples {
                let s = r as f64 / (samples - 1) as f64;
                let row = basis_row(n, s);
                let value = trajectory(a + s * (b - a));
                for c in 0..interior {
                    design[(r, c)] = row[c + 1];
                }
                for c in 0..dim {
                    rhs[(r, c)] = value[c] - row[0] * head[c] - row[n] * tail[c];
                }
            }
            let svd = design.svd(true, true);
            let smallest = svd.singular_values.min();
            let largest = svd.singular_values.max();
            if !(smallest > largest * 1e-13) {
                return Err(Error::Fit(format!(
                    "rank-deficient design on segment {k} (singular values {smallest:e}..{largest:e})"
                )));
            }
            let solution = svd
                .solve(&rhs, 0.0)
                .map_err(|e| Error::Fit(format!("least-squares solve failed: {e}")))?;
            for (j, point) in seg.iter_mut().enumerate().take(n).skip(1) {
                for c in 0..dim {
                    point[c] = solution[(j - 1, c)];
                }
            }
        }
        coeffs.extend(seg.into_iter().flatten());
    }

    let curve = CompositeBernstein::new(knots.clone(), degree, dim, coeffs)?;
    let max_error = sup_error(&curve, &trajectory, 200);
    Ok(Fit { curve, max_error })
}

/// Largest component-wise deviation on `per_segment + 1` uniform points of every segment.
pub fn sup_error<F>(curve: &CompositeBernstein, trajectory: &F, per_segment: usize) -> f64
where
    F: Fn(f64) -> Vec<f64>,
{
    let mut worst = 0.0f64;
    for k in 0..curve.segments() {
        let (a, b) = curve.knots().span(k);
        for i in 0..=per_segment {
            let s = i as f64 / per_segment as f64;
            let got = curve.eval_segment(k, s);
            let want = trajectory(a + s * (b - a));
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_recovered_exactly() {
        let knots = Knots::new(vec![0.0, 0.4, 1.5, 2.0]).unwrap();
        let f = |t: f64| vec![1.0 - 2.0 * t + 0.5 * t.powi(3), t.powi(4) - t];
        let fit = fit_control_points(f, &knots, 5).unwrap();
        assert!(fit.max_error < 1e-9, "{}", fit.max_error);
    }

    #[test]
    fn endpoints_interpolate() {
        let knots = Knots::uniform(0.0, 3.0, 3).unwrap();
        let f = |t: f64| vec![t.sin(), (2.0 * t).cos()];
        let fit = fit_control_points(f, &knots, 4).unwrap();
        assert_eq!(fit.curve.first_point(), f(0.0).as_slice());
        assert_eq!(fit.curve.last_point(), f(3.0).as_slice());
        for r in fit.curve.knot_continuity_residual() {
            assert!(r.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn linear_degree_one() {
        let knots = Knots::uniform(0.0, 1.0, 2).unwrap();
        let fit = fit_control_points(|t| vec![3.0 * t], &knots, 1).unwrap();
        assert!(fit.max_error < 1e-15);
        assert!(fit_control_points(|t| vec![t], &knots, 0).is_err());
    }
}
