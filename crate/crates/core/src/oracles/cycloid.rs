//! Closed-form brachistochrone: the cycloid through the origin and the endpoint.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::problems::{ProblemKind, ThetaVector};

/// Cycloid `x = a (phi - sin phi)`, `y = a (1 - cos phi)` for `phi` in `[0, phi1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycloidSolution {
    pub a: f64,
    pub phi1: f64,
    /// Descent time `phi1 sqrt(a / g)`.
    pub travel_time: f64,
}

impl CycloidSolution {
    pub fn position(&self, phi: f64) -> [f64; 2] {
        [self.a * (phi - phi.sin()), self.a * (1.0 - phi.cos())]
    }

    /// Point at parameter `s` in `[0, span]`, with the rolling angle
    /// proportional to `s`.
    pub fn point_at(&self, s: f64, span: f64) -> [f64; 2] {
        self.position(self.phi1 * s / span)
    }

    /// Derivative of [`Self::point_at`] with respect to `s`.
    pub fn velocity_at(&self, s: f64, span: f64) -> [f64; 2] {
        let phi = self.phi1 * s / span;
        let rate = self.phi1 / span;
        [self.a * (1.0 - phi.cos()) * rate, self.a * phi.sin() * rate]
    }
}

/// Solves `(1 - cos phi) / (phi - sin phi) = theta_2 / theta_1` by bisection.
pub fn solve_brachistochrone(theta: &ThetaVector, g: f64) -> Result<CycloidSolution> {
    if theta.kind() != ProblemKind::Brachistochrone {
        return Err(Error::Parameter("expected brachistochrone parameters".into()));
    }
    let [x1, y1] = [theta.values()[0], theta.values()[1]];
    if !(x1 > 0.0 && y1 > 0.0) {
        return Err(Error::Parameter(format!("endpoint ({x1}, {y1}) must be positive")));
    }
    let ratio = y1 / x1;
    // Decreasing on (0, 2 pi): +inf near 0, 0 at 2 pi.
    let f = |phi: f64| (1.0 - phi.cos()) / (phi - phi.sin()) - ratio;
    let mut lo = 1e-6;
    let mut hi = 2.0 * PI;
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::Parameter(format!(
            "cannot bracket the rolling angle for ratio {ratio}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi1 = 0.5 * (lo + hi);
    let a = y1 / (1.0 - phi1.cos());
    Ok(CycloidSolution {
        a,
        phi1,
        travel_time: phi1 * (a / g).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn theta(x: f64, y: f64) -> ThetaVector {
        ThetaVector::new(ProblemKind::Brachistochrone, vec![x, y]).unwrap()
    }

    #[test]
    fn half_turn_cycloid() {
        let s = solve_brachistochrone(&theta(PI, 2.0), 9.81).unwrap();
        assert_abs_diff_eq!(s.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi1, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(s.travel_time, PI / 9.81f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.travel_time, 1.00303, epsilon = 1e-5);
    }

    #[test]
    fn quarter_turn_cycloid() {
        let phi = PI / 2.0;
        let s = solve_brachistochrone(&theta(phi - phi.sin(), 1.0 - phi.cos()), 9.81).unwrap();
        assert_abs_diff_eq!(s.a, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.phi1, phi, epsilon = 1e-10);
    }

    #[test]
    fn similarity_scaling() {
        let base = solve_brachistochrone(&theta(1.3, 0.7), 9.81).unwrap();
        let c = 2.5;
        let scaled = solve_brachistochrone(&theta(1.3 * c, 0.7 * c), 9.81).unwrap();
        assert_abs_diff_eq!(scaled.phi1, base.phi1, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled.a, c * base.a, epsilon = 1e-10);
        assert_abs_diff_eq!(scaled.travel_time, c.sqrt() * base.travel_time, epsilon = 1e-10);
    }

    #[test]
    fn endpoint_is_reached() {
        for (x, y) in [(0.5, 3.0), (4.0, 0.5), (2.0, 2.0), (10.0, 0.01)] {
            let s = solve_brachistochrone(&theta(x, y), 9.81).unwrap();
            let p = s.position(s.phi1);
            assert!((p[0] - x).abs() + (p[1] - y).abs() < 1e-9, "{x} {y} -> {p:?}");
            assert!(s.phi1 > 0.0 && s.phi1 < 2.0 * PI);
        }
    }
}
