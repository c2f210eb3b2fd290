//! Composite Bernstein polynomials.
//!
//! A composite curve is `K` Bernstein polynomials of a common degree `N`
//! laid end to end over the ordered knots `t_0 < t_1 < ... < t_K`. Control
//! points are stored segment-major, index-minor, so the flattened order is
//! `[x_{0,N}^{1}, ..., x_{N,N}^{1}, ..., x_{0,N}^{K}, ..., x_{N,N}^{K}]`.
//!
//! Segment indices in this module are zero based: segment `k` spans
//! `[t_k, t_{k+1}]`.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Largest degree for which binomial coefficients are computed.
pub const MAX_DEGREE: usize = 60;

/// Binomial coefficient `C(n, k)` via the multiplicative recurrence.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Strictly increasing time knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Knots(Vec<f64>);

impl Knots {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least two knots, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("knots must be finite".into()));
        }
        if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "knots must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self(values))
    }

    /// `segments + 1` equally spaced knots on `[start, end]`.
    pub fn uniform(start: f64, end: f64, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::Domain("need at least one segment".into()));
        }
        let width = end - start;
        let values = (0..=segments)
            .map(|k| {
                if k == segments {
                    end
                } else {
                    start + width * k as f64 / segments as f64
                }
            })
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn segments(&self) -> usize {
        self.0.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn span(&self, segment: usize) -> (f64, f64) {
        (self.0[segment], self.0[segment + 1])
    }

    pub fn width(&self, segment: usize) -> f64 {
        self.0[segment + 1] - self.0[segment]
    }

    /// Segment owning `t`. Interior knots belong to the segment on their right.
    pub fn locate(&self, t: f64) -> Result<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::Domain(format!(
                "t = {t} outside [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        let k = self.segments();
        // partition_point returns the count of knots <= t.
        let idx = self.0.partition_point(|&v| v <= t);
        Ok(idx.saturating_sub(1).min(k - 1))
    }

    fn matches(&self, other: &Knots) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())))
    }
}

/// Bernstein basis function `b_{j,N}` of segment `segment` at time `t`.
pub fn basis_eval(j: usize, degree: usize, segment: usize, knots: &Knots, t: f64) -> Result<f64> {
    if segment >= knots.segments() {
        return Err(Error::Index(format!(
            "segment {segment} out of range for {} segments",
            knots.segments()
        )));
    }
    if j > degree {
        return Err(Error::Index(format!("basis index {j} exceeds degree {degree}")));
    }
    let (a, b) = knots.span(segment);
    if !(t >= a && t <= b) {
        return Err(Error::Domain(format!("t = {t} outside segment [{a}, {b}]")));
    }
    let h = b - a;
    let value = binomial(degree, j) * (t - a).powi(j as i32) * (b - t).powi((degree - j) as i32)
        / h.powi(degree as i32);
    Ok(value)
}

/// Values of all `N + 1` basis functions at the local coordinate `s` in `[0, 1]`.
pub fn basis_row(degree: usize, s: f64) -> Vec<f64> {
    (0..=degree)
        .map(|j| binomial(degree, j) * s.powi(j as i32) * (1.0 - s).powi((degree - j) as i32))
        .collect()
}

/// Degree elevation matrix `E_N^{N_e}` with shape `(N + 1) x (N_e + 1)`.
#[derive(Debug, Clone)]
pub struct ElevationMatrix {
    from_degree: usize,
    to_degree: usize,
    entries: Array2<f64>,
}

impl ElevationMatrix {
    pub fn new(from_degree: usize, to_degree: usize) -> Result<Self> {
        if to_degree <= from_degree {
            return Err(Error::Degree(format!(
                "elevation target {to_degree} must exceed degree {from_degree}"
            )));
        }
        if to_degree > MAX_DEGREE {
            return Err(Error::Degree(format!(
                "degree {to_degree} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let n = from_degree;
        let r = to_degree - from_degree;
        let mut entries = Array2::zeros((n + 1, to_degree + 1));
        for i in 0..=n {
            for j in 0..=r {
                entries[[i, i + j]] = binomial(r, j) * binomial(n, i) / binomial(to_degree, i + j);
            }
        }
        Ok(Self {
            from_degree,
            to_degree,
            entries,
        })
    }

    pub fn from_degree(&self) -> usize {
        self.from_degree
    }

    pub fn to_degree(&self) -> usize {
        self.to_degree
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }
}

/// Square matrix mapping the `N + 1` control points of one segment to the
/// `N + 1` control points of its derivative, elevated back to degree `N`.
///
/// Row `i` holds the weights of input point `i`; the product is
/// `D_{N-1} E_{N-1}^{N}`.
pub fn collocation_derivative_matrix(degree: usize, width: f64) -> Result<Array2<f64>> {
    if degree == 0 {
        return Err(Error::Degree("cannot differentiate a degree-0 segment".into()));
    }
    let n = degree;
    let mut d = Array2::zeros((n + 1, n));
    let scale = n as f64 / width;
    for j in 0..n {
        d[[j, j]] = -scale;
        d[[j + 1, j]] = scale;
    }
    if n == 1 {
        // Elevating a constant to degree 1 duplicates it.
        let mut out = Array2::zeros((2, 2));
        for i in 0..2 {
            out[[i, 0]] = d[[i, 0]];
            out[[i, 1]] = d[[i, 0]];
        }
        return Ok(out);
    }
    let e = ElevationMatrix::new(n - 1, n)?;
    Ok(d.dot(e.entries()))
}

/// A vector-valued composite Bernstein polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBernstein {
    knots: Knots,
    degree: usize,
    dim: usize,
    coeffs: Vec<f64>,
}

impl CompositeBernstein {
    /// `coeffs` holds `K (N + 1) dim` values, segment-major, index-minor,
    /// component-fastest.
    pub fn new(knots: Knots, degree: usize, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        if degree > MAX_DEGREE {
            return Err(Error::Degree(format!(
                "degree {degree} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let expected = knots.segments() * (degree + 1) * dim;
        if coeffs.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} coefficient values, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            knots,
            degree,
            dim,
            coeffs,
        })
    }

    /// Builds a curve from points given as rows, in flattened control-point order.
    pub fn from_points(knots: Knots, degree: usize, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape("control points of mixed dimension".into()));
        }
        let coeffs = points.iter().flatten().copied().collect();
        Self::new(knots, degree, dim, coeffs)
    }

    /// Same value `c` at every control point.
    pub fn constant(knots: Knots, degree: usize, value: &[f64]) -> Result<Self> {
        let count = knots.segments() * (degree + 1);
        let coeffs = (0..count).flat_map(|_| value.iter().copied()).collect();
        Self::new(knots, degree, value.len(), coeffs)
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> usize {
        self.knots.segments()
    }

    /// Total number of control points, `M + 1 = K (N + 1)`.
    pub fn num_points(&self) -> usize {
        self.segments() * (self.degree + 1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Control point `j` of segment `segment`.
    pub fn point(&self, segment: usize, j: usize) -> &[f64] {
        let start = (segment * (self.degree + 1) + j) * self.dim;
        &self.coeffs[start..start + self.dim]
    }

    /// Control point at flattened index `i` in `0..=M`.
    pub fn flat_point(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_point(&self) -> &[f64] {
        self.flat_point(0)
    }

    pub fn last_point(&self) -> &[f64] {
        self.flat_point(self.num_points() - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coeffs.chunks_exact(self.dim)
    }

    fn segment_coeffs(&self, segment: usize) -> &[f64] {
        let len = (self.degree + 1) * self.dim;
        &self.coeffs[segment * len..(segment + 1) * len]
    }

    /// Evaluate at `t` in `[t_0, t_K]` using de Casteljau's algorithm.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.knots.locate(t)?;
        let (a, b) = self.knots.span(k);
        Ok(self.eval_segment(k, (t - a) / (b - a)))
    }

    /// Evaluate segment `k` at local coordinate `s` in `[0, 1]`.
    pub fn eval_segment(&self, segment: usize, s: f64) -> Vec<f64> {
        let n = self.degree;
        let dim = self.dim;
        let mut work = self.segment_coeffs(segment).to_vec();
        for r in 1..=n {
            for j in 0..=(n - r) {
                for c in 0..dim {
                    work[j * dim + c] = (1.0 - s) * work[j * dim + c] + s * work[(j + 1) * dim + c];
                }
            }
        }
        work.truncate(dim);
        work
    }

    /// Derivative curve of degree `N - 1` on the same knots.
    pub fn derivative(&self) -> Result<Self> {
        if self.degree == 0 {
            return Err(Error::Degree("cannot differentiate a degree-0 curve".into()));
        }
        let n = self.degree;
        let dim = self.dim;
        let mut coeffs = Vec::with_capacity(self.segments() * n * dim);
        for k in 0..self.segments() {
            let scale = n as f64 / self.knots.width(k);
            let seg = self.segment_coeffs(k);
            for j in 0..n {
                for c in 0..dim {
                    coeffs.push(scale * (seg[(j + 1) * dim + c] - seg[j * dim + c]));
                }
            }
        }
        Self::new(self.knots.clone(), n - 1, dim, coeffs)
    }

    /// Exact definite integral over `[t_0, t_K]`.
    pub fn integral(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        for k in 0..self.segments() {
            let w = self.knots.width(k) / (self.degree + 1) as f64;
            for p in self.segment_coeffs(k).chunks_exact(self.dim) {
                for (acc, v) in total.iter_mut().zip(p) {
                    *acc += w * v;
                }
            }
        }
        total
    }

    /// Re-express every segment at degree `to_degree > N`.
    pub fn elevate(&self, to_degree: usize) -> Result<Self> {
        let e = ElevationMatrix::new(self.degree, to_degree)?;
        self.elevate_with(&e)
    }

    pub fn elevate_with(&self, e: &ElevationMatrix) -> Result<Self> {
        if e.from_degree() != self.degree {
            return Err(Error::Degree(format!(
                "elevation matrix is for degree {}, curve has degree {}",
                e.from_degree(),
                self.degree
            )));
        }
        let ne = e.to_degree();
        let dim = self.dim;
        let m = e.entries();
        let mut coeffs = vec![0.0; self.segments() * (ne + 1) * dim];
        for k in 0..self.segments() {
            let seg = self.segment_coeffs(k);
            let out = &mut coeffs[k * (ne + 1) * dim..(k + 1) * (ne + 1) * dim];
            for i in 0..=self.degree {
                for j in i..=(i + ne - self.degree) {
                    let w = m[[i, j]];
                    for c in 0..dim {
                        out[j * dim + c] += w * seg[i * dim + c];
                    }
                }
            }
        }
        Self::new(self.knots.clone(), ne, dim, coeffs)
    }

    /// Scalar component `c` as a one-dimensional curve.
    pub fn component(&self, c: usize) -> Result<Self> {
        if c >= self.dim {
            return Err(Error::Index(format!("component {c} of a {}-d curve", self.dim)));
        }
        let coeffs = self.points().map(|p| p[c]).collect();
        Self::new(self.knots.clone(), self.degree, 1, coeffs)
    }

    /// Product of two scalar curves on common knots; degree `N_a + N_b`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.dim != 1 || other.dim != 1 {
            return Err(Error::Shape("product is defined for scalar curves".into()));
        }
        if !self.knots.matches(&other.knots) {
            return Err(Error::Alignment("product operands have different knots".into()));
        }
        let na = self.degree;
        let nb = other.degree;
        let n = na + nb;
        if n > MAX_DEGREE {
            return Err(Error::Degree(format!(
                "product degree {n} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let mut coeffs = vec![0.0; self.segments() * (n + 1)];
        for k in 0..self.segments() {
            let a = self.segment_coeffs(k);
            let b = other.segment_coeffs(k);
            let out = &mut coeffs[k * (n + 1)..(k + 1) * (n + 1)];
            for i in 0..=na {
                let ci = binomial(na, i);
                for j in 0..=nb {
                    out[i + j] += ci * binomial(nb, j) * a[i] * b[j];
                }
            }
            for (idx, v) in out.iter_mut().enumerate() {
                *v /= binomial(n, idx);
            }
        }
        Self::new(self.knots.clone(), n, 1, coeffs)
    }

    /// Componentwise sum of two curves with equal knots, degree and dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.knots.matches(&other.knots) {
            return Err(Error::Alignment("sum operands have different knots".into()));
        }
        if self.degree != other.degree || self.dim != other.dim {
            return Err(Error::Shape("sum operands differ in degree or dimension".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self::new(self.knots.clone(), self.degree, self.dim, coeffs)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Adds `offset` to every control point (shifts the curve).
    pub fn translate(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::Shape(format!(
                "offset has {} components, curve has {}",
                offset.len(),
                self.dim
            )));
        }
        let mut out = self.clone();
        for p in out.coeffs.chunks_exact_mut(self.dim) {
            for (v, o) in p.iter_mut().zip(offset) {
                *v += o;
            }
        }
        Ok(out)
    }

    /// Per-component `(min, max)` over every control point.
    pub fn coeff_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for p in self.points() {
            for (b, v) in bounds.iter_mut().zip(p) {
                b.0 = b.0.min(*v);
                b.1 = b.1.max(*v);
            }
        }
        bounds
    }

    /// Per-segment `(min, max)` of a scalar curve's coefficients.
    pub fn segment_bounds(&self, segment: usize, component: usize) -> (f64, f64) {
        self.segment_coeffs(segment)
            .chunks_exact(self.dim)
            .map(|p| p[component])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Last point of segment `k` minus first point of segment `k + 1`.
    pub fn knot_continuity_residual(&self) -> Vec<Vec<f64>> {
        (0..self.segments().saturating_sub(1))
            .map(|k| {
                let left = self.point(k, self.degree);
                let right = self.point(k + 1, 0);
                left.iter().zip(right).map(|(a, b)| a - b).collect()
            })
            .collect()
    }

    /// Text record: `CBP dim K N t_0 ... t_K` then one control point per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("CBP {} {} {}", self.dim, self.segments(), self.degree);
        for t in self.knots.values() {
            let _ = write!(out, " {}", fmt_f64(*t));
        }
        out.push('\n');
        for p in self.points() {
            let line: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty curve record".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 4 || fields[0] != "CBP" {
            return Err(Error::Parse(format!("bad curve header: {header:?}")));
        }
        let dim: usize = parse_field(fields[1])?;
        let segments: usize = parse_field(fields[2])?;
        let degree: usize = parse_field(fields[3])?;
        if fields.len() != 4 + segments + 1 {
            return Err(Error::Parse(format!(
                "header lists {} knots, expected {}",
                fields.len() - 4,
                segments + 1
            )));
        }
        let knots = fields[4..]
            .iter()
            .map(|f| parse_field::<f64>(f))
            .collect::<Result<Vec<_>>>()?;
        let count = segments * (degree + 1);
        let mut coeffs = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("curve record truncated".into()))?;
            let row = line
                .split_whitespace()
                .map(parse_field::<f64>)
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim {
                return Err(Error::Parse(format!(
                    "control point has {} values, expected {dim}",
                    row.len()
                )));
            }
            coeffs.extend(row);
        }
        Self::new(Knots::new(knots)?, degree, dim, coeffs)
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(n: usize) -> Knots {
        Knots::uniform(0.0, 1.0, n).unwrap()
    }

    fn scalar(knots: Knots, degree: usize, values: &[f64]) -> CompositeBernstein {
        CompositeBernstein::new(knots, degree, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn knots_reject_non_increasing() {
        assert!(Knots::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(Knots::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(Knots::new(vec![0.0]).is_err());
        assert!(Knots::new(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert!((binomial(60, 30) / 118264581564861424.0 - 1.0).abs() < 1e-14);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn basis_endpoints_and_midpoint() {
        let k = Knots::new(vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(basis_eval(0, 1, 1, &k, 1.0).unwrap(), 1.0);
        assert_eq!(basis_eval(3, 3, 1, &k, 3.0).unwrap(), 1.0);
        assert_abs_diff_eq!(basis_eval(1, 2, 0, &unit(1), 0.5).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn basis_errors() {
        let k = unit(2);
        assert!(matches!(basis_eval(0, 2, 0, &k, 0.75), Err(Error::Domain(_))));
        assert!(matches!(basis_eval(3, 2, 0, &k, 0.25), Err(Error::Index(_))));
        assert!(matches!(basis_eval(0, 2, 5, &k, 0.25), Err(Error::Index(_))));
    }

    #[test]
    fn eval_examples() {
        let c = scalar(unit(1), 2, &[0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(c.eval(0.5).unwrap()[0], 0.5, epsilon = 1e-15);
        let flat = CompositeBernstein::constant(unit(3), 4, &[2.5, -1.0]).unwrap();
        for t in [0.0, 0.2, 1.0 / 3.0, 0.9, 1.0] {
            let v = flat.eval(t).unwrap();
            assert_abs_diff_eq!(v[0], 2.5, epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-14);
        }
        assert!(matches!(flat.eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(flat.eval(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn eval_at_interior_knot_uses_right_segment() {
        // Deliberately discontinuous: left segment ends at 1, right starts at 5.
        let c = scalar(unit(2), 1, &[0.0, 1.0, 5.0, 6.0]);
        assert_eq!(c.eval(0.5).unwrap()[0], 5.0);
        assert_eq!(c.eval(1.0).unwrap()[0], 6.0);
        assert_eq!(c.eval(0.0).unwrap()[0], 0.0);
    }

    #[test]
    fn derivative_examples() {
        let ramp = scalar(unit(1), 1, &[0.0, 1.0]);
        let d = ramp.derivative().unwrap();
        assert_eq!(d.degree(), 0);
        assert_eq!(d.coeffs(), &[1.0]);

        let two = scalar(Knots::uniform(0.0, 2.0, 2).unwrap(), 1, &[0.0, 1.0, 1.0, 2.0]);
        let d = two.derivative().unwrap();
        assert_eq!(d.coeffs(), &[1.0, 1.0]);

        let flat = CompositeBernstein::constant(unit(2), 3, &[4.0]).unwrap();
        assert!(flat.derivative().unwrap().coeffs().iter().all(|v| *v == 0.0));

        assert!(matches!(d.derivative(), Err(Error::Degree(_))));
    }

    #[test]
    fn integral_examples() {
        let c = CompositeBernstein::constant(Knots::uniform(0.0, 3.0, 2).unwrap(), 2, &[1.5])
            .unwrap();
        assert_abs_diff_eq!(c.integral()[0], 4.5, epsilon = 1e-14);
        let ramp = scalar(unit(1), 1, &[0.0, 1.0]);
        assert_abs_diff_eq!(ramp.integral()[0], 0.5, epsilon = 1e-15);
        let up = ramp.elevate(7).unwrap();
        assert_abs_diff_eq!(up.integral()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn elevate_examples() {
        let ramp = scalar(unit(1), 1, &[0.0, 1.0]);
        let up = ramp.elevate(2).unwrap();
        assert_eq!(up.coeffs(), &[0.0, 0.5, 1.0]);
        assert!(matches!(ramp.elevate(1), Err(Error::Degree(_))));
        let flat = CompositeBernstein::constant(unit(2), 3, &[7.0]).unwrap();
        assert!(flat
            .elevate(9)
            .unwrap()
            .coeffs()
            .iter()
            .all(|v| (v - 7.0).abs() < 1e-13));
    }

    #[test]
    fn elevation_matrix_columns_sum_to_one() {
        let e = ElevationMatrix::new(4, 11).unwrap();
        for col in e.entries().columns() {
            assert_abs_diff_eq!(col.sum(), 1.0, epsilon = 1e-13);
            assert!(col.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn product_examples() {
        let t = scalar(unit(1), 1, &[0.0, 1.0]);
        assert_eq!(t.product(&t).unwrap().coeffs(), &[0.0, 0.0, 1.0]);
        let two = CompositeBernstein::constant(unit(1), 0, &[2.0]).unwrap();
        let c = scalar(unit(1), 3, &[1.0, -2.0, 0.5, 3.0]);
        let p = two.product(&c).unwrap();
        assert_eq!(p.coeffs(), &[2.0, -4.0, 1.0, 6.0]);
        let other = scalar(Knots::uniform(0.0, 2.0, 1).unwrap(), 1, &[0.0, 1.0]);
        assert!(matches!(t.product(&other), Err(Error::Alignment(_))));
    }

    #[test]
    fn coeff_bounds_examples() {
        let c = scalar(unit(1), 2, &[0.0, 1.0, 0.0]);
        assert_eq!(c.coeff_bounds(), vec![(0.0, 1.0)]);
        let flat = CompositeBernstein::constant(unit(1), 2, &[3.0]).unwrap();
        assert_eq!(flat.coeff_bounds(), vec![(3.0, 3.0)]);
        let up = c.elevate(8).unwrap();
        let (lo, hi) = up.coeff_bounds()[0];
        assert!(lo >= 0.0 && hi <= 1.0 && hi < 1.0);
    }

    #[test]
    fn continuity_residual_examples() {
        let c = scalar(unit(2), 1, &[0.0, 1.0, 1.1, 2.0]);
        let r = c.knot_continuity_residual();
        assert_eq!(r.len(), 1);
        assert_abs_diff_eq!(r[0][0], -0.1, epsilon = 1e-15);
        let shifted = c.translate(&[3.0]).unwrap();
        assert_abs_diff_eq!(shifted.knot_continuity_residual()[0][0], -0.1, epsilon = 1e-14);
        let single = scalar(unit(1), 1, &[0.0, 1.0]);
        assert!(single.knot_continuity_residual().is_empty());
    }

    #[test]
    fn collocation_derivative_matches_elevated_derivative() {
        let c = scalar(Knots::new(vec![0.0, 0.7]).unwrap(), 4, &[0.3, -1.0, 2.0, 0.5, 1.0]);
        let expected = c.derivative().unwrap().elevate(4).unwrap();
        let d = collocation_derivative_matrix(4, 0.7).unwrap();
        for j in 0..5 {
            let v: f64 = (0..5).map(|i| c.coeffs()[i] * d[[i, j]]).sum();
            assert_abs_diff_eq!(v, expected.coeffs()[j], epsilon = 1e-12);
        }
        let lin = collocation_derivative_matrix(1, 2.0).unwrap();
        assert_eq!(lin[[0, 0]], -0.5);
        assert_eq!(lin[[1, 1]], 0.5);
    }

    #[test]
    fn text_round_trip() {
        let c = CompositeBernstein::new(
            Knots::new(vec![0.0, 0.25, 1.0]).unwrap(),
            2,
            2,
            (0..12).map(|i| (i as f64).sqrt() / 3.0).collect(),
        )
        .unwrap();
        let text = c.to_text();
        assert!(text.starts_with("CBP 2 2 2 "));
        assert_eq!(CompositeBernstein::from_text(&text).unwrap(), c);
        assert!(CompositeBernstein::from_text("CBP 1 1").is_err());
    }
}
