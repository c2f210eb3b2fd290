//! Shortest planar path around a single disc: either the straight segment
//! or a tangent, arc, tangent path hugging the disc.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSegment {
    Line {
        p: [f64; 2],
        q: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        angle_start: f64,
        /// Signed sweep, positive counter-clockwise.
        sweep: f64,
    },
}

impl PathSegment {
    pub fn length(&self) -> f64 {
        match self {
            PathSegment::Line { p, q } => dist(*p, *q),
            PathSegment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn start(&self) -> [f64; 2] {
        self.point(0.0)
    }

    pub fn end(&self) -> [f64; 2] {
        self.point(self.length())
    }

    /// Point at arc length `s` from the segment start.
    pub fn point(&self, s: f64) -> [f64; 2] {
        match *self {
            PathSegment::Line { p, q } => {
                let l = dist(p, q);
                if l == 0.0 {
                    return p;
                }
                let f = s / l;
                [p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])]
            }
            PathSegment::Arc {
                center,
                radius,
                angle_start,
                sweep,
            } => {
                let ang = angle_start + sweep.signum() * s / radius;
                [center[0] + radius * ang.cos(), center[1] + radius * ang.sin()]
            }
        }
    }

    /// Unit tangent at arc length `s`.
    pub fn direction(&self, s: f64) -> [f64; 2] {
        match *self {
            PathSegment::Line { p, q } => {
                let l = dist(p, q);
                if l == 0.0 {
                    return [0.0, 0.0];
                }
                [(q[0] - p[0]) / l, (q[1] - p[1]) / l]
            }
            PathSegment::Arc {
                radius,
                angle_start,
                sweep,
                ..
            } => {
                let sg = sweep.signum();
                let ang = angle_start + sg * s / radius;
                [-sg * ang.sin(), sg * ang.cos()]
            }
        }
    }
}

/// Which way the path passes the obstacle, relative to the start-goal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Obstacle passed on the right (path bends left).
    Upper,
    Lower,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentArcPath {
    pub segments: Vec<PathSegment>,
    pub total_length: f64,
    pub side: Side,
}

impl TangentArcPath {
    /// Cumulative arc length at each segment boundary, starting at 0.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut acc = 0.0;
        for seg in &self.segments {
            acc += seg.length();
            out.push(acc);
        }
        out
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let mut rest = s.clamp(0.0, self.total_length);
        for (i, seg) in self.segments.iter().enumerate() {
            let l = seg.length();
            if rest <= l || i + 1 == self.segments.len() {
                return (i, rest.min(l));
            }
            rest -= l;
        }
        (0, 0.0)
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let (i, local) = self.locate(s);
        self.segments[i].point(local)
    }

    pub fn direction_at(&self, s: f64) -> [f64; 2] {
        let (i, local) = self.locate(s);
        self.segments[i].direction(local)
    }

    pub fn start(&self) -> [f64; 2] {
        self.segments[0].start()
    }

    pub fn end(&self) -> [f64; 2] {
        self.segments[self.segments.len() - 1].end()
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance from `c` to the closed segment `p q`.
pub fn segment_distance(p: [f64; 2], q: [f64; 2], c: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    if l2 == 0.0 {
        return dist(p, c);
    }
    let t = (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / l2).clamp(0.0, 1.0);
    dist([p[0] + t * d[0], p[1] + t * d[1]], c)
}

/// Shortest path from `start` to `goal` staying outside the open disc
/// of `radius` around `center`.
pub fn solve_obstacle_path(
    start: [f64; 2],
    goal: [f64; 2],
    center: [f64; 2],
    radius: f64,
) -> Result<TangentArcPath> {
    if !(radius > 0.0) {
        return Err(Error::Parameter("obstacle radius must be positive".into()));
    }
    let ds = dist(start, center);
    let dg = dist(goal, center);
    if ds < radius || dg < radius {
        return Err(Error::Parameter(format!(
            "start ({ds:.3} from centre) or goal ({dg:.3} from centre) inside radius {radius}"
        )));
    }
    if segment_distance(start, goal, center) >= radius {
        let seg = PathSegment::Line { p: start, q: goal };
        return Ok(TangentArcPath {
            total_length: seg.length(),
            segments: vec![seg],
            side: Side::None,
        });
    }

    let beta_s = (start[1] - center[1]).atan2(start[0] - center[0]);
    let beta_g = (goal[1] - center[1]).atan2(goal[0] - center[0]);
    let open_s = (radius / ds).min(1.0).acos();
    let open_g = (radius / dg).min(1.0).acos();
    let on_circle = |a: f64| [center[0] + radius * a.cos(), center[1] + radius * a.sin()];

    let mut best: Option<TangentArcPath> = None;
    for turn in [1.0f64, -1.0] {
        // turn = +1 travels counter-clockwise around the centre.
        let a_s = beta_s + turn * open_s;
        let a_g = beta_g - turn * open_g;
        let t1 = on_circle(a_s);
        let t2 = on_circle(a_g);
        let sweep = turn * (turn * (a_g - a_s)).rem_euclid(2.0 * PI);
        let segments = vec![
            PathSegment::Line { p: start, q: t1 },
            PathSegment::Arc {
                center,
                radius,
                angle_start: a_s,
                sweep,
            },
            PathSegment::Line { p: t2, q: goal },
        ];
        let total_length = segments.iter().map(PathSegment::length).sum();
        let heading = [goal[0] - start[0], goal[1] - start[1]];
        let mid = segments[1].point(segments[1].length() / 2.0);
        let cross = heading[0] * (mid[1] - start[1]) - heading[1] * (mid[0] - start[0]);
        let side = if cross >= 0.0 { Side::Upper } else { Side::Lower };
        let candidate = TangentArcPath {
            segments,
            total_length,
            side,
        };
        if best.as_ref().is_none_or(|b| candidate.total_length < b.total_length) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("two candidates evaluated"))
}

/// Shortest path length through a visibility graph whose vertices are the
/// endpoints and `nodes` points of a polygon circumscribing the disc.
///
/// Independent of [`solve_obstacle_path`]; used to cross-check it.
pub fn visibility_graph_length(
    start: [f64; 2],
    goal: [f64; 2],
    center: [f64; 2],
    radius: f64,
    nodes: usize,
) -> f64 {
    use petgraph::algo::dijkstra;
    use petgraph::graph::UnGraph;

    let outer = radius / (PI / nodes as f64).cos();
    let mut points = vec![start, goal];
    points.extend((0..nodes).map(|i| {
        let a = 2.0 * PI * i as f64 / nodes as f64;
        [center[0] + outer * a.cos(), center[1] + outer * a.sin()]
    }));
    let mut graph = UnGraph::<(), f64>::new_undirected();
    let ids: Vec<_> = points.iter().map(|_| graph.add_node(())).collect();
    let clear = |p: [f64; 2], q: [f64; 2]| segment_distance(p, q, center) >= radius * (1.0 - 1e-12);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if clear(points[i], points[j]) {
                graph.add_edge(ids[i], ids[j], dist(points[i], points[j]));
            }
        }
    }
    let lengths = dijkstra(&graph, ids[0], Some(ids[1]), |e| *e.weight());
    lengths.get(&ids[1]).copied().unwrap_or(f64::INFINITY)
}
