//! Training records built from oracle solutions, and the dataset file format.
//!
//! A record's target is the token sequence of the oracle decision vector.
//! Brachistochrone tokens are `[x, y]`. Obstacle tokens are
//! `[x1, x2, u1, u2, tau]`, where `tau` on token `k < K` carries the knot
//! time `t_{k+1}` and is zero on the remaining tokens.

use std::io::{BufRead, Write};
use std::path::Path;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cbp::{fmt_f64, CompositeBernstein, Knots};
use crate::error::{Error, Result};
use crate::problems::{
    Constants, DecisionVector, ProblemInstance, ProblemKind, ThetaVector, TranscriptionConfig,
};

use super::obstacle::segment_distance;
use super::solution::oracle_solution;

/// Smallest knot spacing accepted when decoding predicted knot times.
pub const MIN_KNOT_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingRanges {
    Brachistochrone {
        theta1: [f64; 2],
        theta2: [f64; 2],
    },
    ObstacleAvoidance {
        /// Start and goal coordinates are drawn from `area x area`.
        area: [f64; 2],
        min_separation: f64,
        /// Largest perpendicular offset of the obstacle from the start-goal segment.
        max_offset: f64,
        /// Required gap between start/goal and the obstacle's edge.
        clearance: f64,
    },
}

impl SamplingRanges {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Brachistochrone => SamplingRanges::Brachistochrone {
                theta1: [0.5, 4.0],
                theta2: [0.5, 3.0],
            },
            ProblemKind::ObstacleAvoidance => SamplingRanges::ObstacleAvoidance {
                area: [0.0, 10.0],
                min_separation: 3.0,
                max_offset: 1.5,
                clearance: 0.5,
            },
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            SamplingRanges::Brachistochrone { .. } => ProblemKind::Brachistochrone,
            SamplingRanges::ObstacleAvoidance { .. } => ProblemKind::ObstacleAvoidance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        let valid = match self {
            SamplingRanges::Brachistochrone { theta1, theta2 } => {
                ok(theta1) && ok(theta2) && theta1[0] > 0.0 && theta2[0] > 0.0
            }
            SamplingRanges::ObstacleAvoidance {
                area,
                min_separation,
                max_offset,
                clearance,
            } => {
                ok(area)
                    && *min_separation >= 0.0
                    && *min_separation < (area[1] - area[0]) * std::f64::consts::SQRT_2
                    && *max_offset >= 0.0
                    && *clearance >= 0.0
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Configuration(format!("empty or invalid sampling ranges {self:?}")))
        }
    }

    /// One draw; `None` when the draw violates a geometric requirement.
    fn draw(&self, rng: &mut ChaCha8Rng, constants: &Constants) -> Option<Vec<f64>> {
        match *self {
            SamplingRanges::Brachistochrone { theta1, theta2 } => Some(vec![
                rng.gen_range(theta1[0]..theta1[1]),
                rng.gen_range(theta2[0]..theta2[1]),
            ]),
            SamplingRanges::ObstacleAvoidance {
                area,
                min_separation,
                max_offset,
                clearance,
            } => {
                let mut coord = || rng.gen_range(area[0]..area[1]);
                let start = [coord(), coord()];
                let goal = [coord(), coord()];
                let along: f64 = rng.gen_range(0.0..1.0);
                let offset = if max_offset > 0.0 {
                    rng.gen_range(-max_offset..max_offset)
                } else {
                    0.0
                };
                let dx = goal[0] - start[0];
                let dy = goal[1] - start[1];
                let len = dx.hypot(dy);
                if len < min_separation || len == 0.0 {
                    return None;
                }
                let perp = [-dy / len, dx / len];
                let center = [
                    start[0] + along * dx + offset * perp[0],
                    start[1] + along * dy + offset * perp[1],
                ];
                let keep_out = constants.radius() + clearance;
                let dist = |p: [f64; 2]| (p[0] - center[0]).hypot(p[1] - center[1]);
                if dist(start) < keep_out || dist(goal) < keep_out {
                    return None;
                }
                debug_assert!(segment_distance(start, goal, center) <= max_offset + 1e-12);
                Some(vec![start[0], start[1], goal[0], goal[1], center[0], center[1]])
            }
        }
    }
}

/// Values per output token.
pub fn token_dim(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Brachistochrone => 2,
        ProblemKind::ObstacleAvoidance => 5,
    }
}

/// Raw (unnormalized) tokens of a decision vector.
pub fn encode_tokens(z: &DecisionVector) -> Vec<Vec<f64>> {
    let mut tokens = z.stacked_points();
    if z.controls.is_some() {
        let knots = z.knots().values();
        for (i, tok) in tokens.iter_mut().enumerate() {
            tok.push(if i + 1 < knots.len() { knots[i + 1] } else { 0.0 });
        }
    }
    tokens
}

/// Inverse of [`encode_tokens`]. Predicted knot times are made strictly
/// increasing by enforcing [`MIN_KNOT_GAP`].
pub fn decode_tokens(instance: &ProblemInstance, tokens: &[Vec<f64>]) -> Result<DecisionVector> {
    let kind = instance.kind();
    let cfg = instance.config;
    if tokens.len() != cfg.num_points() || tokens.iter().any(|t| t.len() != token_dim(kind)) {
        return Err(Error::Shape(format!(
            "expected {} tokens of width {}, got {}",
            cfg.num_points(),
            token_dim(kind),
            tokens.len()
        )));
    }
    match kind {
        ProblemKind::Brachistochrone => {
            let states = CompositeBernstein::from_points(instance.fixed_knots()?, cfg.degree, tokens)?;
            DecisionVector::new(states, None)
        }
        ProblemKind::ObstacleAvoidance => {
            let mut t = vec![0.0];
            for tok in tokens.iter().take(cfg.segments) {
                let prev = t[t.len() - 1];
                t.push(tok[4].max(prev + MIN_KNOT_GAP));
            }
            let knots = Knots::new(t)?;
            let x: Vec<Vec<f64>> = tokens.iter().map(|tk| tk[0..2].to_vec()).collect();
            let u: Vec<Vec<f64>> = tokens.iter().map(|tk| tk[2..4].to_vec()).collect();
            DecisionVector::new(
                CompositeBernstein::from_points(knots.clone(), cfg.degree, &x)?,
                Some(CompositeBernstein::from_points(knots, cfg.degree, &u)?),
            )
        }
    }
}

/// Per-channel min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    /// Ranges over `rows`; `used(row, channel)` selects which entries count.
    pub fn fit<'a, I, F>(channels: usize, rows: I, used: F) -> Self
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
        F: Fn(usize, usize) -> bool,
    {
        let mut min = vec![f64::INFINITY; channels];
        let mut max = vec![f64::NEG_INFINITY; channels];
        for (i, row) in rows {
            for c in 0..channels {
                if used(i, c) {
                    min[c] = min[c].min(row[c]);
                    max[c] = max[c].max(row[c]);
                }
            }
        }
        for c in 0..channels {
            if !min[c].is_finite() {
                min[c] = 0.0;
                max[c] = 1.0;
            }
        }
        Self { min, max }
    }

    fn span(&self, c: usize) -> f64 {
        let s = self.max[c] - self.min[c];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn normalize(&self, c: usize, v: f64) -> f64 {
        (v - self.min[c]) / self.span(c)
    }

    pub fn denormalize(&self, c: usize, v: f64) -> f64 {
        self.min[c] + v * self.span(c)
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, v)| self.normalize(c, *v)).collect()
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, v)| self.denormalize(c, *v)).collect()
    }
}

/// Whether channel `c` of token `i` carries data (false for unused knot slots).
pub fn channel_used(kind: ProblemKind, segments: usize, i: usize, c: usize) -> bool {
    !(kind == ProblemKind::ObstacleAvoidance && c == 4 && i >= segments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: ProblemKind,
    #[serde(rename = "K")]
    pub segments: usize,
    #[serde(rename = "N")]
    pub degree: usize,
    #[serde(rename = "delta_P")]
    pub delta_p: f64,
    pub constants: Constants,
    pub seed: u64,
    pub ranges: SamplingRanges,
    pub count: usize,
    pub rejections: usize,
    pub token_dim: usize,
    /// Scaling of the model inputs.
    pub theta_norm: Normalization,
    /// Scaling of the target tokens.
    pub target_norm: Normalization,
    pub max_fit_error: f64,
}

impl DatasetMeta {
    pub fn config(&self) -> TranscriptionConfig {
        TranscriptionConfig {
            segments: self.segments,
            degree: self.degree,
            delta_p: self.delta_p,
        }
    }

    pub fn instance(&self, theta: &ThetaVector) -> Result<ProblemInstance> {
        ProblemInstance::new(theta.clone(), self.config(), self.constants)
    }

    pub fn num_tokens(&self) -> usize {
        self.config().num_points()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub theta: ThetaVector,
    /// Normalized tokens, flattened token-major.
    pub target: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn tokens(&self, meta: &DatasetMeta) -> Vec<Vec<f64>> {
        self.target.chunks_exact(meta.token_dim).map(<[f64]>::to_vec).collect()
    }

    /// Target tokens mapped back to problem units.
    pub fn denormalized(&self, meta: &DatasetMeta) -> Vec<Vec<f64>> {
        self.target
            .chunks_exact(meta.token_dim)
            .map(|t| meta.target_norm.denormalize_row(t))
            .collect()
    }

    pub fn decision(&self, meta: &DatasetMeta) -> Result<DecisionVector> {
        decode_tokens(&meta.instance(&self.theta)?, &self.denormalized(meta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub kind: ProblemKind,
    pub count: usize,
    pub seed: u64,
    pub config: TranscriptionConfig,
    pub constants: Constants,
    pub ranges: SamplingRanges,
    pub workers: usize,
}

impl BuildOptions {
    pub fn new(kind: ProblemKind, count: usize, seed: u64) -> Self {
        Self {
            kind,
            count,
            seed,
            config: TranscriptionConfig::default(),
            constants: Constants::default(),
            ranges: SamplingRanges::default_for(kind),
            workers: 1,
        }
    }
}

/// Draws `count` parameter vectors; returns them with the number of rejected draws.
pub fn sample_thetas(
    ranges: &SamplingRanges,
    constants: &Constants,
    count: usize,
    seed: u64,
) -> Result<(Vec<ThetaVector>, usize)> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut rejections = 0usize;
    while out.len() < count {
        match ranges.draw(&mut rng, constants) {
            Some(v) => out.push(ThetaVector::new(ranges.kind(), v)?),
            None => {
                rejections += 1;
                if rejections > 1000 * (count + 1) {
                    return Err(Error::Configuration(
                        "sampling ranges reject almost every draw".into(),
                    ));
                }
            }
        }
    }
    Ok((out, rejections))
}

/// Raw oracle tokens and fit error of one parameter vector.
fn oracle_tokens(theta: &ThetaVector, opts: &BuildOptions) -> Result<(Vec<Vec<f64>>, f64)> {
    let instance = ProblemInstance::new(theta.clone(), opts.config, opts.constants)?;
    let sol = oracle_solution(&instance)?;
    Ok((encode_tokens(&sol.z), sol.fit_error))
}

pub fn build_dataset(opts: &BuildOptions) -> Result<Dataset> {
    if opts.count == 0 {
        return Err(Error::Argument("count must be at least 1".into()));
    }
    if opts.ranges.kind() != opts.kind {
        return Err(Error::Configuration("sampling ranges do not match the problem kind".into()));
    }
    opts.config.validate(opts.kind)?;
    opts.constants.validate()?;
    let (thetas, rejections) = sample_thetas(&opts.ranges, &opts.constants, opts.count, opts.seed)?;
    if rejections > 0 {
        info!("rejected {rejections} parameter draws while sampling {}", opts.count);
    }

    // Records are independent; workers fill disjoint chunks so output order
    // matches the draw order regardless of the worker count.
    let workers = opts.workers.clamp(1, thetas.len());
    let chunk = thetas.len().div_ceil(workers);
    let mut raw: Vec<Result<(Vec<Vec<f64>>, f64)>> = Vec::with_capacity(thetas.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = thetas
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|t| oracle_tokens(t, opts)).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            raw.extend(h.join().expect("dataset worker panicked"));
        }
    });
    let raw: Vec<(Vec<Vec<f64>>, f64)> = raw.into_iter().collect::<Result<_>>()?;

    let kind = opts.kind;
    let dim = token_dim(kind);
    let segments = opts.config.segments;
    let target_norm = Normalization::fit(
        dim,
        raw.iter().flat_map(|(tokens, _)| tokens.iter().enumerate().map(|(i, t)| (i, t.as_slice()))),
        |i, c| channel_used(kind, segments, i, c),
    );
    let theta_norm = Normalization::fit(
        kind.theta_len(),
        thetas.iter().map(|t| (0, t.values())),
        |_, _| true,
    );
    let max_fit_error = raw.iter().map(|(_, e)| *e).fold(0.0, f64::max);

    let records = thetas
        .into_iter()
        .zip(&raw)
        .map(|(theta, (tokens, _))| {
            let target = tokens
                .iter()
                .enumerate()
                .flat_map(|(i, tok)| {
                    let norm = &target_norm;
                    tok.iter().enumerate().map(move |(c, v)| {
                        if channel_used(kind, segments, i, c) {
                            norm.normalize(c, *v)
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            TrajectoryRecord { theta, target }
        })
        .collect();

    Ok(Dataset {
        meta: DatasetMeta {
            kind,
            segments,
            degree: opts.config.degree,
            delta_p: opts.config.delta_p,
            constants: opts.constants,
            seed: opts.seed,
            ranges: opts.ranges,
            count: opts.count,
            rejections,
            token_dim: dim,
            theta_norm,
            target_norm,
            max_fit_error,
        },
        records,
    })
}

impl Dataset {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", serde_json::to_string_pretty(&self.meta)?)?;
        writeln!(w, "---")?;
        for r in &self.records {
            let theta: Vec<String> = r.theta.values().iter().map(|v| fmt_f64(*v)).collect();
            let target: Vec<String> = r.target.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{} | {}", theta.join(" "), target.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut header = String::new();
        let mut lines = r.lines();
        for line in lines.by_ref() {
            let line = line?;
            if line == "---" {
                break;
            }
            header.push_str(&line);
            header.push('\n');
        }
        let meta: DatasetMeta = serde_json::from_str(&header)?;
        let width = meta.num_tokens() * meta.token_dim;
        let mut records = Vec::with_capacity(meta.count);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once('|')
                .ok_or_else(|| Error::Parse(format!("record {n}: missing '|' separator")))?;
            let parse = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|e| Error::Parse(format!("record {n}: bad value {v:?}: {e}")))
                    })
                    .collect()
            };
            let theta = ThetaVector::new(meta.kind, parse(a)?)?;
            let target = parse(b)?;
            if target.len() != width {
                return Err(Error::Parse(format!(
                    "record {n}: expected {width} target values, got {}",
                    target.len()
                )));
            }
            records.push(TrajectoryRecord { theta, target });
        }
        if records.len() != meta.count {
            return Err(Error::Parse(format!(
                "header announces {} records, file has {}",
                meta.count,
                records.len()
            )));
        }
        Ok(Self { meta, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
