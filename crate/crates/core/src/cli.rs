//! Command-line front end.
//!
//! Every command takes flat `key=value` overrides on top of its defaults,
//! echoes the effective configuration and prints one summary line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::oracles::dataset::{build_dataset, BuildOptions, Dataset};
use crate::planner::{self, Fallback, Obstacle, Scenario};
use crate::problems::{ProblemInstance, ProblemKind, ThetaVector};
use crate::seq2seq::{
    load_checkpoint, save_checkpoint, train, write_training_log, HyperParams, ModelMeta, ModelState,
};
use crate::verify::{certify, counterexample_scan, default_max_elevation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    GenData,
    Train,
    Infer,
    Verify,
    Plan,
    Eval,
}

#[derive(Debug, Parser)]
#[command(name = "cbpnet", about = "Bernstein trajectory prediction, certification and planning")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Overrides as key=value; run with `help=1` to list keys and defaults.
    pub overrides: Vec<String>,
}

/// Keys, defaults and descriptions for one command.
fn defaults(command: Command) -> Vec<(&'static str, &'static str, &'static str)> {
    let hp = [
        ("d_emb", "64", "embedding width"),
        ("n_heads", "4", "attention heads"),
        ("n_layers", "1", "encoder and decoder layers"),
        ("d_ff", "256", "feed-forward width"),
        ("dropout", "0.1", "dropout rate"),
        ("lr", "4e-4", "Adam learning rate"),
        ("batch_size", "8", "records per update"),
        ("epochs", "30", "training epochs"),
    ];
    match command {
        Command::GenData => vec![
            ("kind", "brachistochrone", "brachistochrone or obstacle_avoidance"),
            ("count", "1000", "records to generate"),
            ("seed", "0", "sampling seed"),
            ("K", "3", "segments"),
            ("N", "10", "degree"),
            ("delta_P", "1e-2", "dynamics tolerance"),
            ("workers", "1", "generation threads"),
            ("out", "dataset.txt", "dataset file"),
        ],
        Command::Train => {
            let mut v = vec![
                ("data", "dataset.txt", "training dataset"),
                ("out", "model.ckpt", "checkpoint file"),
                ("log", "training_log.csv", "per-epoch loss CSV"),
                ("seed", "0", "initialization, shuffling and dropout seed"),
            ];
            v.extend(hp);
            v
        }
        Command::Infer => vec![
            ("model", "model.ckpt", "checkpoint file"),
            ("theta", "", "comma-separated problem parameters"),
            ("out", "curve.txt", "instance and predicted curves"),
        ],
        Command::Verify => vec![
            ("curve", "curve.txt", "instance and curves written by infer"),
            ("max_elevation", "0", "largest elevated degree; 0 means 6N"),
            ("tol", "1e-6", "boundary tolerance"),
            ("samples", "10000", "samples for the counterexample scan"),
            ("out", "certificate.json", "certificate file"),
        ],
        Command::Plan => vec![
            ("model", "model.ckpt", "obstacle-avoidance checkpoint"),
            ("start", "0,5", "start position"),
            ("destination", "10,5", "destination"),
            ("obstacles", "2.5,5.2,1;5.5,4.7,1;8.5,5.3,1", "x,y,r triples separated by ';' or 'none'"),
            ("sensing", "4", "sensing radius"),
            ("horizon", "3", "horizon distance"),
            ("tolerance", "0.3", "goal tolerance"),
            ("out", "plan", "output directory"),
        ],
        Command::Eval => vec![
            ("model", "model.ckpt", "checkpoint file"),
            ("data", "heldout.txt", "held-out dataset"),
            ("out", "metrics.csv", "metrics CSV"),
        ],
    }
}

/// Effective configuration of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn new(command: Command, overrides: &[String]) -> Result<Self> {
        let table = defaults(command);
        let mut values: BTreeMap<&'static str, String> =
            table.iter().map(|(k, v, _)| (*k, v.to_string())).collect();
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("expected key=value, got '{item}'")))?;
            match table.iter().find(|(k, _, _)| *k == key) {
                Some((k, _, _)) => {
                    values.insert(k, value.to_string());
                }
                None => {
                    let valid: Vec<&str> = table.iter().map(|(k, _, _)| *k).collect();
                    return Err(Error::Argument(format!(
                        "unknown key '{key}'; valid keys: {}",
                        valid.join(", ")
                    )));
                }
            }
        }
        Ok(Self { command, values })
    }

    /// `key=value` pairs of every effective parameter, in key order.
    pub fn echo(&self) -> String {
        let name = self.command.to_possible_value().expect("named command");
        let mut out = format!("config: command={}", name.get_name());
        for (k, v) in &self.values {
            write!(out, " {k}={v}").expect("string write");
        }
        out
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key from defaults table")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Argument(format!("cannot parse {key}={v}")))
    }

    fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(key, self.raw(key))
    }

    fn point(&self, key: &str) -> Result<[f64; 2]> {
        match self.list(key)?[..] {
            [x, y] => Ok([x, y]),
            _ => Err(Error::Argument(format!("{key} needs two comma-separated numbers"))),
        }
    }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("cannot parse '{s}' in {key}")))
        })
        .collect()
}

fn parse_obstacles(text: &str) -> Result<Vec<Obstacle>> {
    if text.trim() == "none" || text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|triple| match parse_list("obstacles", triple)?[..] {
            [x, y, r] => Ok(Obstacle {
                center: [x, y],
                radius: r,
            }),
            _ => Err(Error::Argument(format!("obstacle '{triple}' is not x,y,r"))),
        })
        .collect()
}

/// Parses `args` (without the program name), runs the command and returns
/// its summary line.
pub fn run_cli<I, S>(args: I) -> Result<String>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(
        std::iter::once("cbpnet".into()).chain(args.into_iter().map(Into::into)),
    ) {
        Ok(cli) => cli,
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp => return Ok(e.to_string()),
        Err(e) => return Err(Error::Argument(e.to_string())),
    };
    if cli.overrides.iter().any(|o| o == "help=1") {
        let mut out = String::new();
        for (k, v, help) in defaults(cli.command) {
            writeln!(out, "  {k}={v}\t{help}").expect("string write");
        }
        return Ok(out);
    }
    let config = RunConfig::new(cli.command, &cli.overrides)?;
    println!("{}", config.echo());
    execute(&config)
}

pub fn execute(config: &RunConfig) -> Result<String> {
    match config.command {
        Command::GenData => cmd_gen_data(config),
        Command::Train => cmd_train(config),
        Command::Infer => cmd_infer(config),
        Command::Verify => cmd_verify(config),
        Command::Plan => cmd_plan(config),
        Command::Eval => cmd_eval(config),
    }
}

fn cmd_gen_data(config: &RunConfig) -> Result<String> {
    let kind = ProblemKind::parse(config.raw("kind"))?;
    let count: usize = config.parse("count")?;
    let mut opts = BuildOptions::new(kind, count, config.parse("seed")?);
    opts.config.segments = config.parse("K")?;
    opts.config.degree = config.parse("N")?;
    opts.config.delta_p = config.parse("delta_P")?;
    opts.workers = config.parse("workers")?;
    let clock = Instant::now();
    let ds = build_dataset(&opts)?;
    let seconds = clock.elapsed().as_secs_f64();
    ds.save(&config.path("out"))?;
    Ok(format!(
        "wrote {} records to {} ({} rejections, {seconds:.2} s)",
        ds.records.len(),
        config.raw("out"),
        ds.meta.rejections
    ))
}

fn cmd_train(config: &RunConfig) -> Result<String> {
    let ds = Dataset::load(&config.path("data"))?;
    let hp = HyperParams {
        d_emb: config.parse("d_emb")?,
        n_heads: config.parse("n_heads")?,
        n_layers: config.parse("n_layers")?,
        d_ff: config.parse("d_ff")?,
        dropout_rate: config.parse("dropout")?,
        learning_rate: config.parse("lr")?,
        batch_size: config.parse("batch_size")?,
        epochs: config.parse("epochs")?,
        seed: config.parse("seed")?,
    };
    let mut model = ModelState::new(hp, ModelMeta::from_dataset(&ds.meta))?;
    let clock = Instant::now();
    let history = train(&mut model, &ds)?;
    save_checkpoint(&model, &config.path("out"))?;
    write_training_log(&config.path("log"), &history)?;
    Ok(format!(
        "trained {} epochs on {} records, final loss {:.6e}, {:.1} s, checkpoint {}",
        history.len(),
        ds.records.len(),
        model.final_loss.unwrap_or(f64::NAN),
        clock.elapsed().as_secs_f64(),
        config.raw("out")
    ))
}

fn cmd_infer(config: &RunConfig) -> Result<String> {
    let model = load_checkpoint(&config.path("model"))?;
    let values = config.list("theta")?;
    if values.is_empty() {
        return Err(Error::Argument("theta is required, e.g. theta=2,1".into()));
    }
    let theta = ThetaVector::new(model.meta.kind, values)?;
    let clock = Instant::now();
    let z = model.predict(&theta)?;
    let seconds = clock.elapsed().as_secs_f64();
    let instance = model.instance(&theta)?;
    for p in z.stacked_points() {
        let row: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
        println!("{}", row.join(" "));
    }
    std::fs::write(config.path("out"), instance.warm_start_export(&z))?;
    Ok(format!(
        "predicted {} control points in {seconds:.4} s, written to {}",
        z.stacked_points().len(),
        config.raw("out")
    ))
}

fn cmd_verify(config: &RunConfig) -> Result<String> {
    let text = std::fs::read_to_string(config.path("curve"))?;
    let (instance, z) = ProblemInstance::warm_start_import(&text)?;
    let requested: usize = config.parse("max_elevation")?;
    let cap = if requested == 0 {
        default_max_elevation(&instance)
    } else {
        requested
    };
    let cert = certify(&instance, &z, cap, config.parse("tol")?)?;
    std::fs::write(config.path("out"), cert.to_json())?;
    let scan = counterexample_scan(&instance, &z, config.parse("samples")?)?;
    let status = serde_json::to_string(&cert.status)?;
    let scan_text = match scan {
        Some(c) => format!("counterexample {} = {:.3e} at t = {:.4}", c.constraint, c.value, c.t),
        None => "no sampled violation".into(),
    };
    Ok(format!(
        "status {} ({scan_text}), {:.2e} s, certificate {}",
        status.trim_matches('"'),
        cert.elapsed_seconds,
        config.raw("out")
    ))
}

fn cmd_plan(config: &RunConfig) -> Result<String> {
    let model = load_checkpoint(&config.path("model"))?;
    let scenario = Scenario {
        start: config.point("start")?,
        destination: config.point("destination")?,
        obstacles: parse_obstacles(config.raw("obstacles"))?,
        sensing_radius: config.parse("sensing")?,
        horizon_distance: config.parse("horizon")?,
        goal_tolerance: config.parse("tolerance")?,
        constants: model.meta.constants,
    };
    let log = planner::run(&scenario, &model)?;
    log.write_to_dir(&config.path("out"))?;
    let count = |f: Fallback| log.iterations.iter().filter(|it| it.fallback_used == f).count();
    let clearance = log.min_squared_clearance(&log.handled_obstacles(), 10_000)?;
    let summary = format!(
        "{} iterations (fallback none {}, refined {}, oracle {}), travel time {:.3} s, min squared clearance {:.4}, log in {}",
        log.iterations.len(),
        count(Fallback::None),
        count(Fallback::Refined),
        count(Fallback::Oracle),
        log.total_time,
        clearance,
        config.raw("out")
    );
    if !log.reached_goal {
        return Err(Error::NonConvergence(format!("goal not reached: {summary}")));
    }
    Ok(format!("reached goal in {summary}"))
}

/// Metrics table with header `metric,value,unit`.
pub fn metrics_csv(rows: &[(&str, f64, &str)]) -> String {
    let mut out = String::from("metric,value,unit\n");
    for (m, v, u) in rows {
        writeln!(out, "{m},{v:e},{u}").expect("string write");
    }
    out
}

fn cmd_eval(config: &RunConfig) -> Result<String> {
    let model = load_checkpoint(&config.path("model"))?;
    let ds = Dataset::load(&config.path("data"))?;
    if !model.meta.matches(&ds.meta) {
        return Err(Error::Configuration(format!(
            "checkpoint is for {} K={} N={}, dataset is {} K={} N={}",
            model.meta.kind.name(),
            model.meta.segments,
            model.meta.degree,
            ds.meta.kind.name(),
            ds.meta.segments,
            ds.meta.degree
        )));
    }
    let thetas: Vec<ThetaVector> = ds.records.iter().map(|r| r.theta.clone()).collect();
    let report = evaluate(&thetas, |t| model.instance(t), |t| model.predict(t))?;
    let loss = model.final_loss.unwrap_or(f64::NAN);
    let csv = metrics_csv(&[
        ("trajectory_mse", report.trajectory_mse, "m^2"),
        ("cost_violation", report.cost_violation_percent, "percent"),
        ("final_training_loss", loss, "sum_sq_per_record"),
        ("inference_time", report.inference_seconds, "s"),
        ("samples", report.count as f64, "count"),
        ("cost_failures", report.cost_failures as f64, "count"),
    ]);
    print!("{csv}");
    write_file(&config.path("out"), &csv)?;
    Ok(format!(
        "evaluated {} samples: mse {:.3e}, cost violation {:.2}%, loss {:.3e}, inference {:.3e} s",
        report.count, report.trajectory_mse, report.cost_violation_percent, loss, report.inference_seconds
    ))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
