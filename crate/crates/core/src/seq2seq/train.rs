//! Teacher-forcing training with Adam.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{blocks_mut, Params};
use super::network::{squared_error, token_matrix, Network, Pass};
use super::ModelState;
use crate::error::{Error, Result};
use crate::oracles::dataset::Dataset;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Network,
    pub v: Network,
    pub step: u64,
}

impl Adam {
    pub fn new(params: &Network) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut Network, grads: &mut Network, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let p = blocks_mut(params);
        let g = blocks_mut(grads);
        let m = blocks_mut(&mut self.m);
        let v = blocks_mut(&mut self.v);
        for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
            ndarray::Zip::from(p)
                .and(&*g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }
}

/// Batch loss: sum over items of the squared token errors.
pub fn loss(predicted: &[Array2<f64>], target: &[Array2<f64>]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    predicted
        .iter()
        .zip(target)
        .map(|(p, t)| squared_error(p, t))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    /// Mean over records of the per-record squared error.
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

/// One teacher-forced item: loss and accumulated gradients.
pub(crate) fn accumulate(
    model: &ModelState,
    theta: &[f64],
    target: &[Vec<f64>],
    dropout_rng: Option<&mut ChaCha8Rng>,
    grads: &mut Network,
) -> Result<f64> {
    let mut pass = Pass {
        heads: model.hp.n_heads,
        dropout: model.hp.dropout_rate,
        rng: dropout_rng,
    };
    let (memory, enc) = model.params.encode(theta, &mut pass)?;
    let inputs = &target[..target.len() - 1];
    let dec = model.params.decode(&memory, inputs, &mut pass)?;
    let t = token_matrix(target);
    let out = dec.output();
    let value = squared_error(out, &t)?;
    let d_out = (out - &t) * 2.0;
    model
        .params
        .backward(&enc, &dec, &d_out, model.hp.n_heads, grads)?;
    Ok(value)
}

/// Teacher-forcing training for `model.hp.epochs` epochs. On a non-finite
/// loss the parameters are restored to the end of the last finite epoch and
/// a numeric error is returned.
pub fn train(model: &mut ModelState, data: &Dataset) -> Result<Vec<EpochStat>> {
    if data.records.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if !model.meta.matches(&data.meta) {
        return Err(Error::Configuration(format!(
            "dataset ({}, K={}, N={}) does not match the model ({}, K={}, N={})",
            data.meta.kind.name(),
            data.meta.segments,
            data.meta.degree,
            model.meta.kind.name(),
            model.meta.segments,
            model.meta.degree
        )));
    }
    model.hp.validate()?;

    // Inputs and targets in the model's own scaling.
    let items: Vec<(Vec<f64>, Vec<Vec<f64>>)> = data
        .records
        .iter()
        .map(|r| {
            let theta = model.meta.theta_norm.normalize_row(r.theta.values());
            let target = r
                .target
                .chunks_exact(data.meta.token_dim)
                .map(|tok| {
                    let raw = data.meta.target_norm.denormalize_row(tok);
                    model.meta.target_norm.normalize_row(&raw)
                })
                .collect();
            (theta, target)
        })
        .collect();

    let mut order_rng = ChaCha8Rng::seed_from_u64(model.hp.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(model.hp.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut grads = model.params.zeros_like();
    let mut history = Vec::with_capacity(model.hp.epochs);
    let mut last_good = (model.params.clone(), model.adam.clone());

    for epoch in 1..=model.hp.epochs {
        let clock = Instant::now();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(model.hp.batch_size) {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (theta, target) = &items[i];
                batch_loss += accumulate(model, theta, target, Some(&mut dropout_rng), &mut grads)?;
            }
            if !batch_loss.is_finite() || !all_finite(&grads) {
                model.params = last_good.0;
                model.adam = last_good.1;
                return Err(Error::Numeric(format!(
                    "training diverged in epoch {epoch}; parameters restored to epoch {}",
                    epoch - 1
                )));
            }
            model
                .adam
                .update(&mut model.params, &mut grads, model.hp.learning_rate);
            total += batch_loss;
        }
        let stat = EpochStat {
            epoch,
            mean_loss: total / items.len() as f64,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: mean loss {:.6e} ({:.1} s)",
            stat.mean_loss, stat.wall_seconds
        );
        model.final_loss = Some(stat.mean_loss);
        history.push(stat);
        last_good = (model.params.clone(), model.adam.clone());
    }
    Ok(history)
}

fn all_finite(net: &Network) -> bool {
    let mut blocks = Vec::new();
    net.collect("", &mut blocks);
    blocks.iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
}

/// CSV with header `epoch,mean_loss,wall_seconds`.
pub fn write_training_log(path: &Path, history: &[EpochStat]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,mean_loss,wall_seconds")?;
    for s in history {
        writeln!(f, "{},{:e},{:.3}", s.epoch, s.mean_loss, s.wall_seconds)?;
    }
    f.flush()?;
    Ok(())
}
