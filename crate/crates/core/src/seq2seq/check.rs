//! Finite-difference check of the reverse pass.

use super::layers::{blocks_mut, named_blocks};
use super::train::accumulate;
use super::ModelState;
use crate::error::Result;

const GRADIENT_FLOOR: f64 = 1e-6;

/// Per-block relative error `|g - g_fd| / max(|g|, |g_fd|, 1e-6)`
/// (Euclidean norms) between the analytic gradient of one item's loss and
/// central differences with step `h`. Dropout is off.
///
/// The floor matters for the attention key bias, whose gradient is exactly
/// zero because softmax ignores a shift shared by a whole row.
pub fn gradient_check(
    model: &ModelState,
    theta: &[f64],
    target: &[Vec<f64>],
    h: f64,
) -> Result<Vec<(String, f64)>> {
    let mut grads = model.params.zeros_like();
    accumulate(model, theta, target, None, &mut grads)?;
    let analytic: Vec<Vec<f64>> = named_blocks(&grads)
        .into_iter()
        .map(|(_, b)| b.iter().copied().collect())
        .collect();
    let names: Vec<String> = named_blocks(&model.params).into_iter().map(|(n, _)| n).collect();

    let mut probe = model.clone();
    let mut scratch = model.params.zeros_like();
    let mut out = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = analytic[b].len();
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut f2 = 0.0;
        for i in 0..len {
            let original = entry(&mut probe, b, i, None);
            entry(&mut probe, b, i, Some(original + h));
            let up = accumulate(&probe, theta, target, None, &mut scratch)?;
            entry(&mut probe, b, i, Some(original - h));
            let down = accumulate(&probe, theta, target, None, &mut scratch)?;
            entry(&mut probe, b, i, Some(original));
            let fd = (up - down) / (2.0 * h);
            let g = analytic[b][i];
            diff2 += (g - fd) * (g - fd);
            a2 += g * g;
            f2 += fd * fd;
        }
        let scale = a2.sqrt().max(f2.sqrt()).max(GRADIENT_FLOOR);
        out.push((name, diff2.sqrt() / scale));
    }
    Ok(out)
}

/// Reads entry `i` of block `b`, optionally overwriting it first.
fn entry(model: &mut ModelState, b: usize, i: usize, set: Option<f64>) -> f64 {
    let mut blocks = blocks_mut(&mut model.params);
    let cell = blocks[b].iter_mut().nth(i).expect("entry in range");
    if let Some(v) = set {
        *cell = v;
    }
    *cell
}
