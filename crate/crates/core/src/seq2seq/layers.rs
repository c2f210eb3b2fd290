//! Parameter blocks and the forward/backward passes of the individual layers.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform collection of named parameter matrices, used by the optimizer,
/// the checkpoint format and gradient checks.
pub trait Params {
    fn collect<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Array2<f64>)>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<f64>>);
}

impl Params for Array2<f64> {
    fn collect<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Array2<f64>)>) {
        out.push((name.to_string(), self));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<f64>>) {
        out.push(self);
    }
}

impl<T: Params> Params for Vec<T> {
    fn collect<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Array2<f64>)>) {
        for (i, item) in self.iter().enumerate() {
            item.collect(&format!("{name}.{i}"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<f64>>) {
        for item in self.iter_mut() {
            item.collect_mut(out);
        }
    }
}

pub(crate) fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

macro_rules! impl_params {
    ($t:ident { $($f:ident),+ }) => {
        impl $crate::seq2seq::layers::Params for $t {
            fn collect<'a>(
                &'a self,
                name: &str,
                out: &mut Vec<(String, &'a ndarray::Array2<f64>)>,
            ) {
                $( self.$f.collect(&$crate::seq2seq::layers::join(name, stringify!($f)), out); )+
            }

            fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ndarray::Array2<f64>>) {
                $( self.$f.collect_mut(out); )+
            }
        }
    };
}
pub(crate) use impl_params;

/// Named blocks in canonical order.
pub fn named_blocks<P: Params>(p: &P) -> Vec<(String, &Array2<f64>)> {
    let mut out = Vec::new();
    p.collect("", &mut out);
    out
}

pub fn blocks_mut<P: Params>(p: &mut P) -> Vec<&mut Array2<f64>> {
    let mut out = Vec::new();
    p.collect_mut(&mut out);
    out
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

/// `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}
impl_params!(Linear { w, b });

impl Linear {
    pub fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: uniform(inputs, outputs, bound, rng),
            b: uniform(1, outputs, bound, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `g`; returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Linear) -> Array2<f64> {
        g.w += &x.t().dot(dy);
        g.b += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
}
impl_params!(LayerNorm { gamma, beta });

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Array2::ones((1, d)),
            beta: Array2::zeros((1, d)),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>, g: &mut LayerNorm) -> Array2<f64> {
        g.gamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        g.beta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (i, (dh, xh)) in dxhat.rows().into_iter().zip(cache.xhat.rows()).enumerate() {
            let mean_dh = dh.sum() / d;
            let mean_dhx = dh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
            let inv = cache.inv_std[i];
            for c in 0..dh.len() {
                dx[[i, c]] = inv * (dh[c] - mean_dh - xh[c] * mean_dhx);
            }
        }
        dx
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}
impl_params!(Attention {
    query,
    key,
    value,
    output
});

pub struct AttentionCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention weights per head, `Lq x Lk`, zero where masked.
    probs: Vec<Array2<f64>>,
    mixed: Array2<f64>,
}

impl Attention {
    pub fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            output: Linear::init(d, d, rng),
        }
    }

    /// Row `i` of a causal attention only reads keys `0..=i`.
    pub fn forward(
        &self,
        xq: &Array2<f64>,
        xkv: &Array2<f64>,
        heads: usize,
        causal: bool,
    ) -> (Array2<f64>, AttentionCache) {
        let q = self.query.forward(xq);
        let k = self.key.forward(xkv);
        let v = self.value.forward(xkv);
        let (lq, lk, d) = (q.nrows(), k.nrows(), q.ncols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut mixed = Array2::zeros((lq, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            let mut p = Array2::zeros((lq, lk));
            for i in 0..lq {
                let limit = if causal { (i + 1).min(lk) } else { lk };
                let mut peak = f64::NEG_INFINITY;
                for j in 0..limit {
                    let sc = scale * qh.row(i).dot(&kh.row(j));
                    p[[i, j]] = sc;
                    peak = peak.max(sc);
                }
                let mut total = 0.0;
                for j in 0..limit {
                    let e = (p[[i, j]] - peak).exp();
                    p[[i, j]] = e;
                    total += e;
                }
                for j in 0..limit {
                    p[[i, j]] /= total;
                }
                for j in 0..limit {
                    let w = p[[i, j]];
                    for c in 0..dh {
                        mixed[[i, h * dh + c]] += w * vh[[j, c]];
                    }
                }
            }
            probs.push(p);
        }
        let out = self.output.forward(&mixed);
        (
            out,
            AttentionCache {
                xq: xq.clone(),
                xkv: xkv.clone(),
                q,
                k,
                v,
                probs,
                mixed,
            },
        )
    }

    /// Returns gradients with respect to the query input and the key/value input.
    pub fn backward(
        &self,
        cache: &AttentionCache,
        dout: &Array2<f64>,
        heads: usize,
        causal: bool,
        g: &mut Attention,
    ) -> (Array2<f64>, Array2<f64>) {
        let dmixed = self.output.backward(&cache.mixed, dout, &mut g.output);
        let (lq, lk, d) = (cache.q.nrows(), cache.k.nrows(), cache.q.ncols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros((lq, d));
        let mut dk = Array2::zeros((lk, d));
        let mut dv = Array2::zeros((lk, d));
        let mut dp = vec![0.0; lk];
        for (h, p) in cache.probs.iter().enumerate() {
            let off = h * dh;
            for i in 0..lq {
                let limit = if causal { (i + 1).min(lk) } else { lk };
                let mut weighted = 0.0;
                for j in 0..limit {
                    let mut acc = 0.0;
                    for c in 0..dh {
                        acc += dmixed[[i, off + c]] * cache.v[[j, off + c]];
                        dv[[j, off + c]] += p[[i, j]] * dmixed[[i, off + c]];
                    }
                    dp[j] = acc;
                    weighted += p[[i, j]] * acc;
                }
                for j in 0..limit {
                    let ds = p[[i, j]] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        dq[[i, off + c]] += ds * cache.k[[j, off + c]];
                        dk[[j, off + c]] += ds * cache.q[[i, off + c]];
                    }
                }
            }
        }
        let dxq = self.query.backward(&cache.xq, &dq, &mut g.query);
        let dxkv = self.key.backward(&cache.xkv, &dk, &mut g.key)
            + self.value.backward(&cache.xkv, &dv, &mut g.value);
        (dxq, dxkv)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Position-wise `Linear -> GELU -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}
impl_params!(FeedForward { inner, outer });

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn init(d: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inner: Linear::init(d, hidden, rng),
            outer: Linear::init(hidden, d, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.inner.forward(x);
        let act = pre.mapv(gelu);
        let out = self.outer.forward(&act);
        (
            out,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, cache: &FeedForwardCache, dout: &Array2<f64>, g: &mut FeedForward) -> Array2<f64> {
        let dact = self.outer.backward(&cache.act, dout, &mut g.outer);
        let dpre = dact * &cache.pre.mapv(gelu_grad);
        self.inner.backward(&cache.x, &dpre, &mut g.inner)
    }
}

/// Inverted dropout; `None` means identity.
pub fn dropout_mask(
    shape: (usize, usize),
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

pub fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
