//! The encoder-decoder network: parameters, cached forward pass and reverse pass.

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    apply_mask, dropout_mask, impl_params, sigmoid, uniform, Attention, AttentionCache, FeedForward,
    FeedForwardCache, LayerNorm, LayerNormCache, Linear, Params,
};
use crate::error::{Error, Result};

/// Shape of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub d_emb: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    /// Encoder length `p`.
    pub enc_len: usize,
    /// Decoder positions, `M + 2`.
    pub dec_len: usize,
    pub token_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub norm2: LayerNorm,
    pub ff: FeedForward,
}
impl_params!(EncoderLayer {
    norm1,
    attn,
    norm2,
    ff
});

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub norm1: LayerNorm,
    pub self_attn: Attention,
    pub norm2: LayerNorm,
    pub cross_attn: Attention,
    pub norm3: LayerNorm,
    pub ff: FeedForward,
}
impl_params!(DecoderLayer {
    norm1,
    self_attn,
    norm2,
    cross_attn,
    norm3,
    ff
});

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Lifts one scalar parameter to `d_emb`.
    pub enc_embed: Linear,
    pub enc_pos: Array2<f64>,
    pub dec_embed: Linear,
    pub dec_pos: Array2<f64>,
    /// Embedding of the decoder start token.
    pub start: Array2<f64>,
    pub encoder: Vec<EncoderLayer>,
    pub enc_norm: LayerNorm,
    pub decoder: Vec<DecoderLayer>,
    pub dec_norm: LayerNorm,
    pub head: Linear,
}
impl_params!(Network {
    enc_embed,
    enc_pos,
    dec_embed,
    dec_pos,
    start,
    encoder,
    enc_norm,
    decoder,
    dec_norm,
    head
});

impl Network {
    pub fn init(shape: &Shape, rng: &mut ChaCha8Rng) -> Self {
        let d = shape.d_emb;
        let table = 1.0 / (d as f64).sqrt();
        Self {
            enc_embed: Linear::init(1, d, rng),
            enc_pos: uniform(shape.enc_len, d, table, rng),
            dec_embed: Linear::init(shape.token_dim, d, rng),
            dec_pos: uniform(shape.dec_len, d, table, rng),
            start: uniform(1, d, table, rng),
            encoder: (0..shape.layers)
                .map(|_| EncoderLayer {
                    norm1: LayerNorm::new(d),
                    attn: Attention::init(d, rng),
                    norm2: LayerNorm::new(d),
                    ff: FeedForward::init(d, shape.d_ff, rng),
                })
                .collect(),
            enc_norm: LayerNorm::new(d),
            decoder: (0..shape.layers)
                .map(|_| DecoderLayer {
                    norm1: LayerNorm::new(d),
                    self_attn: Attention::init(d, rng),
                    norm2: LayerNorm::new(d),
                    cross_attn: Attention::init(d, rng),
                    norm3: LayerNorm::new(d),
                    ff: FeedForward::init(d, shape.d_ff, rng),
                })
                .collect(),
            dec_norm: LayerNorm::new(d),
            head: Linear::init(d, shape.token_dim, rng),
        }
    }

    /// Same structure, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        let mut blocks = Vec::new();
        self.collect_mut(&mut blocks);
        for b in blocks {
            b.fill(value);
        }
    }
}

struct EncoderLayerCache {
    norm1: LayerNormCache,
    attn: AttentionCache,
    drop1: Option<Array2<f64>>,
    norm2: LayerNormCache,
    ff: FeedForwardCache,
    drop2: Option<Array2<f64>>,
}

struct DecoderLayerCache {
    norm1: LayerNormCache,
    self_attn: AttentionCache,
    drop1: Option<Array2<f64>>,
    norm2: LayerNormCache,
    cross_attn: AttentionCache,
    drop2: Option<Array2<f64>>,
    norm3: LayerNormCache,
    ff: FeedForwardCache,
    drop3: Option<Array2<f64>>,
}

/// Encoder activations needed by the reverse pass.
pub struct EncoderCache {
    theta: Array2<f64>,
    drop_embed: Option<Array2<f64>>,
    layers: Vec<EncoderLayerCache>,
    norm: LayerNormCache,
}

/// Decoder activations needed by the reverse pass.
pub struct DecoderCache {
    tokens: Array2<f64>,
    drop_embed: Option<Array2<f64>>,
    layers: Vec<DecoderLayerCache>,
    norm: LayerNormCache,
    hidden: Array2<f64>,
    output: Array2<f64>,
}

impl DecoderCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn check_finite(x: &Array2<f64>, stage: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation after {stage}")))
    }
}

/// Forward-pass settings; dropout is active only when an RNG is supplied.
pub struct Pass<'a> {
    pub heads: usize,
    pub dropout: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Pass<'_> {
    fn mask(&mut self, shape: (usize, usize)) -> Option<Array2<f64>> {
        dropout_mask(shape, self.dropout, self.rng.as_deref_mut())
    }
}

impl Network {
    /// Encodes the normalized parameter vector, one token per component.
    pub fn encode(&self, theta: &[f64], pass: &mut Pass) -> Result<(Array2<f64>, EncoderCache)> {
        let p = theta.len();
        if p > self.enc_pos.nrows() {
            return Err(Error::Shape(format!(
                "{p} encoder tokens exceed the {} learned positions",
                self.enc_pos.nrows()
            )));
        }
        let theta = Array2::from_shape_vec((p, 1), theta.to_vec()).expect("column");
        let embedded = self.enc_embed.forward(&theta) + self.enc_pos.slice(s![0..p, ..]);
        let drop_embed = pass.mask(embedded.dim());
        let mut x = apply_mask(embedded, &drop_embed);
        let mut layers = Vec::with_capacity(self.encoder.len());
        for (l, layer) in self.encoder.iter().enumerate() {
            let (a, norm1) = layer.norm1.forward(&x);
            let (att, attn) = layer.attn.forward(&a, &a, pass.heads, false);
            let drop1 = pass.mask(att.dim());
            x = x + apply_mask(att, &drop1);
            let (b, norm2) = layer.norm2.forward(&x);
            let (f, ff) = layer.ff.forward(&b);
            let drop2 = pass.mask(f.dim());
            x = x + apply_mask(f, &drop2);
            check_finite(&x, &format!("encoder layer {l}"))?;
            layers.push(EncoderLayerCache {
                norm1,
                attn,
                drop1,
                norm2,
                ff,
                drop2,
            });
        }
        let (out, norm) = self.enc_norm.forward(&x);
        Ok((
            out,
            EncoderCache {
                theta,
                drop_embed,
                layers,
                norm,
            },
        ))
    }

    /// Runs the decoder on `[start, tokens...]` and returns one prediction
    /// per position, squashed into `(0, 1)`.
    pub fn decode(
        &self,
        memory: &Array2<f64>,
        tokens: &[Vec<f64>],
        pass: &mut Pass,
    ) -> Result<DecoderCache> {
        let len = tokens.len() + 1;
        let td = self.head.w.ncols();
        if len > self.dec_pos.nrows() {
            return Err(Error::Shape(format!(
                "{len} decoder positions exceed the {} learned positions",
                self.dec_pos.nrows()
            )));
        }
        if tokens.iter().any(|t| t.len() != td) {
            return Err(Error::Shape(format!("decoder tokens must have width {td}")));
        }
        let flat: Vec<f64> = tokens.iter().flatten().copied().collect();
        let tokens = Array2::from_shape_vec((len - 1, td), flat).expect("token matrix");
        let mut embedded = Array2::zeros((len, self.start.ncols()));
        embedded.row_mut(0).assign(&self.start.row(0));
        if len > 1 {
            embedded
                .slice_mut(s![1.., ..])
                .assign(&self.dec_embed.forward(&tokens));
        }
        embedded += &self.dec_pos.slice(s![0..len, ..]);
        let drop_embed = pass.mask(embedded.dim());
        let mut y = apply_mask(embedded, &drop_embed);
        let mut layers = Vec::with_capacity(self.decoder.len());
        for (l, layer) in self.decoder.iter().enumerate() {
            let (a, norm1) = layer.norm1.forward(&y);
            let (att, self_attn) = layer.self_attn.forward(&a, &a, pass.heads, true);
            let drop1 = pass.mask(att.dim());
            y = y + apply_mask(att, &drop1);
            let (b, norm2) = layer.norm2.forward(&y);
            let (cross, cross_attn) = layer.cross_attn.forward(&b, memory, pass.heads, false);
            let drop2 = pass.mask(cross.dim());
            y = y + apply_mask(cross, &drop2);
            let (c, norm3) = layer.norm3.forward(&y);
            let (f, ff) = layer.ff.forward(&c);
            let drop3 = pass.mask(f.dim());
            y = y + apply_mask(f, &drop3);
            check_finite(&y, &format!("decoder layer {l}"))?;
            layers.push(DecoderLayerCache {
                norm1,
                self_attn,
                drop1,
                norm2,
                cross_attn,
                drop2,
                norm3,
                ff,
                drop3,
            });
        }
        let (hidden, norm) = self.dec_norm.forward(&y);
        let output = self.head.forward(&hidden).mapv(sigmoid);
        check_finite(&output, "output head")?;
        Ok(DecoderCache {
            tokens,
            drop_embed,
            layers,
            norm,
            hidden,
            output,
        })
    }

    /// Reverse pass from `dL/d output`; accumulates into `grads`.
    pub fn backward(
        &self,
        enc: &EncoderCache,
        dec: &DecoderCache,
        d_output: &Array2<f64>,
        heads: usize,
        grads: &mut Network,
    ) -> Result<()> {
        if d_output.dim() != dec.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                d_output.dim(),
                dec.output.dim()
            )));
        }
        let d_logits = d_output * &dec.output.mapv(|o| o * (1.0 - o));
        let d_hidden = self.head.backward(&dec.hidden, &d_logits, &mut grads.head);
        let mut dy = self.dec_norm.backward(&dec.norm, &d_hidden, &mut grads.dec_norm);
        let mut d_memory = Array2::zeros((enc.theta.nrows(), self.start.ncols()));
        for (l, layer) in self.decoder.iter().enumerate().rev() {
            let c = &dec.layers[l];
            let g = &mut grads.decoder[l];
            let df = apply_mask(dy.clone(), &c.drop3);
            let dc = layer.ff.backward(&c.ff, &df, &mut g.ff);
            dy += &layer.norm3.backward(&c.norm3, &dc, &mut g.norm3);

            let dcross = apply_mask(dy.clone(), &c.drop2);
            let (db, dmem) = layer
                .cross_attn
                .backward(&c.cross_attn, &dcross, heads, false, &mut g.cross_attn);
            d_memory += &dmem;
            dy += &layer.norm2.backward(&c.norm2, &db, &mut g.norm2);

            let dself = apply_mask(dy.clone(), &c.drop1);
            let (dq, dkv) = layer
                .self_attn
                .backward(&c.self_attn, &dself, heads, true, &mut g.self_attn);
            dy += &layer.norm1.backward(&c.norm1, &(dq + dkv), &mut g.norm1);
        }
        let d_embedded = apply_mask(dy, &dec.drop_embed);
        let len = d_embedded.nrows();
        {
            let mut pos = grads.dec_pos.slice_mut(s![0..len, ..]);
            pos += &d_embedded;
        }
        grads.start += &d_embedded.slice(s![0..1, ..]);
        if len > 1 {
            let d_tok = d_embedded.slice(s![1.., ..]).to_owned();
            self.dec_embed.backward(&dec.tokens, &d_tok, &mut grads.dec_embed);
        }

        let mut dx = self.enc_norm.backward(&enc.norm, &d_memory, &mut grads.enc_norm);
        for (l, layer) in self.encoder.iter().enumerate().rev() {
            let c = &enc.layers[l];
            let g = &mut grads.encoder[l];
            let df = apply_mask(dx.clone(), &c.drop2);
            let db = layer.ff.backward(&c.ff, &df, &mut g.ff);
            dx += &layer.norm2.backward(&c.norm2, &db, &mut g.norm2);
            let datt = apply_mask(dx.clone(), &c.drop1);
            let (dq, dkv) = layer.attn.backward(&c.attn, &datt, heads, false, &mut g.attn);
            dx += &layer.norm1.backward(&c.norm1, &(dq + dkv), &mut g.norm1);
        }
        let d_embedded = apply_mask(dx, &enc.drop_embed);
        let p = d_embedded.nrows();
        {
            let mut pos = grads.enc_pos.slice_mut(s![0..p, ..]);
            pos += &d_embedded;
        }
        self.enc_embed.backward(&enc.theta, &d_embedded, &mut grads.enc_embed);
        Ok(())
    }
}

/// Sum of squared errors over every token and channel.
pub fn squared_error(predicted: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if predicted.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} and target {:?} differ in shape",
            predicted.dim(),
            target.dim()
        )));
    }
    Ok(predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

/// Stacks token rows into a matrix.
pub fn token_matrix(tokens: &[Vec<f64>]) -> Array2<f64> {
    let width = tokens.first().map_or(0, Vec::len);
    let flat: Vec<f64> = tokens.iter().flatten().copied().collect();
    Array2::from_shape_vec((tokens.len(), width), flat).expect("rectangular tokens")
}
