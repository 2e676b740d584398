//! Post-norm encoder-decoder Transformer with hand-written backward pass.

use rand_chacha::ChaCha8Rng;

use super::ops::{
    apply_mask, attn_bwd, attn_fwd, linear_bwd, linear_fwd, ln_bwd, ln_fwd, position_encoding, AttnCache,
    AttnGrads, AttnParams, AttnShape, Dropout, LnCache,
};
use super::{ModelConfig, Parameters, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::wordpiece::{EOS_ID, SOS_ID};

/// A padded batch. Matrices are `size x len`, row-major; masks are true on
/// real tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    pub src: Vec<usize>,
    pub tgt_in: Vec<usize>,
    pub tgt_out: Vec<usize>,
    pub src_mask: Vec<bool>,
    pub tgt_mask: Vec<bool>,
}

/// Padding id. Padded positions are masked everywhere, so any valid id works.
pub const PAD_ID: usize = EOS_ID;

fn pad_rows(rows: &[&[usize]]) -> (usize, Vec<usize>, Vec<bool>) {
    let len = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(rows.len() * len);
    let mut mask = Vec::with_capacity(rows.len() * len);
    for r in rows {
        for t in 0..len {
            ids.push(r.get(t).copied().unwrap_or(PAD_ID));
            mask.push(t < r.len());
        }
    }
    (len, ids, mask)
}

impl Batch {
    /// Builds a training batch. Sources are used as given; each target
    /// `y` becomes decoder input `<sos> y` and expected output `y <eos>`.
    pub fn new(sources: &[&[usize]], targets: &[&[usize]]) -> Result<Self> {
        if sources.len() != targets.len() || sources.is_empty() {
            return Err(Error::Shape(format!(
                "batch needs equally many sources and targets, got {} and {}",
                sources.len(),
                targets.len()
            )));
        }
        if sources.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInput("empty source sequence in batch".into()));
        }
        let tin: Vec<Vec<usize>> = targets.iter().map(|t| [&[SOS_ID][..], t].concat()).collect();
        let tout: Vec<Vec<usize>> = targets.iter().map(|t| [t, &[EOS_ID][..]].concat()).collect();
        let (src_len, src, src_mask) = pad_rows(sources);
        let tin_refs: Vec<&[usize]> = tin.iter().map(Vec::as_slice).collect();
        let tout_refs: Vec<&[usize]> = tout.iter().map(Vec::as_slice).collect();
        let (tgt_len, tgt_in, tgt_mask) = pad_rows(&tin_refs);
        let (_, tgt_out, _) = pad_rows(&tout_refs);
        Ok(Batch {
            size: sources.len(),
            src_len,
            tgt_len,
            src,
            tgt_in,
            tgt_out,
            src_mask,
            tgt_mask,
        })
    }

    /// Decoder-only batch for generation: every row shares `source` and
    /// decodes from its own prefix (which starts with `<sos>`). All prefixes
    /// must have equal length.
    pub fn for_prefixes(source: &[usize], prefixes: &[Vec<usize>]) -> Result<Self> {
        let tgt_len = prefixes.first().map_or(0, Vec::len);
        if prefixes.is_empty() || prefixes.iter().any(|p| p.len() != tgt_len) || source.is_empty() {
            return Err(Error::Shape("prefixes must be nonempty and of equal length".into()));
        }
        let size = prefixes.len();
        Ok(Batch {
            size,
            src_len: source.len(),
            tgt_len,
            src: source.repeat(size),
            tgt_in: prefixes.concat(),
            tgt_out: vec![PAD_ID; size * tgt_len],
            src_mask: vec![true; size * source.len()],
            tgt_mask: vec![true; size * tgt_len],
        })
    }

    /// Real target tokens that enter the loss.
    pub fn target_tokens(&self) -> usize {
        self.tgt_mask.iter().filter(|&&m| m).count()
    }

    /// Rows `idx` of this batch, in that order, keeping the padded lengths.
    pub fn select_rows(&self, idx: &[usize]) -> Batch {
        let pick = |v: &[usize], len: usize| idx.iter().flat_map(|&i| v[i * len..(i + 1) * len].to_vec()).collect();
        let pickb = |v: &[bool], len: usize| idx.iter().flat_map(|&i| v[i * len..(i + 1) * len].to_vec()).collect();
        Batch {
            size: idx.len(),
            src_len: self.src_len,
            tgt_len: self.tgt_len,
            src: pick(&self.src, self.src_len),
            tgt_in: pick(&self.tgt_in, self.tgt_len),
            tgt_out: pick(&self.tgt_out, self.tgt_len),
            src_mask: pickb(&self.src_mask, self.src_len),
            tgt_mask: pickb(&self.tgt_mask, self.tgt_len),
        }
    }
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= vocab) {
        Some(&id) => Err(Error::TokenOutOfRange { id, vocab }),
        None => Ok(()),
    }
}

fn check_batch(cfg: &ModelConfig, batch: &Batch) -> Result<()> {
    check_ids(&batch.src, cfg.vocab_size)?;
    check_ids(&batch.tgt_in, cfg.vocab_size)?;
    check_ids(&batch.tgt_out, cfg.vocab_size)?;
    if batch.src_len > cfg.max_len || batch.tgt_len > cfg.max_len {
        return Err(Error::InvalidInput(format!(
            "sequence length {} exceeds max_len {}",
            batch.src_len.max(batch.tgt_len),
            cfg.max_len
        )));
    }
    Ok(())
}

fn attn_params<'a, T>(p: &'a Parameters<T>, prefix: &str) -> AttnParams<'a, T>
where
    T: Scalar,
{
    AttnParams {
        wq: p.get(&format!("{prefix}.wq")),
        bq: p.get(&format!("{prefix}.bq")),
        wk: p.get(&format!("{prefix}.wk")),
        wv: p.get(&format!("{prefix}.wv")),
        bv: p.get(&format!("{prefix}.bv")),
        wo: p.get(&format!("{prefix}.wo")),
        bo: p.get(&format!("{prefix}.bo")),
    }
}

/// Disjoint mutable borrows of the seven attention gradients.
fn attn_grads<'a, T: Scalar>(g: &'a mut Parameters<T>, prefix: &str) -> AttnGrads<'a, T> {
    let mut take = |name: &str| -> *mut Tensor<T> { g.get_mut(&format!("{prefix}.{name}")) as *mut _ };
    let ptrs = [take("wq"), take("bq"), take("wk"), take("wv"), take("bv"), take("wo"), take("bo")];
    // SAFETY: the seven names are distinct keys of one map, so the pointers
    // refer to distinct tensors that live as long as the borrow of `g`.
    unsafe {
        AttnGrads {
            wq: &mut *ptrs[0],
            bq: &mut *ptrs[1],
            wk: &mut *ptrs[2],
            wv: &mut *ptrs[3],
            bv: &mut *ptrs[4],
            wo: &mut *ptrs[5],
            bo: &mut *ptrs[6],
        }
    }
}

fn two_mut<'a, T: Scalar>(g: &'a mut Parameters<T>, a: &str, b: &str) -> (&'a mut Tensor<T>, &'a mut Tensor<T>) {
    assert_ne!(a, b);
    let pa = g.get_mut(a) as *mut Tensor<T>;
    let pb = g.get_mut(b) as *mut Tensor<T>;
    // SAFETY: distinct keys refer to distinct tensors.
    unsafe { (&mut *pa, &mut *pb) }
}

fn embed<T: Scalar>(cfg: &ModelConfig, params: &Parameters<T>, ids: &[usize], len: usize) -> Vec<T> {
    let d = cfg.d_model;
    let e = params.get("embedding");
    let scale = T::of((d as f64).sqrt());
    let mut x = vec![T::zero(); ids.len() * d];
    for (r, &id) in ids.iter().enumerate() {
        let pe = position_encoding(r % len, d);
        for j in 0..d {
            x[r * d + j] = e.data[id * d + j] * scale + T::of(pe[j]);
        }
    }
    x
}

fn embed_bwd<T: Scalar>(cfg: &ModelConfig, grads: &mut Parameters<T>, ids: &[usize], dx: &[T]) {
    let d = cfg.d_model;
    let scale = T::of((d as f64).sqrt());
    let ge = grads.get_mut("embedding");
    for (r, &id) in ids.iter().enumerate() {
        for j in 0..d {
            ge.data[id * d + j] += dx[r * d + j] * scale;
        }
    }
}

fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

fn add_into<T: Scalar>(a: &mut [T], b: &[T]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[derive(Debug, Clone)]
struct FfnCache<T> {
    h_pre: Vec<T>,
    h: Vec<T>,
}

fn ffn_fwd<T: Scalar>(p: &Parameters<T>, prefix: &str, x: &[T], n: usize) -> (Vec<T>, FfnCache<T>) {
    let h_pre = linear_fwd(x, n, p.get(&format!("{prefix}.w1")), Some(p.get(&format!("{prefix}.b1"))));
    let h: Vec<T> = h_pre.iter().map(|&v| v.max(T::zero())).collect();
    let out = linear_fwd(&h, n, p.get(&format!("{prefix}.w2")), Some(p.get(&format!("{prefix}.b2"))));
    (out, FfnCache { h_pre, h })
}

fn ffn_bwd<T: Scalar>(
    p: &Parameters<T>,
    g: &mut Parameters<T>,
    prefix: &str,
    x: &[T],
    n: usize,
    c: &FfnCache<T>,
    dout: &[T],
) -> Vec<T> {
    let (w1, b1, w2, b2) = (
        format!("{prefix}.w1"),
        format!("{prefix}.b1"),
        format!("{prefix}.w2"),
        format!("{prefix}.b2"),
    );
    let (gw2, gb2) = two_mut(g, &w2, &b2);
    let mut dh = linear_bwd(&c.h, n, p.get(&w2), dout, gw2, Some(gb2));
    for (v, &pre) in dh.iter_mut().zip(&c.h_pre) {
        if pre <= T::zero() {
            *v = T::zero();
        }
    }
    let (gw1, gb1) = two_mut(g, &w1, &b1);
    linear_bwd(x, n, p.get(&w1), &dh, gw1, Some(gb1))
}

/// One residual sublayer: `LN(x + dropout(f(x)))`.
#[derive(Debug, Clone)]
struct Residual<T> {
    drop: Option<Vec<T>>,
    ln: LnCache<T>,
}

fn residual_fwd<T: Scalar>(
    p: &Parameters<T>,
    norm: &str,
    x: &[T],
    mut f: Vec<T>,
    d: usize,
    dropout: &mut Dropout,
) -> (Vec<T>, Residual<T>) {
    let drop = dropout.mask::<T>(f.len());
    apply_mask(&mut f, drop.as_ref());
    let r = add(x, &f);
    let (y, ln) = ln_fwd(&r, d, p.get(&format!("{norm}.gain")), p.get(&format!("{norm}.bias")));
    (y, Residual { drop, ln })
}

/// Returns `(d_residual, d_sublayer_output)`.
fn residual_bwd<T: Scalar>(
    p: &Parameters<T>,
    g: &mut Parameters<T>,
    norm: &str,
    c: &Residual<T>,
    dy: &[T],
    d: usize,
) -> (Vec<T>, Vec<T>) {
    let (gg, gb) = two_mut(g, &format!("{norm}.gain"), &format!("{norm}.bias"));
    let dr = ln_bwd(dy, d, p.get(&format!("{norm}.gain")), &c.ln, gg, gb);
    let mut df = dr.clone();
    apply_mask(&mut df, c.drop.as_ref());
    (dr, df)
}

#[derive(Debug, Clone)]
struct EncLayer<T> {
    x: Vec<T>,
    attn: AttnCache<T>,
    res1: Residual<T>,
    x1: Vec<T>,
    ffn: FfnCache<T>,
    res2: Residual<T>,
}

#[derive(Debug, Clone)]
struct DecLayer<T> {
    y: Vec<T>,
    self_attn: AttnCache<T>,
    res1: Residual<T>,
    y1: Vec<T>,
    cross: AttnCache<T>,
    res2: Residual<T>,
    y2: Vec<T>,
    ffn: FfnCache<T>,
    res3: Residual<T>,
}

/// Activations kept by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    src_drop: Option<Vec<T>>,
    tgt_drop: Option<Vec<T>>,
    enc: Vec<EncLayer<T>>,
    memory: Vec<T>,
    dec: Vec<DecLayer<T>>,
    y_final: Vec<T>,
}

impl<T: Scalar> Cache<T> {
    /// Sign pattern of every ReLU input, used to detect kinks in finite
    /// difference checks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.enc
            .iter()
            .map(|l| &l.ffn)
            .chain(self.dec.iter().map(|l| &l.ffn))
            .flat_map(|f| f.h_pre.iter().map(|&v| v > T::zero()))
            .collect()
    }

    /// Attention weights of every layer: encoder self-attention, then per
    /// decoder layer self- and cross-attention.
    pub fn attention_weights(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = self.enc.iter().map(|l| l.attn.p.as_slice()).collect();
        for l in &self.dec {
            out.push(&l.self_attn.p);
            out.push(&l.cross.p);
        }
        out
    }
}

fn shape(cfg: &ModelConfig, batch: usize, tq: usize, tk: usize, causal: bool) -> AttnShape {
    AttnShape {
        batch,
        tq,
        tk,
        d: cfg.d_model,
        heads: cfg.heads,
        causal,
    }
}

/// Encoder output for a batch, `size * src_len x d_model`.
fn encode<T: Scalar>(
    cfg: &ModelConfig,
    p: &Parameters<T>,
    batch: &Batch,
    dropout: &mut Dropout,
) -> (Vec<T>, Option<Vec<T>>, Vec<EncLayer<T>>) {
    let d = cfg.d_model;
    let n = batch.size * batch.src_len;
    let mut x = embed(cfg, p, &batch.src, batch.src_len);
    let src_drop = dropout.mask::<T>(x.len());
    apply_mask(&mut x, src_drop.as_ref());
    let mut layers = Vec::with_capacity(cfg.encoder_layers);
    for l in 0..cfg.encoder_layers {
        let pre = format!("encoder.{l}");
        let s = shape(cfg, batch.size, batch.src_len, batch.src_len, false);
        let (a, attn) = attn_fwd(&attn_params(p, &format!("{pre}.self_attn")), &x, &x, &batch.src_mask, s, dropout);
        let (x1, res1) = residual_fwd(p, &format!("{pre}.norm1"), &x, a, d, dropout);
        let (f, ffn) = ffn_fwd(p, &format!("{pre}.ffn"), &x1, n);
        let (x2, res2) = residual_fwd(p, &format!("{pre}.norm2"), &x1, f, d, dropout);
        layers.push(EncLayer {
            x: std::mem::replace(&mut x, x2),
            attn,
            res1,
            x1,
            ffn,
            res2,
        });
    }
    (x, src_drop, layers)
}

fn decode<T: Scalar>(
    cfg: &ModelConfig,
    p: &Parameters<T>,
    batch: &Batch,
    memory: &[T],
    dropout: &mut Dropout,
) -> (Vec<T>, Option<Vec<T>>, Vec<DecLayer<T>>) {
    let d = cfg.d_model;
    let n = batch.size * batch.tgt_len;
    let mut y = embed(cfg, p, &batch.tgt_in, batch.tgt_len);
    let tgt_drop = dropout.mask::<T>(y.len());
    apply_mask(&mut y, tgt_drop.as_ref());
    let mut layers = Vec::with_capacity(cfg.decoder_layers);
    for l in 0..cfg.decoder_layers {
        let pre = format!("decoder.{l}");
        let s_self = shape(cfg, batch.size, batch.tgt_len, batch.tgt_len, true);
        let s_cross = shape(cfg, batch.size, batch.tgt_len, batch.src_len, false);
        let (a, self_attn) = attn_fwd(
            &attn_params(p, &format!("{pre}.self_attn")),
            &y,
            &y,
            &batch.tgt_mask,
            s_self,
            dropout,
        );
        let (y1, res1) = residual_fwd(p, &format!("{pre}.norm1"), &y, a, d, dropout);
        let (c, cross) = attn_fwd(
            &attn_params(p, &format!("{pre}.cross_attn")),
            &y1,
            memory,
            &batch.src_mask,
            s_cross,
            dropout,
        );
        let (y2, res2) = residual_fwd(p, &format!("{pre}.norm2"), &y1, c, d, dropout);
        let (f, ffn) = ffn_fwd(p, &format!("{pre}.ffn"), &y2, n);
        let (y3, res3) = residual_fwd(p, &format!("{pre}.norm3"), &y2, f, d, dropout);
        layers.push(DecLayer {
            y: std::mem::replace(&mut y, y3),
            self_attn,
            res1,
            y1,
            cross,
            res2,
            y2,
            ffn,
            res3,
        });
    }
    (y, tgt_drop, layers)
}

/// Forward pass. Returns logits of shape `size x tgt_len x vocab_size`.
/// Dropout is applied only when `rng` is given.
pub fn forward<T: Scalar>(
    cfg: &ModelConfig,
    params: &Parameters<T>,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<T>, Cache<T>)> {
    check_batch(cfg, batch)?;
    let mut dropout = Dropout {
        rate: cfg.dropout,
        rng,
    };
    let (memory, src_drop, enc) = encode(cfg, params, batch, &mut dropout);
    let (y_final, tgt_drop, dec) = decode(cfg, params, batch, &memory, &mut dropout);
    let n = batch.size * batch.tgt_len;
    let logits = linear_fwd(&y_final, n, params.get("output.weight"), Some(params.get("output.bias")));
    Ok((
        Tensor {
            shape: vec![batch.size, batch.tgt_len, cfg.vocab_size],
            data: logits,
        },
        Cache {
            src_drop,
            tgt_drop,
            enc,
            memory,
            dec,
            y_final,
        },
    ))
}

/// Encoder memory for one source sequence (no dropout).
pub fn encode_source<T: Scalar>(cfg: &ModelConfig, params: &Parameters<T>, src: &[usize]) -> Result<Vec<T>> {
    let batch = Batch::for_prefixes(src, &[vec![SOS_ID]])?;
    check_batch(cfg, &batch)?;
    Ok(encode(cfg, params, &batch, &mut Dropout::off()).0)
}

/// Log-probabilities of the next token after each prefix, given the encoder
/// memory of the shared source. Returns `prefixes.len() x vocab_size`.
pub fn next_token_log_probs<T: Scalar>(
    cfg: &ModelConfig,
    params: &Parameters<T>,
    src: &[usize],
    memory: &[T],
    prefixes: &[Vec<usize>],
) -> Result<Vec<Vec<f64>>> {
    let batch = Batch::for_prefixes(src, prefixes)?;
    check_batch(cfg, &batch)?;
    let mem = memory.repeat(batch.size);
    let (y, _, _) = decode(cfg, params, &batch, &mem, &mut Dropout::off());
    let d = cfg.d_model;
    let last: Vec<T> = (0..batch.size)
        .flat_map(|b| {
            let r = b * batch.tgt_len + batch.tgt_len - 1;
            y[r * d..(r + 1) * d].to_vec()
        })
        .collect();
    let logits = linear_fwd(&last, batch.size, params.get("output.weight"), Some(params.get("output.bias")));
    Ok(logits
        .chunks_exact(cfg.vocab_size)
        .map(|row| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.f64()));
            let lse = max + row.iter().map(|&v| (v.f64() - max).exp()).sum::<f64>().ln();
            row.iter().map(|&v| v.f64() - lse).collect()
        })
        .collect())
}

/// Mean cross-entropy over real target tokens and its gradient w.r.t. the
/// logits.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, batch: &Batch) -> Result<(T, Vec<T>)> {
    let v = *logits.shape.last().expect("logits have a vocabulary axis");
    let count = batch.target_tokens();
    if count == 0 {
        return Err(Error::InvalidInput("batch has no target tokens".into()));
    }
    let inv = T::one() / T::of(count as f64);
    let mut grad = vec![T::zero(); logits.data.len()];
    let mut total = T::zero();
    for (r, row) in logits.data.chunks_exact(v).enumerate() {
        if !batch.tgt_mask[r] {
            continue;
        }
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        let target = batch.tgt_out[r];
        total += lse - row[target];
        let g = &mut grad[r * v..(r + 1) * v];
        for j in 0..v {
            g[j] = (row[j] - lse).exp() * inv;
        }
        g[target] -= inv;
    }
    Ok((total * inv, grad))
}

/// Mean cross-entropy of each batch row over its own real tokens.
pub fn row_losses<T: Scalar>(logits: &Tensor<T>, batch: &Batch) -> Vec<f64> {
    let v = *logits.shape.last().expect("logits have a vocabulary axis");
    (0..batch.size)
        .map(|b| {
            let mut total = 0.0;
            let mut n = 0;
            for t in 0..batch.tgt_len {
                let r = b * batch.tgt_len + t;
                if !batch.tgt_mask[r] {
                    continue;
                }
                let row = &logits.data[r * v..(r + 1) * v];
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.f64()));
                let lse = max + row.iter().map(|&x| (x.f64() - max).exp()).sum::<f64>().ln();
                total += lse - row[batch.tgt_out[r]].f64();
                n += 1;
            }
            if n == 0 {
                0.0
            } else {
                total / n as f64
            }
        })
        .collect()
}

/// Loss only (no gradients).
pub fn loss<T: Scalar>(
    cfg: &ModelConfig,
    params: &Parameters<T>,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<T> {
    let (logits, _) = forward(cfg, params, batch, rng)?;
    Ok(cross_entropy(&logits, batch)?.0)
}

/// Mean token cross-entropy and its gradient for every parameter.
pub fn loss_and_grad<T: Scalar>(
    cfg: &ModelConfig,
    params: &Parameters<T>,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(T, Parameters<T>)> {
    let (logits, cache) = forward(cfg, params, batch, rng)?;
    let (loss, dlogits) = cross_entropy(&logits, batch)?;
    let grads = backward(cfg, params, batch, &cache, &dlogits);
    Ok((loss, grads))
}

fn backward<T: Scalar>(
    cfg: &ModelConfig,
    p: &Parameters<T>,
    batch: &Batch,
    c: &Cache<T>,
    dlogits: &[T],
) -> Parameters<T> {
    let d = cfg.d_model;
    let mut g = p.zeros_like();
    let nt = batch.size * batch.tgt_len;
    let ns = batch.size * batch.src_len;
    let (gw, gb) = two_mut(&mut g, "output.weight", "output.bias");
    let mut dy = linear_bwd(&c.y_final, nt, p.get("output.weight"), dlogits, gw, Some(gb));
    let mut dmem = vec![T::zero(); ns * d];

    for l in (0..cfg.decoder_layers).rev() {
        let pre = format!("decoder.{l}");
        let lc = &c.dec[l];
        let (dr3, df) = residual_bwd(p, &mut g, &format!("{pre}.norm3"), &lc.res3, &dy, d);
        let mut dy2 = ffn_bwd(p, &mut g, &format!("{pre}.ffn"), &lc.y2, nt, &lc.ffn, &df);
        add_into(&mut dy2, &dr3);

        let (dr2, dc) = residual_bwd(p, &mut g, &format!("{pre}.norm2"), &lc.res2, &dy2, d);
        let cross = format!("{pre}.cross_attn");
        let s_cross = shape(cfg, batch.size, batch.tgt_len, batch.src_len, false);
        let (mut dy1, dm) = attn_bwd(
            &attn_params(p, &cross),
            attn_grads(&mut g, &cross),
            &lc.cross,
            &lc.y1,
            &c.memory,
            &dc,
            s_cross,
        );
        add_into(&mut dy1, &dr2);
        add_into(&mut dmem, &dm);

        let (dr1, da) = residual_bwd(p, &mut g, &format!("{pre}.norm1"), &lc.res1, &dy1, d);
        let sa = format!("{pre}.self_attn");
        let s_self = shape(cfg, batch.size, batch.tgt_len, batch.tgt_len, true);
        let (dq, dkv) = attn_bwd(&attn_params(p, &sa), attn_grads(&mut g, &sa), &lc.self_attn, &lc.y, &lc.y, &da, s_self);
        dy = add(&dq, &dkv);
        add_into(&mut dy, &dr1);
    }
    apply_mask(&mut dy, c.tgt_drop.as_ref());
    embed_bwd(cfg, &mut g, &batch.tgt_in, &dy);

    let mut dx = dmem;
    for l in (0..cfg.encoder_layers).rev() {
        let pre = format!("encoder.{l}");
        let lc = &c.enc[l];
        let (dr2, df) = residual_bwd(p, &mut g, &format!("{pre}.norm2"), &lc.res2, &dx, d);
        let mut dx1 = ffn_bwd(p, &mut g, &format!("{pre}.ffn"), &lc.x1, ns, &lc.ffn, &df);
        add_into(&mut dx1, &dr2);
        let (dr1, da) = residual_bwd(p, &mut g, &format!("{pre}.norm1"), &lc.res1, &dx1, d);
        let sa = format!("{pre}.self_attn");
        let s = shape(cfg, batch.size, batch.src_len, batch.src_len, false);
        let (dq, dkv) = attn_bwd(&attn_params(p, &sa), attn_grads(&mut g, &sa), &lc.attn, &lc.x, &lc.x, &da, s);
        dx = add(&dq, &dkv);
        add_into(&mut dx, &dr1);
    }
    apply_mask(&mut dx, c.src_drop.as_ref());
    embed_bwd(cfg, &mut g, &batch.src, &dx);
    g
}
