//! Forward and backward kernels on row-major `rows x cols` activations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gemm, Scalar, Tensor, View};

/// `y = x W + b` for `x` of shape `n x din` and `W` of shape `din x dout`.
pub fn linear_fwd<T: Scalar>(x: &[T], n: usize, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Vec<T> {
    let (din, dout) = (w.shape[0], w.shape[1]);
    let mut y = vec![T::zero(); n * dout];
    let beta = match b {
        Some(b) => {
            for row in y.chunks_exact_mut(dout) {
                row.copy_from_slice(&b.data);
            }
            T::one()
        }
        None => T::zero(),
    };
    gemm(x, View::full(n, din), &w.data, View::full(din, dout), beta, &mut y, View::full(n, dout));
    y
}

/// Accumulates `dW += x^T dy`, `db += colsum(dy)` and returns `dx = dy W^T`.
pub fn linear_bwd<T: Scalar>(
    x: &[T],
    n: usize,
    w: &Tensor<T>,
    dy: &[T],
    dw: &mut Tensor<T>,
    db: Option<&mut Tensor<T>>,
) -> Vec<T> {
    let (din, dout) = (w.shape[0], w.shape[1]);
    gemm(x, View::full(n, din).t(), dy, View::full(n, dout), T::one(), &mut dw.data, View::full(din, dout));
    if let Some(db) = db {
        for row in dy.chunks_exact(dout) {
            for (acc, &g) in db.data.iter_mut().zip(row) {
                *acc += g;
            }
        }
    }
    let mut dx = vec![T::zero(); n * din];
    gemm(dy, View::full(n, dout), &w.data, View::full(din, dout).t(), T::zero(), &mut dx, View::full(n, din));
    dx
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LnCache<T> {
    xhat: Vec<T>,
    inv: Vec<T>,
}

/// Layer normalization over the last dimension of `x` (`n x d`).
pub fn ln_fwd<T: Scalar>(x: &[T], d: usize, gain: &Tensor<T>, bias: &Tensor<T>) -> (Vec<T>, LnCache<T>) {
    let n = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv = vec![T::zero(); n];
    let dn = T::of(d as f64);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let iv = T::one() / (var + T::of(LN_EPS)).sqrt();
        inv[r] = iv;
        for j in 0..d {
            let h = (row[j] - mean) * iv;
            xhat[r * d + j] = h;
            y[r * d + j] = gain.data[j] * h + bias.data[j];
        }
    }
    (y, LnCache { xhat, inv })
}

pub fn ln_bwd<T: Scalar>(
    dy: &[T],
    d: usize,
    gain: &Tensor<T>,
    cache: &LnCache<T>,
    dgain: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Vec<T> {
    let n = dy.len() / d;
    let mut dx = vec![T::zero(); dy.len()];
    let dn = T::of(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..n {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let g = &dy[r * d..(r + 1) * d];
        let mut sum = T::zero();
        let mut dot = T::zero();
        for j in 0..d {
            dgain.data[j] += g[j] * xh[j];
            dbias.data[j] += g[j];
            dxhat[j] = g[j] * gain.data[j];
            sum += dxhat[j];
            dot += dxhat[j] * xh[j];
        }
        let iv = cache.inv[r];
        for j in 0..d {
            dx[r * d + j] = iv / dn * (dn * dxhat[j] - sum - xh[j] * dot);
        }
    }
    dx
}

/// Dropout source: applies only when an RNG is supplied and the rate is
/// positive.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    pub fn off() -> Dropout<'static> {
        Dropout { rate: 0.0, rng: None }
    }

    /// Inverted-dropout mask with entries `0` or `1 / (1 - rate)`.
    pub fn mask<T: Scalar>(&mut self, len: usize) -> Option<Vec<T>> {
        let rate = self.rate;
        let rng = self.rng.as_deref_mut()?;
        if rate <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        Some(
            (0..len)
                .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
                .collect(),
        )
    }
}

pub fn apply_mask<T: Scalar>(x: &mut [T], mask: Option<&Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

/// Shapes of one attention call.
#[derive(Debug, Clone, Copy)]
pub struct AttnShape {
    pub batch: usize,
    pub tq: usize,
    pub tk: usize,
    pub d: usize,
    pub heads: usize,
    pub causal: bool,
}

#[derive(Debug, Clone)]
pub struct AttnCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights before dropout, `batch x heads x tq x tk`.
    pub p: Vec<T>,
    drop: Option<Vec<T>>,
    ctx: Vec<T>,
}

pub struct AttnParams<'a, T> {
    pub wq: &'a Tensor<T>,
    pub bq: &'a Tensor<T>,
    pub wk: &'a Tensor<T>,
    pub wv: &'a Tensor<T>,
    pub bv: &'a Tensor<T>,
    pub wo: &'a Tensor<T>,
    pub bo: &'a Tensor<T>,
}

pub struct AttnGrads<'a, T> {
    pub wq: &'a mut Tensor<T>,
    pub bq: &'a mut Tensor<T>,
    pub wk: &'a mut Tensor<T>,
    pub wv: &'a mut Tensor<T>,
    pub bv: &'a mut Tensor<T>,
    pub wo: &'a mut Tensor<T>,
    pub bo: &'a mut Tensor<T>,
}

fn head_view(s: AttnShape, b: usize, h: usize, t: usize) -> View {
    let dh = s.d / s.heads;
    View {
        offset: b * t * s.d + h * dh,
        rows: t,
        cols: dh,
        stride: s.d,
        trans: false,
    }
}

/// Multi-head scaled dot-product attention of queries `xq` over keys and
/// values `xkv`. Keys with `key_mask == false`, and future keys when causal,
/// get weight exactly 0.
pub fn attn_fwd<T: Scalar>(
    p: &AttnParams<T>,
    xq: &[T],
    xkv: &[T],
    key_mask: &[bool],
    s: AttnShape,
    dropout: &mut Dropout,
) -> (Vec<T>, AttnCache<T>) {
    let nq = s.batch * s.tq;
    let nk = s.batch * s.tk;
    let q = linear_fwd(xq, nq, p.wq, Some(p.bq));
    let k = linear_fwd(xkv, nk, p.wk, None);
    let v = linear_fwd(xkv, nk, p.wv, Some(p.bv));
    let dh = s.d / s.heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let block = s.tq * s.tk;
    let mut probs = vec![T::zero(); s.batch * s.heads * block];
    let mut scores = vec![T::zero(); block];
    for b in 0..s.batch {
        for h in 0..s.heads {
            gemm(
                &q,
                head_view(s, b, h, s.tq),
                &k,
                head_view(s, b, h, s.tk).t(),
                T::zero(),
                &mut scores,
                View::full(s.tq, s.tk),
            );
            let out = &mut probs[(b * s.heads + h) * block..][..block];
            for i in 0..s.tq {
                let valid = |j: usize| key_mask[b * s.tk + j] && (!s.causal || j <= i);
                let row = &scores[i * s.tk..(i + 1) * s.tk];
                let mut max = T::neg_infinity();
                for j in (0..s.tk).filter(|&j| valid(j)) {
                    max = max.max(row[j] * scale);
                }
                if max == T::neg_infinity() {
                    continue;
                }
                let mut sum = T::zero();
                for j in 0..s.tk {
                    if valid(j) {
                        let e = (row[j] * scale - max).exp();
                        out[i * s.tk + j] = e;
                        sum += e;
                    }
                }
                for j in 0..s.tk {
                    out[i * s.tk + j] /= sum;
                }
            }
        }
    }
    let drop = dropout.mask::<T>(probs.len());
    let mut pd = probs.clone();
    apply_mask(&mut pd, drop.as_ref());
    let mut ctx = vec![T::zero(); nq * s.d];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let off = (b * s.heads + h) * block;
            gemm(
                &pd[off..off + block],
                View::full(s.tq, s.tk),
                &v,
                head_view(s, b, h, s.tk),
                T::zero(),
                &mut ctx,
                head_view(s, b, h, s.tq),
            );
        }
    }
    let out = linear_fwd(&ctx, nq, p.wo, Some(p.bo));
    (
        out,
        AttnCache {
            q,
            k,
            v,
            p: probs,
            drop,
            ctx,
        },
    )
}

/// Backward of [`attn_fwd`]; returns `(dxq, dxkv)`.
pub fn attn_bwd<T: Scalar>(
    p: &AttnParams<T>,
    g: AttnGrads<T>,
    c: &AttnCache<T>,
    xq: &[T],
    xkv: &[T],
    dout: &[T],
    s: AttnShape,
) -> (Vec<T>, Vec<T>) {
    let nq = s.batch * s.tq;
    let nk = s.batch * s.tk;
    let dh = s.d / s.heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let dctx = linear_bwd(&c.ctx, nq, p.wo, dout, g.wo, Some(g.bo));
    let block = s.tq * s.tk;
    let mut dq = vec![T::zero(); nq * s.d];
    let mut dk = vec![T::zero(); nk * s.d];
    let mut dv = vec![T::zero(); nk * s.d];
    let mut dp = vec![T::zero(); block];
    let mut pd = vec![T::zero(); block];
    for b in 0..s.batch {
        for h in 0..s.heads {
            let off = (b * s.heads + h) * block;
            let probs = &c.p[off..off + block];
            pd.copy_from_slice(probs);
            if let Some(m) = &c.drop {
                for (x, &k) in pd.iter_mut().zip(&m[off..off + block]) {
                    *x *= k;
                }
            }
            // dPd = dctx_bh v_bh^T
            gemm(
                &dctx,
                head_view(s, b, h, s.tq),
                &c.v,
                head_view(s, b, h, s.tk).t(),
                T::zero(),
                &mut dp,
                View::full(s.tq, s.tk),
            );
            // dv_bh = Pd^T dctx_bh
            gemm(
                &pd,
                View::full(s.tq, s.tk).t(),
                &dctx,
                head_view(s, b, h, s.tq),
                T::zero(),
                &mut dv,
                head_view(s, b, h, s.tk),
            );
            if let Some(m) = &c.drop {
                for (x, &k) in dp.iter_mut().zip(&m[off..off + block]) {
                    *x *= k;
                }
            }
            // softmax backward, folded with the score scale
            for i in 0..s.tq {
                let pr = &probs[i * s.tk..(i + 1) * s.tk];
                let row = &mut dp[i * s.tk..(i + 1) * s.tk];
                let dot: T = pr.iter().zip(row.iter()).map(|(&a, &b)| a * b).sum();
                for j in 0..s.tk {
                    row[j] = pr[j] * (row[j] - dot) * scale;
                }
            }
            gemm(
                &dp,
                View::full(s.tq, s.tk),
                &c.k,
                head_view(s, b, h, s.tk),
                T::zero(),
                &mut dq,
                head_view(s, b, h, s.tq),
            );
            gemm(
                &dp,
                View::full(s.tq, s.tk).t(),
                &c.q,
                head_view(s, b, h, s.tq),
                T::zero(),
                &mut dk,
                head_view(s, b, h, s.tk),
            );
        }
    }
    let dxq = linear_bwd(xq, nq, p.wq, &dq, g.wq, Some(g.bq));
    let mut dxkv = linear_bwd(xkv, nk, p.wk, &dk, g.wk, None);
    let dxv = linear_bwd(xkv, nk, p.wv, &dv, g.wv, Some(g.bv));
    for (a, b) in dxkv.iter_mut().zip(dxv) {
        *a += b;
    }
    (dxq, dxkv)
}

/// Sinusoidal position encoding row for position `pos`.
pub fn position_encoding(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}
