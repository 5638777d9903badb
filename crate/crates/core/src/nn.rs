//! Parameterised layers built on the tape.
//!
//! Layers hold [`ParamId`]s only, so one layout serves a store at either
//! precision. Weights are stored `in x out`.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{init, AttentionMask, ParamId, ParamStore, Real, Tape, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

/// Registers parameters under a dotted name prefix and a group label.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    group: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, group: &str) -> Self {
        Builder {
            store,
            rng,
            prefix: group.to_string(),
            group: group.to_string(),
        }
    }

    /// A child builder whose names are prefixed by `name`.
    pub fn scope(&mut self, name: &str) -> Builder<'_> {
        Builder {
            store: self.store,
            rng: self.rng,
            prefix: format!("{}.{name}", self.prefix),
            group: self.group.clone(),
        }
    }

    /// A child builder registering into a different group.
    pub fn group(&mut self, group: &str) -> Builder<'_> {
        Builder {
            store: self.store,
            rng: self.rng,
            prefix: group.to_string(),
            group: group.to_string(),
        }
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> Result<ParamId> {
        self.store.add(format!("{}.{name}", self.prefix), self.group.clone(), t, false)
    }

    /// Normal init with std `1/sqrt(fan_in)`.
    pub fn weight(&mut self, name: &str, dims: &[usize], fan_in: usize) -> Result<ParamId> {
        let t = init::fan_in(dims, fan_in, self.rng);
        self.add(name, t)
    }

    pub fn normal(&mut self, name: &str, dims: &[usize], std: f64) -> Result<ParamId> {
        let t = init::normal(dims, std, self.rng);
        self.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, dims: &[usize]) -> Result<ParamId> {
        self.add(name, init::zeros(dims))
    }

    pub fn ones(&mut self, name: &str, dims: &[usize]) -> Result<ParamId> {
        self.add(name, init::ones(dims))
    }

    /// Constant tensor kept in the `buffers` group, which is never trained.
    pub fn buffer(&mut self, name: &str, t: Tensor) -> Result<ParamId> {
        let name = format!("{}.{name}", self.prefix);
        self.store.add(name, "buffers", t, true)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(b: &mut Builder<'_>, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(Linear {
            w: s.weight("w", &[d_in, d_out], d_in)?,
            b: if bias { Some(s.zeros("b", &[d_out])?) } else { None },
        })
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        let w = t.param(self.w)?;
        let b = self.b.map(|b| t.param(b)).transpose()?;
        t.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut Builder<'_>, name: &str, d: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(LayerNorm {
            gamma: s.ones("gamma", &[d])?,
            beta: s.zeros("beta", &[d])?,
        })
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        let g = t.param(self.gamma)?;
        let b = t.param(self.beta)?;
        t.layer_norm(x, Some(g), Some(b), F::of(LN_EPS))
    }
}

/// Scaled dot-product attention of `q` (`m x dk`) over `k`, `v` (`n x dk`).
pub fn attention<F: Real>(t: &mut Tape<'_, F>, q: Var, k: Var, v: Var, scale: f64, mask: AttentionMask) -> Result<Var> {
    let scores = t.matmul_t(q, false, k, true)?;
    let scores = t.scale(scores, F::of(scale))?;
    let w = t.masked_softmax(scores, mask)?;
    t.matmul(w, v)
}

/// Multi-head self-attention with output projection.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl SelfAttention {
    pub fn new(b: &mut Builder<'_>, name: &str, dim: usize, heads: usize) -> Result<Self> {
        assert!(heads > 0 && dim % heads == 0, "width {dim} not divisible by {heads} heads");
        let mut s = b.scope(name);
        Ok(SelfAttention {
            q: Linear::new(&mut s, "q", dim, dim, true)?,
            k: Linear::new(&mut s, "k", dim, dim, true)?,
            v: Linear::new(&mut s, "v", dim, dim, true)?,
            o: Linear::new(&mut s, "o", dim, dim, true)?,
            heads,
            dim,
        })
    }

    /// Queries and keys read `qk_in`, values read `v_in`. They differ when
    /// positions are injected into the attention pattern only.
    pub fn forward_split<F: Real>(&self, t: &mut Tape<'_, F>, qk_in: Var, v_in: Var, mask: AttentionMask) -> Result<Var> {
        let q = self.q.forward(t, qk_in)?;
        let k = self.k.forward(t, qk_in)?;
        let v = self.v.forward(t, v_in)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let out = if self.heads == 1 {
            attention(t, q, k, v, scale, mask)?
        } else {
            let mut parts = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = t.slice(q, 1, h * dh, dh)?;
                let kh = t.slice(k, 1, h * dh, dh)?;
                let vh = t.slice(v, 1, h * dh, dh)?;
                parts.push(attention(t, qh, kh, vh, scale, mask)?);
            }
            t.concat(&parts, 1)?
        };
        self.o.forward(t, out)
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var, mask: AttentionMask) -> Result<Var> {
        self.forward_split(t, x, x, mask)
    }
}

/// Two linear layers with a gelu in between.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(b: &mut Builder<'_>, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(FeedForward {
            up: Linear::new(&mut s, "up", d_in, hidden, true)?,
            down: Linear::new(&mut s, "down", hidden, d_out, true)?,
        })
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        let h = self.up.forward(t, x)?;
        let h = t.gelu(h)?;
        self.down.forward(t, h)
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new(b: &mut Builder<'_>, name: &str, dim: usize, heads: usize, expansion: usize) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(EncoderLayer {
            ln1: LayerNorm::new(&mut s, "ln1", dim)?,
            attn: SelfAttention::new(&mut s, "attn", dim, heads)?,
            ln2: LayerNorm::new(&mut s, "ln2", dim)?,
            ffn: FeedForward::new(&mut s, "ffn", dim, dim * expansion, dim)?,
        })
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        let h = self.ln1.forward(t, x)?;
        let h = self.attn.forward(t, h, AttentionMask::Full)?;
        let x = t.add(x, h)?;
        let h = self.ln2.forward(t, x)?;
        let h = self.ffn.forward(t, h)?;
        t.add(x, h)
    }
}

#[derive(Clone, Debug, Default)]
pub struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
}

impl EncoderStack {
    pub fn new(b: &mut Builder<'_>, name: &str, depth: usize, dim: usize, heads: usize) -> Result<Self> {
        let mut s = b.scope(name);
        let layers = (0..depth)
            .map(|i| EncoderLayer::new(&mut s, &i.to_string(), dim, heads, 4))
            .collect::<Result<_>>()?;
        Ok(EncoderStack { layers })
    }

    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            x = l.forward(t, x)?;
        }
        Ok(x)
    }
}

/// Fixed sinusoidal position table: `pe[p, 2i] = sin(p / 10000^(2i/d))`,
/// `pe[p, 2i+1] = cos(...)`.
pub fn sinusoidal<F: Real>(n: usize, d: usize) -> Tensor<F> {
    Tensor::from_fn([n, d], |idx| {
        let (p, j) = (idx / d, idx % d);
        let freq = 10000f64.powf(-((j - j % 2) as f64) / d as f64);
        let a = p as f64 * freq;
        F::of(if j % 2 == 0 { a.sin() } else { a.cos() })
    })
}

/// Adds fixed sinusoidal positions to an `n x d` sequence.
pub fn add_positions<F: Real>(t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
    let (n, d) = (t.dims(x)[0], t.dims(x)[1]);
    let pe = t.input(sinusoidal(n, d));
    t.add(x, pe)
}

/// Row-major `n x d` tokens from a channel-first `d x ...` feature map.
pub fn channels_to_tokens<F: Real>(t: &mut Tape<'_, F>, fmap: Var) -> Result<Var> {
    let d = t.dims(fmap)[0];
    let n = t.value(fmap).len() / d;
    let flat = t.reshape(fmap, [d, n])?;
    t.transpose(flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_first_row() {
        let pe = sinusoidal::<f64>(3, 4);
        assert_eq!(&pe.data()[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.at(&[1, 0]) - 1f64.sin()).abs() < 1e-15);
        assert!((pe.at(&[1, 3]) - (0.01f64).cos()).abs() < 1e-15);
    }
}
