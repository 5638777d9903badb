//! Small decoder-only transformer over `[modal tokens | prompt tokens]`.
//!
//! Base weights live in group `backbone.base`, adapters in
//! `backbone.adapter`. Each block adds fixed sinusoidal positions to its
//! attention input, so an empty stack is exactly the identity; the final norm
//! is applied by [`Backbone::readout`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{add_positions, Builder, FeedForward, LayerNorm, Linear, SelfAttention};
use crate::tensor::{AttentionMask, ParamId, Real, Tape, Var};
use crate::tokenizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub expansion: usize,
    pub adapter_rank: usize,
    /// Longest assembled sequence accepted.
    pub context: usize,
    /// Let modal tokens attend to each other in both directions.
    pub full_prefix_attention: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            dim: 64,
            blocks: 2,
            heads: 4,
            expansion: 4,
            adapter_rank: 16,
            context: 256,
            full_prefix_attention: false,
        }
    }
}

/// Bottleneck `x + up(gelu(down(x)))` with `up` initialised to zero.
#[derive(Clone, Debug)]
pub struct Adapter {
    pub down: Linear,
    pub up: Linear,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
    pub adapter: Adapter,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub embed: ParamId,
    pub blocks: Vec<Block>,
    pub final_norm: LayerNorm,
}

impl Backbone {
    pub fn build(cfg: &BackboneConfig, b: &mut Builder<'_>) -> Result<Backbone> {
        let d = cfg.dim;
        if d == 0 || cfg.heads == 0 || d % cfg.heads != 0 || cfg.adapter_rank == 0 {
            return Err(Error::contract("backbone width must be a positive multiple of heads"));
        }
        let mut base = b.group("backbone.base");
        let embed = base.normal("embed", &[tokenizer::VOCAB, d], 1.0)?;
        let final_norm = LayerNorm::new(&mut base, "final_norm", d)?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let name = format!("block{i}");
            let mut base = b.group("backbone.base");
            let mut s = base.scope(&name);
            let ln1 = LayerNorm::new(&mut s, "ln1", d)?;
            let attn = SelfAttention::new(&mut s, "attn", d, cfg.heads)?;
            let ln2 = LayerNorm::new(&mut s, "ln2", d)?;
            let ffn = FeedForward::new(&mut s, "ffn", d, cfg.expansion * d, d)?;
            let mut ad = b.group("backbone.adapter");
            let mut s = ad.scope(&name);
            let down = Linear::new(&mut s, "down", d, cfg.adapter_rank, true)?;
            let up = Linear {
                w: s.zeros("up.w", &[cfg.adapter_rank, d])?,
                b: Some(s.zeros("up.b", &[d])?),
            };
            blocks.push(Block {
                ln1,
                attn,
                ln2,
                ffn,
                adapter: Adapter { down, up },
            });
        }
        Ok(Backbone {
            config: cfg.clone(),
            embed,
            blocks,
            final_norm,
        })
    }

    /// `[s | embed(prompt)]` and the boundary index `N`.
    pub fn assemble<F: Real>(&self, t: &mut Tape<'_, F>, s: Var, prompt: &[usize]) -> Result<(Var, usize)> {
        let n = t.dims(s)[0];
        if prompt.is_empty() {
            return Ok((s, n));
        }
        let table = t.param(self.embed)?;
        let p = t.embedding(table, prompt)?;
        Ok((t.concat(&[s, p], 0)?, n))
    }

    pub fn mask(&self, boundary: usize) -> AttentionMask {
        AttentionMask::Causal {
            full_prefix: if self.config.full_prefix_attention { boundary } else { 0 },
        }
    }

    /// Hidden states before the final norm, same shape as `x`.
    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, x: Var, boundary: usize) -> Result<Var> {
        let len = t.dims(x)[0];
        if len == 0 {
            return Err(Error::contract("empty assembled sequence"));
        }
        if len > self.config.context {
            return Err(Error::contract(format!(
                "sequence length {len} exceeds context {}",
                self.config.context
            )));
        }
        let mask = self.mask(boundary);
        let mut x = x;
        for blk in &self.blocks {
            let h = blk.ln1.forward(t, x)?;
            let h = add_positions(t, h)?;
            let h = blk.attn.forward(t, h, mask)?;
            x = t.add(x, h)?;
            let h = blk.ln2.forward(t, x)?;
            let h = blk.ffn.forward(t, h)?;
            x = t.add(x, h)?;
            let a = blk.adapter.down.forward(t, x)?;
            let a = t.gelu(a)?;
            let a = blk.adapter.up.forward(t, a)?;
            x = t.add(x, a)?;
        }
        Ok(x)
    }

    pub fn readout<F: Real>(&self, t: &mut Tape<'_, F>, h: Var) -> Result<Var> {
        self.final_norm.forward(t, h)
    }
}
