//! Learnable-query cross-attention from `n x d` modality tokens onto a fixed
//! `N x D` block in the language width.
//!
//! A single layer computes
//! `FFN(softmax(Q Wq (t Wk)^T / sqrt(D)) (t Wv))` with no residual path.
//! Deeper stacks use pre-norm residual layers where the running `N x D`
//! state replaces `Q`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{Builder, FeedForward, LayerNorm};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};

/// Language width of the full-scale backbone.
pub const PAPER_LANGUAGE_DIM: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Query count `N`.
    pub queries: usize,
    /// Output width `D`.
    pub dim: usize,
    /// Attention width.
    pub hidden: usize,
    pub layers: usize,
    /// FFN expansion factor.
    pub expansion: usize,
    /// Residual pre-norm wiring; only meaningful with more than one layer.
    pub residual: bool,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            queries: 8,
            dim: 64,
            hidden: 64,
            layers: 2,
            expansion: 4,
            residual: true,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 || self.dim == 0 || self.hidden == 0 || self.layers == 0 || self.expansion == 0 {
            return Err(Error::contract("bridge sizes must be positive"));
        }
        Ok(())
    }

    fn residual_layers(&self) -> bool {
        self.residual && self.layers > 1
    }
}

#[derive(Clone, Debug)]
struct Layer {
    wq: ParamId,
    ffn: FeedForward,
    /// Present with residual wiring.
    wo: Option<ParamId>,
    norms: Option<(LayerNorm, LayerNorm)>,
}

#[derive(Clone, Debug)]
pub struct Bridge {
    pub config: BridgeConfig,
    pub queries: ParamId,
    layers: Vec<Layer>,
    /// Per-modality `(Wk, Wv)` per layer, each `d x hidden`.
    kv: BTreeMap<Modality, (usize, Vec<(ParamId, ParamId)>)>,
}

impl Bridge {
    /// Registers the shared queries and layers plus key/value projections for
    /// each `(modality, token width)` pair, under group `bridge`.
    pub fn build(cfg: &BridgeConfig, inputs: &[(Modality, usize)], b: &mut Builder<'_>) -> Result<Bridge> {
        cfg.validate()?;
        let mut b = b.group("bridge");
        let (dim, hidden) = (cfg.dim, cfg.hidden);
        let queries = b.normal("queries", &[cfg.queries, dim], 1.0)?;
        let residual = cfg.residual_layers();
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut s = b.scope(&format!("layer{l}"));
            let wq = s.weight("wq", &[dim, hidden], dim)?;
            let layer = if residual {
                Layer {
                    wq,
                    wo: Some(s.weight("wo", &[hidden, dim], hidden)?),
                    ffn: FeedForward::new(&mut s, "ffn", dim, cfg.expansion * dim, dim)?,
                    norms: Some((LayerNorm::new(&mut s, "ln_attn", dim)?, LayerNorm::new(&mut s, "ln_ffn", dim)?)),
                }
            } else {
                Layer {
                    wq,
                    wo: None,
                    ffn: FeedForward::new(&mut s, "ffn", hidden, cfg.expansion * dim, dim)?,
                    norms: None,
                }
            };
            layers.push(layer);
        }
        let mut kv = BTreeMap::new();
        for &(m, d) in inputs {
            let mut s = b.scope(&format!("kv.{m}"));
            let per_layer = (0..cfg.layers)
                .map(|l| Ok((s.weight(&format!("{l}.wk"), &[d, hidden], d)?, s.weight(&format!("{l}.wv"), &[d, hidden], d)?)))
                .collect::<Result<Vec<_>>>()?;
            kv.insert(m, (d, per_layer));
        }
        Ok(Bridge {
            config: cfg.clone(),
            queries,
            layers,
            kv,
        })
    }

    fn run<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, tokens: Var, mut capture: Option<&mut Vec<Var>>) -> Result<Var> {
        let (d, kv) = self
            .kv
            .get(&m)
            .ok_or_else(|| Error::contract(format!("bridge has no projections for {m}")))?;
        let dims = t.dims(tokens).to_vec();
        if dims.len() != 2 || dims[1] != *d {
            return Err(Error::Shape {
                op: "bridge",
                lhs: dims,
                rhs: vec![0, *d],
            });
        }
        if dims[0] == 0 {
            return Err(Error::contract("bridge input has no tokens"));
        }
        let scale = 1.0 / (self.config.dim as f64).sqrt();
        let mut x = t.param(self.queries)?;
        for (layer, &(wk, wv)) in self.layers.iter().zip(kv) {
            let (wk, wv, wq) = (t.param(wk)?, t.param(wv)?, t.param(layer.wq)?);
            let k = t.matmul(tokens, wk)?;
            let v = t.matmul(tokens, wv)?;
            let q_in = match &layer.norms {
                Some((ln, _)) => ln.forward(t, x)?,
                None => x,
            };
            let q = t.matmul(q_in, wq)?;
            let scores = t.matmul_t(q, false, k, true)?;
            let scores = t.scale(scores, F::of(scale))?;
            let w = t.softmax_rows(scores)?;
            if let Some(c) = capture.as_deref_mut() {
                c.push(w);
            }
            let a = t.matmul(w, v)?;
            x = match (&layer.norms, layer.wo) {
                (Some((_, ln_ffn)), Some(wo)) => {
                    let wo = t.param(wo)?;
                    let a = t.matmul(a, wo)?;
                    let x1 = t.add(x, a)?;
                    let h = ln_ffn.forward(t, x1)?;
                    let h = layer.ffn.forward(t, h)?;
                    t.add(x1, h)?
                }
                _ => layer.ffn.forward(t, a)?,
            };
        }
        Ok(x)
    }

    /// `n x d` tokens to `N x D`.
    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, tokens: Var) -> Result<Var> {
        self.run(t, m, tokens, None)
    }

    /// The `N x n` softmax matrix of `layer`.
    pub fn attention_weights<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, tokens: Var, layer: usize) -> Result<Tensor<F>> {
        if layer >= self.layers.len() {
            return Err(Error::Index {
                what: "bridge layer",
                index: layer,
                size: self.layers.len(),
            });
        }
        let mut caps = Vec::new();
        self.run(t, m, tokens, Some(&mut caps))?;
        Ok(t.tensor(caps[layer]))
    }

    pub fn input_width(&self, m: Modality) -> Option<usize> {
        self.kv.get(&m).map(|(d, _)| *d)
    }
}
