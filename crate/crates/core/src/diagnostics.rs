//! End-to-end gradient checks and shape inspection for one example.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Example, Model};
use crate::modality::Modality;
use crate::tensor::{grad_check, grad_check_with, init, GradCheckConfig, GradCheckReport, ParamId, ParamStore, Stencil, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    /// Pass threshold on the relative error.
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::F32 => 1e-4,
            Precision::F64 => 1e-6,
        }
    }

    /// Probe settings for a full pipeline at this precision.
    pub fn config(self, samples: usize, seed: u64) -> GradCheckConfig {
        GradCheckConfig {
            samples,
            epsilon: 1e-3,
            stencil: Stencil::Five,
            tolerance: self.tolerance(),
            floor: 1e-4,
            seed,
        }
    }
}

/// Scale of the noise written into zero-initialised adapter up-projections
/// before checking, so the adapter down-projections receive gradient.
pub const ADAPTER_JITTER: f64 = 0.02;

fn jittered(store: &ParamStore, seed: u64) -> ParamStore<f64> {
    let mut s = store.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = s.ids().collect();
    for id in ids {
        let name = s.name(id);
        if s.group(id) == "backbone.adapter" && (name.ends_with("up.w") || name.ends_with("up.b")) {
            let dims = s.get(id).dims().to_vec();
            let noise = init::normal::<f64>(&dims, ADAPTER_JITTER, &mut rng);
            // Round through f32 so both precisions see identical values.
            for (d, v) in s.get_mut(id).data_mut().iter_mut().zip(noise.data()) {
                *d = *v as f32 as f64;
            }
        }
    }
    s
}

/// Gradient check of `loss(example)` over trainable parameters.
///
/// At 64-bit, tape gradients are compared with 64-bit central differences.
/// At 32-bit, gradients from a 32-bit tape are compared with 64-bit central
/// differences on the same values.
pub fn pipeline_grad_check(
    model: &Model,
    store: &ParamStore,
    ex: &Example,
    prompt: &[usize],
    precision: Precision,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut s64 = jittered(store, cfg.seed);
    let forward = |t: &mut Tape<'_, f64>| model.loss(t, ex, prompt);
    match precision {
        Precision::F64 => grad_check(&mut s64, forward, cfg),
        Precision::F32 => {
            let s32 = s64.cast::<f32>();
            let grads: BTreeMap<ParamId, Vec<f64>> = {
                let mut t = Tape::with_store(&s32);
                let l = model.loss(&mut t, ex, prompt)?;
                t.backward(l)?
                    .iter()
                    .map(|(id, g)| (id, g.iter().map(|&v| v as f64).collect()))
                    .collect()
            };
            grad_check_with(&mut s64, forward, |id, i| grads.get(&id).map_or(0.0, |g| g[i]), cfg)
        }
    }
}

/// Shapes through encoder, bridge and assembly for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub modality: Modality,
    pub tokens: Vec<usize>,
    pub bridged: Vec<usize>,
    pub prompt_len: usize,
    pub boundary: usize,
    pub assembled_len: usize,
    pub hidden: Vec<usize>,
}

pub fn inspect(model: &Model, store: &ParamStore, ex: &Example, prompt: &[usize]) -> Result<ShapeReport> {
    let mut t = Tape::with_store(store);
    let pass = model.run(&mut t, &ex.sample, prompt)?;
    Ok(ShapeReport {
        modality: ex.sample.modality(),
        tokens: t.dims(pass.tokens).to_vec(),
        bridged: t.dims(pass.bridged).to_vec(),
        prompt_len: prompt.len(),
        boundary: pass.boundary,
        assembled_len: t.dims(pass.assembled)[0],
        hidden: t.dims(pass.hidden).to_vec(),
    })
}
