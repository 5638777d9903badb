use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with decoupled weight decay. Moments are kept in `f64` and only for
/// parameters that have been trainable at some step.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    state: BTreeMap<ParamId, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn has_state(&self, id: ParamId) -> bool {
        self.state.contains_key(&id)
    }

    pub fn state_len(&self) -> usize {
        self.state.len()
    }

    /// One update from the gradients held in `store`. Every gradient is
    /// checked before anything changes, so a non-finite value leaves the
    /// parameters and moments untouched.
    pub fn step<F: Real>(&mut self, store: &mut ParamStore<F>, lr: f64) -> Result<()> {
        let ids: Vec<ParamId> = store.trainable().collect();
        for &id in &ids {
            let g = store.get(id).grad().unwrap_or(&[]);
            if g.iter().any(|x| !x.as_f64().is_finite()) {
                return Err(Error::NonFinite {
                    op: format!("gradient in group `{}` ({})", store.group(id), store.name(id)),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - lr * c.weight_decay;
        for id in ids {
            let p = store.get_mut(id);
            let n = p.numel();
            let st = self.state.entry(id).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let g: Vec<f64> = p.grad().map(|g| g.iter().map(|x| x.as_f64()).collect()).unwrap_or_else(|| vec![0.0; n]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g[i];
                st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                let x = w.as_f64() * decay - lr * mhat / (vhat.sqrt() + c.eps);
                *w = F::of(x);
            }
        }
        Ok(())
    }
}
