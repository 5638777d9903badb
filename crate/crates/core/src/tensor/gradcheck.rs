use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Finite-difference formula for the numeric derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, truncation error `O(h^2)`.
    Three,
    /// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, truncation error `O(h^4)`.
    Five,
}

/// Settings for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Number of scalar parameters to probe.
    pub samples: usize,
    /// Finite-difference step.
    pub epsilon: f64,
    pub stencil: Stencil,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator. Gradients smaller than
    /// this are compared in absolute terms, where finite differences are
    /// dominated by rounding.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            samples: 100,
            epsilon: 1e-5,
            stencil: Stencil::Three,
            tolerance: 1e-6,
            floor: 1e-4,
            seed: 0,
        }
    }
}

/// One probed scalar.
#[derive(Clone, Debug, Serialize)]
pub struct GradProbe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub loss: f64,
    pub worst: Option<GradProbe>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<M>(store: &ParamStore<f64>, forward: &mut M) -> Result<f64>
where
    M: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::with_store(store);
    let loss = forward(&mut tape)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: tape.dims(loss).to_vec(),
            rhs: vec![1],
        });
    }
    Ok(tape.scalar(loss))
}

/// Compares tape gradients against central differences on randomly chosen
/// trainable scalars.
///
/// Probes are stratified: trainable tensors are visited round-robin in a
/// shuffled order, then an element is drawn uniformly within the tensor, so
/// every tensor is covered once `samples` reaches the tensor count. The store
/// is restored bit-exactly before returning.
pub fn grad_check<M>(store: &mut ParamStore<f64>, mut forward: M, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    M: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::with_store(&*store);
        let loss = forward(&mut tape)?;
        tape.backward(loss)?
    };
    grad_check_with(store, forward, |id, i| grads.get(id).map_or(0.0, |g| g[i]), cfg)
}

/// Like [`grad_check`] but with analytic gradients supplied by `analytic`,
/// for instance from a lower-precision tape.
pub fn grad_check_with<M, A>(
    store: &mut ParamStore<f64>,
    mut forward: M,
    analytic: A,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    M: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
    A: Fn(ParamId, usize) -> f64,
{
    if cfg.samples == 0 || !(cfg.epsilon > 0.0) {
        return Err(Error::contract("grad_check needs samples > 0 and epsilon > 0"));
    }
    let base = evaluate(store, &mut forward)?;
    let again = evaluate(store, &mut forward)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::contract(format!(
            "non-deterministic forward: {base:e} then {again:e}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<ParamId> = store.trainable().filter(|&id| store.get(id).numel() > 0).collect();
    if order.is_empty() {
        return Err(Error::contract("grad_check found no trainable parameters"));
    }
    order.shuffle(&mut rng);

    let mut worst: Option<GradProbe> = None;
    for s in 0..cfg.samples {
        let id = order[s % order.len()];
        let index = rng.random_range(0..store.get(id).numel());
        let analytic = analytic(id, index);

        let orig = store.get(id).data()[index];
        let h = cfg.epsilon;
        let mut at = |dx: f64| {
            store.get_mut(id).data_mut()[index] = orig + dx;
            let v = evaluate(store, &mut forward);
            store.get_mut(id).data_mut()[index] = orig;
            v
        };
        let numeric = match cfg.stencil {
            Stencil::Three => (at(h)? - at(-h)?) / (2.0 * h),
            Stencil::Five => (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h),
        };

        let rel_err = relative_error(analytic, numeric, cfg.floor);
        if worst.as_ref().is_none_or(|w| rel_err > w.rel_err) {
            worst = Some(GradProbe {
                param: store.name(id).to_string(),
                index,
                analytic,
                numeric,
                rel_err,
            });
        }
    }

    let max_rel_err = worst.as_ref().map_or(0.0, |w| w.rel_err);
    Ok(GradCheckReport {
        checked: cfg.samples,
        max_rel_err,
        tolerance: cfg.tolerance,
        passed: max_rel_err < cfg.tolerance,
        loss: base,
        worst,
    })
}
