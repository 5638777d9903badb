use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamW, AdamWConfig, FreezePolicy, ScheduleSpec};
use crate::data::{checkpoint, Dataset};
use crate::error::{Error, Result};
use crate::fsio;
use crate::model::{Example, Model, ModelConfig, Preset};
use crate::modality::Modality;
use crate::prompts::{PromptMode, PromptRegistry};
use crate::tensor::{ParamStore, Tape};

/// Desk schedule: 150 epochs over an 8-sample, batch-4 set is 300 steps.
pub const DESK_MAX_LR: f64 = 3e-3;
pub const DESK_EPOCHS: usize = 150;
pub const DESK_WARMUP_EPOCHS: usize = 5;

fn default_batch() -> usize {
    4
}

fn default_clip() -> Option<f64> {
    Some(1.0)
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub modality: Modality,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    /// Overrides of the preset schedule.
    #[serde(default)]
    pub max_lr: Option<f64>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub warmup_epochs: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Global gradient-norm clip; `null` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    /// Replaces the default freeze policy when present.
    #[serde(default)]
    pub freeze: Option<FreezePolicy>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write an intermediate checkpoint every this many epochs.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl RunConfig {
    pub fn new(modality: Modality, preset: Preset, seed: u64) -> Self {
        RunConfig {
            modality,
            preset,
            seed,
            max_lr: None,
            max_epochs: None,
            warmup_epochs: None,
            batch_size: default_batch(),
            clip_norm: default_clip(),
            optimizer: AdamWConfig::default(),
            freeze: None,
            data: None,
            output: None,
            checkpoint_every: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&fsio::read(path)?).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size.max(1))
    }

    pub fn schedule(&self, steps_per_epoch: usize) -> ScheduleSpec {
        let base = match self.preset {
            Preset::Desk => ScheduleSpec {
                max_lr: DESK_MAX_LR,
                max_epochs: DESK_EPOCHS,
                warmup_epochs: DESK_WARMUP_EPOCHS,
                steps_per_epoch,
            },
            Preset::Paper => ScheduleSpec::table2(self.modality, steps_per_epoch),
        };
        let max_epochs = self.max_epochs.unwrap_or(base.max_epochs);
        // A default warmup shrinks to fit a shortened run; an explicit one is kept.
        let warmup_epochs = self
            .warmup_epochs
            .unwrap_or_else(|| base.warmup_epochs.min(max_epochs.saturating_sub(1)));
        ScheduleSpec {
            max_lr: self.max_lr.unwrap_or(base.max_lr),
            max_epochs,
            warmup_epochs,
            steps_per_epoch,
        }
    }

    /// Model layout for this run: the preset with the dataset's head.
    pub fn model_config(&self, data: &Dataset) -> ModelConfig {
        let mut cfg = ModelConfig::preset(self.preset);
        cfg.heads.insert(self.modality, data.task.head());
        if let Some(f) = &self.freeze {
            cfg.freeze = f.clone();
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainOutput {
    pub model: Model,
    pub store: ParamStore,
    pub curve: Vec<StepRecord>,
    pub schedule: ScheduleSpec,
}

/// Builds a model for `data` and fits its data-dependent buffers.
pub fn prepare(run: &RunConfig, data: &Dataset) -> Result<(Model, ParamStore)> {
    if data.modality != run.modality {
        return Err(Error::contract(format!(
            "run is for {} but the dataset holds {}",
            run.modality, data.modality
        )));
    }
    data.validate()?;
    let cfg = run.model_config(data);
    let (model, mut store) = Model::build(&cfg, &[run.modality], run.seed)?;
    model.fit(&mut store, &data.examples)?;
    Ok((model, store))
}

/// Forward, backward and one optimizer update over `batch`. Returns the
/// mean loss before the update.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &Model,
    store: &mut ParamStore,
    opt: &mut AdamW,
    batch: &[&Example],
    lr: f64,
    clip_norm: Option<f64>,
    prompts: &PromptRegistry,
    mode: PromptMode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    store.zero_grad();
    let inv = 1.0 / batch.len() as f32;
    let mut total = 0.0;
    for ex in batch {
        let prompt = prompts.select_tokens(ex.sample.modality(), mode, rng)?;
        let grads = {
            let mut t = Tape::with_store(store);
            let l = model.loss(&mut t, ex, &prompt)?;
            total += t.scalar(l) as f64;
            let l = t.scale(l, inv)?;
            t.backward(l)?
        };
        store.accumulate(&grads)?;
    }
    if let Some(c) = clip_norm {
        store.clip_grad_norm(c as f32);
    }
    opt.step(store, lr)?;
    Ok(total / batch.len() as f64)
}

/// Mean loss over every example with eval prompts.
pub fn dataset_loss(model: &Model, store: &ParamStore, data: &[Example], prompts: &PromptRegistry) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for ex in data {
        let prompt = prompts.select_tokens(ex.sample.modality(), PromptMode::Eval, &mut rng)?;
        let mut t = Tape::with_store(store);
        let l = model.loss(&mut t, ex, &prompt)?;
        total += t.scalar(l) as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

fn tag_step(e: Error, step: usize, m: Modality) -> Error {
    match e {
        Error::NonFinite { op } => Error::NonFinite {
            op: format!("training step {step} ({m}): {op}"),
        },
        e => e,
    }
}

/// The full loop: shuffle each epoch, train-mode prompts, scheduled lr.
/// With `run.output` set, intermediate checkpoints go to
/// `output/checkpoints/epoch_NNNN`.
pub fn train(run: &RunConfig, data: &Dataset, prompts: &PromptRegistry) -> Result<TrainOutput> {
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let (model, mut store) = prepare(run, data)?;
    let spe = run.steps_per_epoch(data.len());
    let schedule = run.schedule(spe);
    schedule.validate()?;
    let mut opt = AdamW::new(run.optimizer);
    let mut order_rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(0x9e37_79b9));
    let mut prompt_rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(0x7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(schedule.total_steps());
    let mut step = 0;
    for epoch in 0..schedule.max_epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(run.batch_size.max(1)) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.examples[i]).collect();
            let lr = schedule.lr_at(step)?;
            let loss = train_step(
                &model,
                &mut store,
                &mut opt,
                &batch,
                lr,
                run.clip_norm,
                prompts,
                PromptMode::Train,
                &mut prompt_rng,
            )
            .map_err(|e| tag_step(e, step, run.modality))?;
            curve.push(StepRecord { step, lr, loss });
            step += 1;
        }
        if let (Some(out), Some(every)) = (&run.output, run.checkpoint_every) {
            if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < schedule.max_epochs {
                let dir = out.join("checkpoints").join(format!("epoch_{:04}", epoch + 1));
                checkpoint::save(&dir, &model, &store, run.seed)?;
            }
        }
    }
    Ok(TrainOutput {
        model,
        store,
        curve,
        schedule,
    })
}

/// `step,lr,loss` with a header row.
pub fn curve_csv(curve: &[StepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["step", "lr", "loss"])?;
    for r in curve {
        w.write_record([r.step.to_string(), r.lr.to_string(), r.loss.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::contract(e.to_string()))
}

/// Writes `loss.csv`, `run.json` and the final `checkpoint/` under `dir`.
pub fn write_outputs(dir: &Path, run: &RunConfig, out: &TrainOutput) -> Result<()> {
    fsio::write_atomic(&dir.join("loss.csv"), &curve_csv(&out.curve)?)?;
    let mut json = serde_json::to_vec_pretty(run)?;
    json.push(b'\n');
    fsio::write_atomic(&dir.join("run.json"), &json)?;
    checkpoint::save(&dir.join("checkpoint"), &out.model, &out.store, run.seed)
}
