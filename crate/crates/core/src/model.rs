//! The assembled pipeline: encoder, bridge, backbone and head per modality.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig};
use crate::bridge::{Bridge, BridgeConfig};
use crate::encoders::{fit_bin_edges, ColumnKind, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::heads::{self, Head, HeadKind, Pooling};
use crate::modality::{Modality, ModalitySample};
use crate::nn::Builder;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};
use crate::tokenizer;
use crate::train::FreezePolicy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    /// Paper encoder depths and schedules, at desk widths.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::contract(format!("unknown preset `{s}`, expected desk or paper"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub encoders: EncoderConfig,
    pub bridge: BridgeConfig,
    pub backbone: BackboneConfig,
    pub heads: BTreeMap<Modality, HeadKind>,
    pub pooling: Pooling,
    pub freeze: FreezePolicy,
}

/// Task head used for each modality's synthetic task.
pub fn default_head(m: Modality) -> HeadKind {
    match m {
        Modality::Text => HeadKind::Classify { classes: 2 },
        Modality::Code => HeadKind::TextDecode,
        Modality::Rgb | Modality::Msi | Modality::Sar | Modality::Hsi | Modality::Infrared | Modality::Video => {
            HeadKind::Classify { classes: 4 }
        }
        Modality::PointCloud => HeadKind::Classify { classes: 3 },
        Modality::Table => HeadKind::Regress { outputs: 1 },
        Modality::Trajectory => HeadKind::Regress { outputs: 8 },
        Modality::Graph => HeadKind::Regress { outputs: 8 },
        Modality::Oblique => HeadKind::DepthRegress { height: 2, width: 2 },
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            preset: Preset::Desk,
            encoders: EncoderConfig::desk(),
            bridge: BridgeConfig::default(),
            backbone: BackboneConfig::default(),
            heads: Modality::ALL.into_iter().map(|m| (m, default_head(m))).collect(),
            pooling: Pooling::LastToken,
            freeze: FreezePolicy::default(),
        }
    }

    pub fn paper() -> Self {
        ModelConfig {
            preset: Preset::Paper,
            encoders: EncoderConfig::paper(),
            ..Self::desk()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    pub fn head(&self, m: Modality) -> HeadKind {
        self.heads.get(&m).copied().unwrap_or_else(|| default_head(m))
    }
}

/// Supervision for one sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
    Text(String),
}

/// A model output in target units.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Class(usize),
    Values(Vec<f64>),
    Text(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sample: ModalitySample,
    pub target: Target,
}

/// Tape handles from one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Pass {
    /// Encoder output `n x d`.
    pub tokens: Var,
    /// Bridge output `N x D`.
    pub bridged: Var,
    pub assembled: Var,
    /// Index of the first prompt row.
    pub boundary: usize,
    /// Final-normed hidden states, same length as `assembled`.
    pub hidden: Var,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub encoders: BTreeMap<Modality, Encoder>,
    pub bridge: Bridge,
    pub backbone: Backbone,
    pub heads: BTreeMap<Modality, Head>,
}

impl Model {
    /// Builds parameters for `modalities` from `seed` and applies the freeze
    /// policy. Registration order is fixed, so equal inputs give equal stores.
    pub fn build(config: &ModelConfig, modalities: &[Modality], seed: u64) -> Result<(Model, ParamStore)> {
        config.encoders.validate()?;
        if modalities.is_empty() {
            return Err(Error::contract("model needs at least one modality"));
        }
        let mut ms = modalities.to_vec();
        ms.sort();
        ms.dedup();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut store, &mut rng, "model");
        let mut encoders = BTreeMap::new();
        for &m in &ms {
            encoders.insert(m, Encoder::build(m, &config.encoders, &mut b)?);
        }
        let widths: Vec<_> = ms.iter().map(|&m| (m, config.encoders.width)).collect();
        let bridge = Bridge::build(&config.bridge, &widths, &mut b)?;
        if config.bridge.dim != config.backbone.dim {
            return Err(Error::contract("bridge width must equal backbone width"));
        }
        let backbone = Backbone::build(&config.backbone, &mut b)?;
        let mut heads = BTreeMap::new();
        for &m in &ms {
            heads.insert(m, Head::build(m, config.head(m), config.pooling, config.backbone.dim, &mut b)?);
        }
        config.freeze.apply(&mut store);
        Ok((
            Model {
                config: config.clone(),
                encoders,
                bridge,
                backbone,
                heads,
            },
            store,
        ))
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.encoders.keys().copied().collect()
    }

    fn encoder(&self, m: Modality) -> Result<&Encoder> {
        self.encoders
            .get(&m)
            .ok_or_else(|| Error::contract(format!("model was not built for {m}")))
    }

    fn head(&self, m: Modality) -> Result<&Head> {
        self.heads
            .get(&m)
            .ok_or_else(|| Error::contract(format!("model has no head for {m}")))
    }

    /// Encoder then bridge: `N x D`.
    pub fn bridged<F: Real>(&self, t: &mut Tape<'_, F>, sample: &ModalitySample) -> Result<(Var, Var)> {
        let m = sample.modality();
        let tokens = self.encoder(m)?.encode(t, sample)?;
        let s = self.bridge.forward(t, m, tokens)?;
        Ok((tokens, s))
    }

    /// Full forward over `[bridged | embed(seq)]`.
    pub fn run<F: Real>(&self, t: &mut Tape<'_, F>, sample: &ModalitySample, seq: &[usize]) -> Result<Pass> {
        let (tokens, bridged) = self.bridged(t, sample)?;
        let (assembled, boundary) = self.backbone.assemble(t, bridged, seq)?;
        let h = self.backbone.forward(t, assembled, boundary)?;
        let hidden = self.backbone.readout(t, h)?;
        Ok(Pass {
            tokens,
            bridged,
            assembled,
            boundary,
            hidden,
        })
    }

    fn scale_values<F: Real>(&self, t: &mut Tape<'_, F>, head: &Head) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, std) = head.scale.ok_or_else(|| Error::contract("head has no target scale"))?;
        let mean = t.param(mean)?;
        let std = t.param(std)?;
        Ok((t.tensor(mean).to_f64_vec(), t.tensor(std).to_f64_vec()))
    }

    /// Scalar training loss for one example: cross-entropy for classes and
    /// text, mean squared error on normalised values for regression.
    pub fn loss<F: Real>(&self, t: &mut Tape<'_, F>, ex: &Example, prompt: &[usize]) -> Result<Var> {
        let m = ex.sample.modality();
        let head = self.head(m)?;
        match (head.kind, &ex.target) {
            (HeadKind::Classify { classes }, Target::Class(c)) => {
                if *c >= classes {
                    return Err(Error::Index {
                        what: "class label",
                        index: *c,
                        size: classes,
                    });
                }
                let pass = self.run(t, &ex.sample, prompt)?;
                let logits = head.forward(t, pass.hidden, pass.boundary)?;
                t.cross_entropy(logits, &[*c])
            }
            (HeadKind::Regress { .. } | HeadKind::DepthRegress { .. }, Target::Values(y)) => {
                if y.len() != head.kind.outputs() {
                    return Err(Error::Shape {
                        op: "regression target",
                        lhs: vec![y.len()],
                        rhs: vec![head.kind.outputs()],
                    });
                }
                let pass = self.run(t, &ex.sample, prompt)?;
                let z = head.forward(t, pass.hidden, pass.boundary)?;
                let (mean, std) = self.scale_values(t, head)?;
                let zt: Vec<F> = heads::normalize(y, &mean, &std).into_iter().map(F::of).collect();
                t.mse(z, &zt)
            }
            (HeadKind::TextDecode, Target::Text(s)) => {
                let target = tokenizer::tokenize(s.as_bytes());
                let mut seq = prompt.to_vec();
                seq.push(tokenizer::BOS);
                seq.extend_from_slice(&target);
                let mut labels = target;
                labels.push(tokenizer::EOS);
                let pass = self.run(t, &ex.sample, &seq)?;
                let start = pass.boundary + prompt.len();
                let rows = t.slice(pass.hidden, 0, start, labels.len())?;
                let logits = head.linear.forward(t, rows)?;
                t.cross_entropy(logits, &labels)
            }
            _ => Err(Error::contract(format!("target kind does not match the {m} head"))),
        }
    }

    /// Point prediction in target units. Text is decoded greedily up to
    /// `max_text` bytes.
    pub fn predict<F: Real>(
        &self,
        store: &ParamStore<F>,
        sample: &ModalitySample,
        prompt: &[usize],
        max_text: usize,
    ) -> Result<Prediction> {
        let head = self.head(sample.modality())?;
        if head.kind == HeadKind::TextDecode {
            let ids = self.decode_text(store, sample, prompt, max_text)?;
            return Ok(Prediction::Text(String::from_utf8_lossy(&tokenizer::detokenize(&ids)).into_owned()));
        }
        let mut t = Tape::with_store(store);
        let pass = self.run(&mut t, sample, prompt)?;
        let out = head.forward(&mut t, pass.hidden, pass.boundary)?;
        let out = t.tensor(out).to_f64_vec();
        Ok(match head.kind {
            HeadKind::Classify { .. } => Prediction::Class(heads::argmax(&out)),
            _ => {
                let (mean, std) = self.scale_values(&mut t, head)?;
                Prediction::Values(heads::unscale(&out, &mean, &std))
            }
        })
    }

    /// Greedy continuation after `[bridged | prompt | BOS]`, stopping at EOS
    /// (not included) or after `max_len` ids.
    pub fn decode_text<F: Real>(
        &self,
        store: &ParamStore<F>,
        sample: &ModalitySample,
        prompt: &[usize],
        max_len: usize,
    ) -> Result<Vec<usize>> {
        let head = self.head(sample.modality())?;
        let mut out = Vec::new();
        if max_len == 0 {
            return Ok(out);
        }
        let s = {
            let mut t = Tape::with_store(store);
            let (_, s) = self.bridged(&mut t, sample)?;
            t.tensor(s)
        };
        let mut seq = prompt.to_vec();
        seq.push(tokenizer::BOS);
        while out.len() < max_len {
            let mut t = Tape::with_store(store);
            let sv = t.input(s.clone());
            let (x, boundary) = self.backbone.assemble(&mut t, sv, &seq)?;
            let h = self.backbone.forward(&mut t, x, boundary)?;
            let len = t.dims(h)[0];
            let last = t.slice(h, 0, len - 1, 1)?;
            let last = self.backbone.readout(&mut t, last)?;
            let logits = head.linear.forward(&mut t, last)?;
            let next = heads::argmax(&t.tensor(logits).to_f64_vec());
            if next == tokenizer::EOS {
                break;
            }
            out.push(next);
            seq.push(next);
        }
        Ok(out)
    }

    /// Mean per-token negative log-likelihood of `text` as the continuation.
    pub fn text_nll<F: Real>(&self, store: &ParamStore<F>, sample: &ModalitySample, prompt: &[usize], text: &str) -> Result<f64> {
        let ex = Example {
            sample: sample.clone(),
            target: Target::Text(text.to_string()),
        };
        let mut t = Tape::with_store(store);
        let l = self.loss(&mut t, &ex, prompt)?;
        Ok(t.scalar(l).as_f64())
    }

    /// Fits data-dependent buffers: table bin edges from continuous columns
    /// and regression target mean and std. A constant target gets std 1.
    pub fn fit(&self, store: &mut ParamStore, data: &[Example]) -> Result<()> {
        if let Some(Encoder::Table(enc)) = self.encoders.get(&Modality::Table) {
            let rows: Vec<&Tensor> = data
                .iter()
                .filter_map(|e| match &e.sample {
                    ModalitySample::Table(x) => Some(x),
                    _ => None,
                })
                .collect();
            if !rows.is_empty() {
                let stride = enc.bins - 1;
                let mut edges = Vec::new();
                for (c, kind) in enc.columns.iter().enumerate() {
                    if *kind == ColumnKind::Continuous {
                        let vals: Vec<f64> = rows.iter().filter_map(|r| r.data().get(c)).map(|&v| v as f64).collect();
                        edges.extend(fit_bin_edges(&vals, enc.bins).into_iter().map(|e| e as f32));
                    }
                }
                let buf = store.get_mut(enc.edges);
                if edges.len() == buf.numel() && edges.len() % stride == 0 {
                    buf.data_mut().copy_from_slice(&edges);
                }
            }
        }
        for (&m, head) in &self.heads {
            let Some((mean_id, std_id)) = head.scale else { continue };
            let ys: Vec<&Vec<f64>> = data
                .iter()
                .filter(|e| e.sample.modality() == m)
                .filter_map(|e| match &e.target {
                    Target::Values(v) => Some(v),
                    _ => None,
                })
                .collect();
            if ys.is_empty() {
                continue;
            }
            let k = head.kind.outputs();
            if ys.iter().any(|y| y.len() != k) {
                return Err(Error::contract(format!("{m} targets must have {k} values")));
            }
            let n = ys.len() as f64;
            let mut mean = vec![0.0; k];
            let mut std = vec![0.0; k];
            for j in 0..k {
                mean[j] = ys.iter().map(|y| y[j]).sum::<f64>() / n;
                let var = ys.iter().map(|y| (y[j] - mean[j]).powi(2)).sum::<f64>() / n;
                std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            }
            for (id, vals) in [(mean_id, mean), (std_id, std)] {
                for (d, v) in store.get_mut(id).data_mut().iter_mut().zip(vals) {
                    *d = v as f32;
                }
            }
        }
        Ok(())
    }
}
