//! Task heads over backbone hidden states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{Builder, Linear};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};
use crate::tokenizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Classify { classes: usize },
    /// Linear regression with a fixed de-normalisation `y = z * std + mean`.
    Regress { outputs: usize },
    /// Next-token prediction over the tokenizer vocabulary.
    TextDecode,
    /// Coarse `height x width` depth grid, de-normalised like `Regress`.
    DepthRegress { height: usize, width: usize },
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Classify { classes } => classes,
            HeadKind::Regress { outputs } => outputs,
            HeadKind::TextDecode => tokenizer::VOCAB,
            HeadKind::DepthRegress { height, width } => height * width,
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(self, HeadKind::Regress { .. } | HeadKind::DepthRegress { .. })
    }

    pub fn validate(self) -> Result<()> {
        match self {
            HeadKind::Classify { classes } if classes < 2 => Err(Error::contract("classification needs at least 2 classes")),
            k if k.outputs() == 0 => Err(Error::contract("head has no outputs")),
            _ => Ok(()),
        }
    }
}

/// Which hidden state feeds the head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    LastToken,
    MeanOverModal,
}

#[derive(Clone, Debug)]
pub struct Head {
    pub kind: HeadKind,
    pub pooling: Pooling,
    pub linear: Linear,
    /// Target mean and std buffers for regression kinds.
    pub scale: Option<(ParamId, ParamId)>,
}

impl Head {
    /// Registers under group `head.<modality>`; scale buffers start at mean 0, std 1.
    pub fn build(m: Modality, kind: HeadKind, pooling: Pooling, dim: usize, b: &mut Builder<'_>) -> Result<Head> {
        kind.validate()?;
        let mut b = b.group(&format!("head.{m}"));
        let out = kind.outputs();
        let linear = Linear::new(&mut b, "linear", dim, out, true)?;
        let scale = if kind.is_regression() {
            Some((b.buffer("target_mean", Tensor::zeros([out]))?, b.buffer("target_std", Tensor::full([out], 1.0))?))
        } else {
            None
        };
        Ok(Head {
            kind,
            pooling,
            linear,
            scale,
        })
    }

    /// `1 x D` pooled state from normalised hidden states `L x D`.
    pub fn pool<F: Real>(&self, t: &mut Tape<'_, F>, hidden: Var, boundary: usize) -> Result<Var> {
        let len = t.dims(hidden)[0];
        match self.pooling {
            Pooling::LastToken => t.slice(hidden, 0, len - 1, 1),
            Pooling::MeanOverModal => {
                if boundary == 0 || boundary > len {
                    return Err(Error::Index {
                        what: "modal boundary",
                        index: boundary,
                        size: len,
                    });
                }
                let modal = t.slice(hidden, 0, 0, boundary)?;
                let d = t.dims(hidden)[1];
                let m = t.mean_pool(modal, 0)?;
                t.reshape(m, [1, d])
            }
        }
    }

    /// Raw head output `1 x outputs`: logits, or normalised regression values.
    pub fn forward<F: Real>(&self, t: &mut Tape<'_, F>, hidden: Var, boundary: usize) -> Result<Var> {
        let p = self.pool(t, hidden, boundary)?;
        self.linear.forward(t, p)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `z * std + mean`, elementwise.
pub fn unscale(z: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    z.iter().zip(mean.iter().zip(std)).map(|(z, (m, s))| z * s + m).collect()
}

/// `(y - mean) / std`, elementwise.
pub fn normalize(y: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    y.iter().zip(mean.iter().zip(std)).map(|(y, (m, s))| (y - m) / s).collect()
}
