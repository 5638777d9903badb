//! Synthetic datasets, their on-disk layout, and parameter checkpoints.

pub mod checkpoint;
mod io;
mod synth;

use serde::{Deserialize, Serialize};

pub use io::{read_dataset, verify_manifest, write_dataset, DatasetManifest};
pub use synth::generate;

use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::model::Example;
use crate::modality::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classify { classes: usize },
    Regress { outputs: usize },
    /// Observe `observed` points, predict the next `predicted`.
    TrajectoryPredict { observed: usize, predicted: usize },
    TextGenerate,
    Depth { height: usize, width: usize },
}

impl TaskKind {
    pub fn head(self) -> HeadKind {
        match self {
            TaskKind::Classify { classes } => HeadKind::Classify { classes },
            TaskKind::Regress { outputs } => HeadKind::Regress { outputs },
            TaskKind::TrajectoryPredict { predicted, .. } => HeadKind::Regress { outputs: 2 * predicted },
            TaskKind::TextGenerate => HeadKind::TextDecode,
            TaskKind::Depth { height, width } => HeadKind::DepthRegress { height, width },
        }
    }
}

/// Shape knobs. Each modality reads the fields it needs:
/// images use `height`, `width`, `channels`; point clouds use `points`;
/// trajectories use `points` as observed length; graphs use `points` as
/// node count and `channels` as feature count; video uses `frames`;
/// oblique uses `views`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub points: usize,
    pub frames: usize,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub modality: Modality,
    pub task: TaskKind,
    pub samples: usize,
    pub seed: u64,
    pub shape: Shape,
    /// Amplitude of the seeded noise added to payloads and, for regression,
    /// to targets. Noise is uniform in `[-noise, noise]`.
    pub noise: f64,
}

impl SyntheticTaskSpec {
    /// The desk task for `m`, matched to the desk encoder configuration.
    pub fn desk(m: Modality, samples: usize, seed: u64) -> Self {
        let shape = |height, width, channels, points, frames, views| Shape {
            height,
            width,
            channels,
            points,
            frames,
            views,
        };
        let (task, shape) = match m {
            Modality::Text => (TaskKind::Classify { classes: 2 }, shape(0, 0, 0, 8, 0, 0)),
            Modality::Code => (TaskKind::TextGenerate, shape(0, 0, 0, 0, 0, 0)),
            Modality::Rgb => (TaskKind::Classify { classes: 4 }, shape(16, 16, 3, 0, 0, 0)),
            Modality::Msi => (TaskKind::Classify { classes: 4 }, shape(8, 8, 4, 0, 0, 0)),
            Modality::Sar => (TaskKind::Classify { classes: 4 }, shape(16, 16, 2, 0, 0, 0)),
            Modality::Hsi => (TaskKind::Classify { classes: 4 }, shape(1, 1, 32, 0, 0, 0)),
            Modality::Infrared => (TaskKind::Classify { classes: 4 }, shape(16, 16, 3, 0, 0, 0)),
            Modality::Video => (TaskKind::Classify { classes: 4 }, shape(8, 8, 3, 0, 4, 0)),
            Modality::PointCloud => (TaskKind::Classify { classes: 3 }, shape(0, 0, 0, 128, 0, 0)),
            Modality::Table => (TaskKind::Regress { outputs: 1 }, shape(0, 0, 6, 0, 0, 0)),
            Modality::Trajectory => (
                TaskKind::TrajectoryPredict {
                    observed: 8,
                    predicted: 4,
                },
                shape(0, 0, 2, 8, 0, 0),
            ),
            Modality::Graph => (TaskKind::Regress { outputs: 8 }, shape(0, 0, 2, 8, 0, 0)),
            Modality::Oblique => (TaskKind::Depth { height: 2, width: 2 }, shape(16, 16, 3, 0, 0, 2)),
        };
        SyntheticTaskSpec {
            modality: m,
            task,
            samples,
            seed,
            shape,
            noise: 0.05,
        }
    }
}

/// Examples of one modality, plus the spec that generated them if known.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub modality: Modality,
    pub task: TaskKind,
    pub spec: Option<SyntheticTaskSpec>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.examples.iter().enumerate() {
            if e.sample.modality() != self.modality {
                return Err(Error::contract(format!(
                    "example {i} is {} in a {} dataset",
                    e.sample.modality(),
                    self.modality
                )));
            }
        }
        Ok(())
    }
}
