//! Modality encoders: raw sample to an `n x d` token sequence.

mod pointcloud;
mod raster;
mod structured;
mod text;
mod video;

use serde::{Deserialize, Serialize};

pub use pointcloud::{group_points, PointCloudEncoder, PointGroups};
pub use raster::{ConvEncoder, HsiEncoder, InfraredEncoder, PatchEncoder};
pub use structured::{fit_bin_edges, GraphEncoder, TableEncoder, TrajectoryEncoder};
pub use text::TextEncoder;
pub use video::{sparse_tubes, tube_count, TubeSpec, VideoEncoder};

use crate::error::{Error, Result};
use crate::modality::{Modality, ModalitySample};
use crate::nn::Builder;
use crate::tensor::{Real, Tape, Var};

/// Kind of one table column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Category index below `vocab`.
    Discrete { vocab: usize },
    /// Real value, quantile-binned.
    Continuous,
}

/// Widths, depths and shape plans for every encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Token width `d`, shared by all encoders.
    pub width: usize,
    pub heads: usize,
    pub text_depth: usize,
    pub code_depth: usize,
    pub rgb_depth: usize,
    pub msi_depth: usize,
    pub hsi_depth: usize,
    pub table_depth: usize,
    pub trajectory_depth: usize,
    pub oblique_depth: usize,
    pub video_depth: usize,
    pub pointcloud_depth: usize,
    /// Longest in-word byte position with its own embedding.
    pub max_word_len: usize,
    pub rgb_patch: usize,
    pub msi_patch: usize,
    pub msi_channels: usize,
    pub oblique_patch: usize,
    pub hsi_bands: usize,
    /// Channels of the first two conv layers; the third outputs `width`.
    pub sar_channels: [usize; 2],
    pub infrared_channels: [usize; 2],
    pub table_columns: Vec<ColumnKind>,
    pub table_bins: usize,
    pub graph_features: usize,
    pub graph_max_nodes: usize,
    pub graph_time_slots: usize,
    pub video_channels: usize,
    pub video_tube: TubeSpec,
    pub pointcloud_groups: usize,
    pub pointcloud_group_size: usize,
    pub pointcloud_hidden: usize,
}

impl EncoderConfig {
    pub fn desk() -> Self {
        EncoderConfig {
            width: 32,
            heads: 2,
            text_depth: 1,
            code_depth: 1,
            rgb_depth: 2,
            msi_depth: 2,
            hsi_depth: 2,
            table_depth: 1,
            trajectory_depth: 2,
            oblique_depth: 2,
            video_depth: 2,
            pointcloud_depth: 2,
            max_word_len: 16,
            rgb_patch: 8,
            msi_patch: 4,
            msi_channels: 4,
            oblique_patch: 8,
            hsi_bands: 32,
            sar_channels: [8, 16],
            infrared_channels: [8, 16],
            table_columns: vec![
                ColumnKind::Continuous,
                ColumnKind::Continuous,
                ColumnKind::Continuous,
                ColumnKind::Continuous,
                ColumnKind::Discrete { vocab: 4 },
                ColumnKind::Discrete { vocab: 3 },
            ],
            table_bins: 16,
            graph_features: 2,
            graph_max_nodes: 16,
            graph_time_slots: 24,
            video_channels: 3,
            video_tube: TubeSpec::tiling([2, 4, 4]),
            pointcloud_groups: 8,
            pointcloud_group_size: 16,
            pointcloud_hidden: 32,
        }
    }

    /// Paper depths at desk widths.
    pub fn paper() -> Self {
        EncoderConfig {
            rgb_depth: 40,
            msi_depth: 40,
            hsi_depth: 12,
            table_depth: 1,
            trajectory_depth: 2,
            oblique_depth: 12,
            video_depth: 6,
            pointcloud_depth: 12,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let depths = [
            self.text_depth,
            self.code_depth,
            self.rgb_depth,
            self.msi_depth,
            self.hsi_depth,
            self.table_depth,
            self.trajectory_depth,
            self.oblique_depth,
            self.video_depth,
            self.pointcloud_depth,
        ];
        if depths.contains(&0) {
            return Err(Error::contract("encoder depths must be at least 1"));
        }
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::contract("encoder width must be a positive multiple of heads"));
        }
        if self.msi_channels <= 3 {
            return Err(Error::contract("MSI encoder needs C > 3"));
        }
        if self.table_bins < 2 || self.table_columns.is_empty() {
            return Err(Error::contract("table needs columns and at least 2 bins"));
        }
        if self.pointcloud_groups == 0 || self.pointcloud_group_size == 0 {
            return Err(Error::contract("point-cloud groups must be non-empty"));
        }
        Ok(())
    }
}

/// One built encoder.
#[derive(Clone, Debug)]
pub enum Encoder {
    Text(TextEncoder),
    Patch(PatchEncoder),
    Hsi(HsiEncoder),
    Table(TableEncoder),
    Trajectory(TrajectoryEncoder),
    Sar(ConvEncoder),
    Infrared(InfraredEncoder),
    Graph(GraphEncoder),
    Video(VideoEncoder),
    PointCloud(PointCloudEncoder),
}

impl Encoder {
    /// Registers parameters under group `encoder.<modality>`.
    pub fn build(m: Modality, cfg: &EncoderConfig, b: &mut Builder<'_>) -> Result<Encoder> {
        let group = format!("encoder.{m}");
        let mut b = b.group(&group);
        let d = cfg.width;
        Ok(match m {
            Modality::Text => Encoder::Text(TextEncoder::new(&mut b, cfg, cfg.text_depth)?),
            Modality::Code => Encoder::Text(TextEncoder::new(&mut b, cfg, cfg.code_depth)?),
            Modality::Rgb => Encoder::Patch(PatchEncoder::new(&mut b, 3, cfg.rgb_patch, d, cfg.rgb_depth, cfg.heads)?),
            Modality::Msi => Encoder::Patch(PatchEncoder::new(
                &mut b,
                cfg.msi_channels,
                cfg.msi_patch,
                d,
                cfg.msi_depth,
                cfg.heads,
            )?),
            Modality::Oblique => Encoder::Patch(PatchEncoder::new(
                &mut b,
                3,
                cfg.oblique_patch,
                d,
                cfg.oblique_depth,
                cfg.heads,
            )?),
            Modality::Hsi => Encoder::Hsi(HsiEncoder::new(&mut b, cfg.hsi_bands, d, cfg.hsi_depth, cfg.heads)?),
            Modality::Table => Encoder::Table(TableEncoder::new(&mut b, cfg)?),
            Modality::Trajectory => {
                Encoder::Trajectory(TrajectoryEncoder::new(&mut b, d, cfg.trajectory_depth, cfg.heads)?)
            }
            Modality::Sar => Encoder::Sar(ConvEncoder::new(&mut b, "conv", 2, cfg.sar_channels, d)?),
            Modality::Infrared => Encoder::Infrared(InfraredEncoder::new(&mut b, cfg.infrared_channels, d)?),
            Modality::Graph => Encoder::Graph(GraphEncoder::new(&mut b, cfg)?),
            Modality::Video => Encoder::Video(VideoEncoder::new(&mut b, cfg)?),
            Modality::PointCloud => Encoder::PointCloud(PointCloudEncoder::new(&mut b, cfg)?),
        })
    }

    /// Tokens for one sample, `n x d`.
    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, sample: &ModalitySample) -> Result<Var> {
        sample.validate()?;
        let m = sample.modality();
        let mismatch = || Error::payload(m, "sample does not match this encoder");
        match (self, sample) {
            (Encoder::Text(e), ModalitySample::Text(s) | ModalitySample::Code(s)) => e.encode(t, m, s),
            (Encoder::Patch(e), ModalitySample::Rgb(x) | ModalitySample::Msi(x)) => e.encode_image(t, m, x),
            (Encoder::Patch(e), ModalitySample::Oblique(x)) => e.encode_views(t, x),
            (Encoder::Hsi(e), ModalitySample::Hsi(x)) => e.encode(t, x),
            (Encoder::Table(e), ModalitySample::Table(x)) => e.encode(t, x),
            (Encoder::Trajectory(e), ModalitySample::Trajectory(x)) => e.encode(t, x),
            (Encoder::Sar(e), ModalitySample::Sar(x)) => e.encode_hwc(t, m, x),
            (Encoder::Infrared(e), ModalitySample::Infrared(x)) => e.encode(t, x),
            (Encoder::Graph(e), ModalitySample::Graph { features, time_slot }) => e.encode(t, features, *time_slot),
            (Encoder::Video(e), ModalitySample::Video(x)) => e.encode(t, x),
            (Encoder::PointCloud(e), ModalitySample::PointCloud(x)) => e.encode(t, x),
            _ => Err(mismatch()),
        }
    }
}

/// Token count each encoder produces for a payload of the given dims, or
/// `None` when the payload is too small. `dims` follows the sample layouts;
/// for text it is `[word_count]`.
pub fn expected_tokens(m: Modality, cfg: &EncoderConfig, dims: &[usize]) -> Option<usize> {
    let conv3 = |h: usize, w: usize| {
        let step = |x: usize| crate::tensor::conv_out_len(x, 3, 2, 1);
        Some(step(step(step(h)?)?)? * step(step(step(w)?)?)?)
    };
    let patches = |h: usize, w: usize, p: usize| {
        let n = (h / p) * (w / p);
        (n > 0).then_some(n)
    };
    match m {
        Modality::Text | Modality::Code => (dims[0] > 0).then_some(dims[0]),
        Modality::Rgb => patches(dims[0], dims[1], cfg.rgb_patch),
        Modality::Msi => patches(dims[0], dims[1], cfg.msi_patch),
        Modality::Hsi => Some(1),
        Modality::Table => Some(dims[0]),
        Modality::Trajectory => Some(dims[0]),
        Modality::Sar => conv3(dims[0], dims[1]),
        Modality::Infrared => conv3(dims[1], dims[2]).map(|n| 2 * n),
        Modality::Graph => Some(3 * dims[0]),
        Modality::Oblique => patches(dims[1], dims[2], cfg.oblique_patch).map(|n| dims[0] * n),
        Modality::Video => tube_count(&cfg.video_tube, [dims[0], dims[2], dims[3]]),
        Modality::PointCloud => Some(cfg.pointcloud_groups),
    }
}
