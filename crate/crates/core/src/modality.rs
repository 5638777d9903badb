use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The thirteen input kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Code,
    Rgb,
    Msi,
    Hsi,
    Table,
    Trajectory,
    Sar,
    Infrared,
    Graph,
    Oblique,
    Video,
    PointCloud,
}

impl Modality {
    pub const ALL: [Modality; 13] = [
        Modality::Text,
        Modality::Code,
        Modality::Rgb,
        Modality::Msi,
        Modality::Hsi,
        Modality::Table,
        Modality::Trajectory,
        Modality::Sar,
        Modality::Infrared,
        Modality::Graph,
        Modality::Oblique,
        Modality::Video,
        Modality::PointCloud,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Code => "code",
            Modality::Rgb => "rgb",
            Modality::Msi => "msi",
            Modality::Hsi => "hsi",
            Modality::Table => "table",
            Modality::Trajectory => "trajectory",
            Modality::Sar => "sar",
            Modality::Infrared => "infrared",
            Modality::Graph => "graph",
            Modality::Oblique => "oblique",
            Modality::Video => "video",
            Modality::PointCloud => "pointcloud",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "");
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::UnknownModality(s.to_string()))
    }
}

/// A raw input together with its modality tag.
///
/// Array layouts: RGB, MSI and SAR are `H x W x C`; HSI is `1 x 1 x C`;
/// infrared is `2 x H x W x 3` (visible, then infrared); oblique views are
/// `V x H x W x 3`; video is `T x C x H x W`; point clouds are `K x (3 + f)`;
/// trajectories are `l x 2`; a table row is a flat vector with one value per
/// column (discrete columns hold category indices).
#[derive(Clone, Debug, PartialEq)]
pub enum ModalitySample {
    Text(String),
    Code(String),
    Rgb(Tensor),
    Msi(Tensor),
    Hsi(Tensor),
    Table(Tensor),
    Trajectory(Tensor),
    Sar(Tensor),
    Infrared(Tensor),
    Graph { features: Tensor, time_slot: usize },
    Oblique(Tensor),
    Video(Tensor),
    PointCloud(Tensor),
}

fn expect_rank(m: Modality, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank || t.dims().contains(&0) {
        return Err(Error::payload(m, format!("expected rank-{rank} non-empty array, got {:?}", t.dims())));
    }
    Ok(())
}

impl ModalitySample {
    pub fn modality(&self) -> Modality {
        match self {
            ModalitySample::Text(_) => Modality::Text,
            ModalitySample::Code(_) => Modality::Code,
            ModalitySample::Rgb(_) => Modality::Rgb,
            ModalitySample::Msi(_) => Modality::Msi,
            ModalitySample::Hsi(_) => Modality::Hsi,
            ModalitySample::Table(_) => Modality::Table,
            ModalitySample::Trajectory(_) => Modality::Trajectory,
            ModalitySample::Sar(_) => Modality::Sar,
            ModalitySample::Infrared(_) => Modality::Infrared,
            ModalitySample::Graph { .. } => Modality::Graph,
            ModalitySample::Oblique(_) => Modality::Oblique,
            ModalitySample::Video(_) => Modality::Video,
            ModalitySample::PointCloud(_) => Modality::PointCloud,
        }
    }

    /// Checks the payload layout for the tag. Size limits that depend on the
    /// encoder configuration are checked by the encoders.
    pub fn validate(&self) -> Result<()> {
        let m = self.modality();
        match self {
            ModalitySample::Text(_) | ModalitySample::Code(_) => Ok(()),
            ModalitySample::Rgb(t) => {
                expect_rank(m, t, 3)?;
                if t.dims()[2] != 3 {
                    return Err(Error::payload(m, "RGB needs exactly 3 channels"));
                }
                Ok(())
            }
            ModalitySample::Msi(t) => {
                expect_rank(m, t, 3)?;
                if t.dims()[2] <= 3 {
                    return Err(Error::payload(m, "MSI needs C > 3"));
                }
                Ok(())
            }
            ModalitySample::Hsi(t) => {
                expect_rank(m, t, 3)?;
                if t.dims()[..2] != [1, 1] {
                    return Err(Error::payload(m, "HSI pixel must be 1 x 1 x C"));
                }
                Ok(())
            }
            ModalitySample::Table(t) => expect_rank(m, t, 1),
            ModalitySample::Trajectory(t) => {
                expect_rank(m, t, 2)?;
                if t.dims()[1] != 2 {
                    return Err(Error::payload(m, "trajectory rows must be (x, y)"));
                }
                Ok(())
            }
            ModalitySample::Sar(t) => {
                expect_rank(m, t, 3)?;
                if t.dims()[2] != 2 {
                    return Err(Error::payload(m, "SAR needs 2 channels"));
                }
                Ok(())
            }
            ModalitySample::Infrared(t) => {
                expect_rank(m, t, 4)?;
                if t.dims()[0] != 2 || t.dims()[3] != 3 {
                    return Err(Error::payload(m, "infrared pair must be 2 x H x W x 3"));
                }
                Ok(())
            }
            ModalitySample::Graph { features, .. } => expect_rank(m, features, 2),
            ModalitySample::Oblique(t) => {
                expect_rank(m, t, 4)?;
                if t.dims()[0] < 2 {
                    return Err(Error::payload(m, "oblique needs at least 2 views"));
                }
                if t.dims()[3] != 3 {
                    return Err(Error::payload(m, "oblique views need 3 channels"));
                }
                Ok(())
            }
            ModalitySample::Video(t) => expect_rank(m, t, 4),
            ModalitySample::PointCloud(t) => {
                expect_rank(m, t, 2)?;
                if t.dims()[1] < 3 {
                    return Err(Error::payload(m, "point rows need at least x, y, z"));
                }
                Ok(())
            }
        }
    }
}
