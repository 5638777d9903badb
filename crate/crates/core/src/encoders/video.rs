use serde::{Deserialize, Serialize};

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{add_positions, Builder, EncoderStack, Linear};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Space-time tube grid. All arrays are ordered `[time, height, width]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub extent: [usize; 3],
    pub stride: [usize; 3],
    pub offset: [usize; 3],
}

impl TubeSpec {
    /// Non-overlapping tubes from the origin.
    pub fn tiling(extent: [usize; 3]) -> Self {
        TubeSpec {
            extent,
            stride: extent,
            offset: [0; 3],
        }
    }
}

/// Tubes along each axis: `floor((len - offset - extent) / stride) + 1`, or
/// `None` when a tube does not fit. `dims` is `[T, H, W]`.
pub fn tube_count(spec: &TubeSpec, dims: [usize; 3]) -> Option<usize> {
    let mut n = 1;
    for a in 0..3 {
        let (len, off, ext, st) = (dims[a], spec.offset[a], spec.extent[a], spec.stride[a]);
        if ext == 0 || st == 0 || len < off + ext {
            return None;
        }
        n *= (len - off - ext) / st + 1;
    }
    Some(n)
}

/// Cuts a `T x C x H x W` video into flattened tubes, one per row. Each row
/// is ordered `(t, c, h, w)` within the tube; rows follow `(t, h, w)` tube order.
pub fn sparse_tubes(video: &Tensor, spec: &TubeSpec) -> Result<Tensor> {
    let d = video.dims();
    if d.len() != 4 {
        return Err(Error::payload(Modality::Video, "video must be T x C x H x W"));
    }
    let (tt, c, h, w) = (d[0], d[1], d[2], d[3]);
    let n = tube_count(spec, [tt, h, w])
        .ok_or_else(|| Error::payload(Modality::Video, format!("tube spec {spec:?} exceeds video {d:?}")))?;
    let counts: Vec<usize> = (0..3)
        .map(|a| ([tt, h, w][a] - spec.offset[a] - spec.extent[a]) / spec.stride[a] + 1)
        .collect();
    let [et, eh, ew] = spec.extent;
    let dim = et * c * eh * ew;
    let src = video.data();
    let mut out = Vec::with_capacity(n * dim);
    for it in 0..counts[0] {
        for ih in 0..counts[1] {
            for iw in 0..counts[2] {
                let t0 = spec.offset[0] + it * spec.stride[0];
                let h0 = spec.offset[1] + ih * spec.stride[1];
                let w0 = spec.offset[2] + iw * spec.stride[2];
                for dt in 0..et {
                    for ch in 0..c {
                        for dh in 0..eh {
                            let row = ((t0 + dt) * c + ch) * h * w + (h0 + dh) * w + w0;
                            out.extend_from_slice(&src[row..row + ew]);
                        }
                    }
                }
            }
        }
    }
    Tensor::new([n, dim], out)
}

#[derive(Clone, Debug)]
pub struct VideoEncoder {
    pub spec: TubeSpec,
    pub channels: usize,
    pub proj: Linear,
    pub stack: EncoderStack,
}

impl VideoEncoder {
    pub fn new(b: &mut Builder<'_>, cfg: &EncoderConfig) -> Result<Self> {
        let [et, eh, ew] = cfg.video_tube.extent;
        let dim = et * cfg.video_channels * eh * ew;
        Ok(VideoEncoder {
            spec: cfg.video_tube,
            channels: cfg.video_channels,
            proj: Linear::new(b, "tube", dim, cfg.width, true)?,
            stack: EncoderStack::new(b, "stack", cfg.video_depth, cfg.width, cfg.heads)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        if x.dims()[1] != self.channels {
            return Err(Error::payload(Modality::Video, format!("expected {} channels", self.channels)));
        }
        let tubes = t.input(sparse_tubes(x, &self.spec)?.cast());
        let tokens = self.proj.forward(t, tubes)?;
        let tokens = add_positions(t, tokens)?;
        self.stack.forward(t, tokens)
    }
}
