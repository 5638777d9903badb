use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{add_positions, channels_to_tokens, Builder, EncoderStack, Linear};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};

/// `H x W x C` (optionally offset into a larger buffer) to a channel-first tensor.
fn hwc_to_chw<F: Real>(src: &[f32], h: usize, w: usize, c: usize) -> Tensor<F> {
    Tensor::from_fn([c, h, w], |i| {
        let (ch, rest) = (i / (h * w), i % (h * w));
        F::of(src[rest * c + ch] as f64)
    })
}

/// Non-overlapping patch embedding (a conv with kernel = stride = patch)
/// followed by a transformer stack. Shared across oblique views.
#[derive(Clone, Debug)]
pub struct PatchEncoder {
    pub channels: usize,
    pub patch: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stack: EncoderStack,
}

impl PatchEncoder {
    pub fn new(b: &mut Builder<'_>, channels: usize, patch: usize, d: usize, depth: usize, heads: usize) -> Result<Self> {
        let fan_in = channels * patch * patch;
        Ok(PatchEncoder {
            channels,
            patch,
            kernel: b.weight("patch.w", &[d, channels, patch, patch], fan_in)?,
            bias: b.zeros("patch.b", &[d])?,
            stack: EncoderStack::new(b, "stack", depth, d, heads)?,
        })
    }

    fn patches<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, src: &[f32], h: usize, w: usize, c: usize) -> Result<Var> {
        if c != self.channels {
            return Err(Error::payload(m, format!("expected {} channels, got {c}", self.channels)));
        }
        if h < self.patch || w < self.patch {
            return Err(Error::payload(m, format!("image {h}x{w} smaller than patch {}", self.patch)));
        }
        let x = t.input(hwc_to_chw(src, h, w, c));
        let k = t.param(self.kernel)?;
        let b = t.param(self.bias)?;
        let fmap = t.conv2d(x, k, Some(b), self.patch, 0)?;
        channels_to_tokens(t, fmap)
    }

    /// `H x W x C` image to `(H/p)(W/p) x d` tokens.
    pub fn encode_image<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, x: &Tensor) -> Result<Var> {
        let d = x.dims();
        let tokens = self.patches(t, m, x.data(), d[0], d[1], d[2])?;
        let tokens = add_positions(t, tokens)?;
        self.stack.forward(t, tokens)
    }

    /// `V x H x W x 3` views to `V (H/p)(W/p) x d` tokens, one shared encoder.
    pub fn encode_views<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let d = x.dims();
        let (v, h, w, c) = (d[0], d[1], d[2], d[3]);
        let per_view = h * w * c;
        let views = (0..v)
            .map(|i| self.patches(t, Modality::Oblique, &x.data()[i * per_view..(i + 1) * per_view], h, w, c))
            .collect::<Result<Vec<_>>>()?;
        let tokens = t.concat(&views, 0)?;
        let tokens = add_positions(t, tokens)?;
        self.stack.forward(t, tokens)
    }
}

/// A single pixel spectrum projected to one token, then a transformer stack.
#[derive(Clone, Debug)]
pub struct HsiEncoder {
    pub bands: usize,
    pub proj: Linear,
    pub stack: EncoderStack,
}

impl HsiEncoder {
    pub fn new(b: &mut Builder<'_>, bands: usize, d: usize, depth: usize, heads: usize) -> Result<Self> {
        Ok(HsiEncoder {
            bands,
            proj: Linear::new(b, "proj", bands, d, true)?,
            stack: EncoderStack::new(b, "stack", depth, d, heads)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let c = x.dims()[2];
        if c != self.bands {
            return Err(Error::payload(Modality::Hsi, format!("expected {} bands, got {c}", self.bands)));
        }
        let v = t.input(x.cast::<F>().reshape([1, c])?);
        let tok = self.proj.forward(t, v)?;
        self.stack.forward(t, tok)
    }
}

/// Three 3x3 stride-2 convolutions with gelu between them.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    pub in_channels: usize,
    pub layers: Vec<(ParamId, ParamId)>,
}

impl ConvEncoder {
    pub fn new(b: &mut Builder<'_>, name: &str, in_channels: usize, hidden: [usize; 2], d: usize) -> Result<Self> {
        let mut s = b.scope(name);
        let plan = [in_channels, hidden[0], hidden[1], d];
        let layers = plan
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                Ok((
                    s.weight(&format!("{i}.w"), &[io[1], io[0], 3, 3], io[0] * 9)?,
                    s.zeros(&format!("{i}.b"), &[io[1]])?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(ConvEncoder { in_channels, layers })
    }

    /// Channel-first input to `H'W' x d` tokens without positions.
    pub fn features<F: Real>(&self, t: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (t.param(w)?, t.param(b)?);
            h = t.conv2d(h, w, Some(b), 2, 1)?;
            if i + 1 < self.layers.len() {
                h = t.gelu(h)?;
            }
        }
        channels_to_tokens(t, h)
    }

    pub fn encode_hwc<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, x: &Tensor) -> Result<Var> {
        let d = x.dims();
        if d[2] != self.in_channels {
            return Err(Error::payload(m, format!("expected {} channels", self.in_channels)));
        }
        let x = t.input(hwc_to_chw(x.data(), d[0], d[1], d[2]));
        let tokens = self.features(t, x)?;
        add_positions(t, tokens)
    }
}

/// Independent conv branches for the visible and infrared images.
#[derive(Clone, Debug)]
pub struct InfraredEncoder {
    pub visible: ConvEncoder,
    pub infrared: ConvEncoder,
}

impl InfraredEncoder {
    pub fn new(b: &mut Builder<'_>, hidden: [usize; 2], d: usize) -> Result<Self> {
        Ok(InfraredEncoder {
            visible: ConvEncoder::new(b, "visible", 3, hidden, d)?,
            infrared: ConvEncoder::new(b, "infrared", 3, hidden, d)?,
        })
    }

    /// `2 x H x W x 3` pair to `(n_r + n_i) x d` tokens.
    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, x: &Tensor) -> Result<Var> {
        let d = x.dims();
        let (h, w) = (d[1], d[2]);
        let half = h * w * 3;
        let vis = t.input(hwc_to_chw(&x.data()[..half], h, w, 3));
        let ir = t.input(hwc_to_chw(&x.data()[half..], h, w, 3));
        let a = self.visible.features(t, vis)?;
        let b = self.infrared.features(t, ir)?;
        let tokens = t.concat(&[a, b], 0)?;
        add_positions(t, tokens)
    }
}
