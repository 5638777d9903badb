use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{add_positions, Builder, EncoderStack};
use crate::tensor::{ParamId, Real, Tape, Tensor, Var};

/// One token per whitespace-separated word: the mean of its byte embeddings
/// plus in-word position embeddings, then a transformer stack.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub bytes: ParamId,
    pub in_word: ParamId,
    pub max_word_len: usize,
    pub stack: EncoderStack,
}

impl TextEncoder {
    pub fn new(b: &mut Builder<'_>, cfg: &EncoderConfig, depth: usize) -> Result<Self> {
        let d = cfg.width;
        Ok(TextEncoder {
            bytes: b.normal("bytes", &[256, d], 1.0)?,
            in_word: b.normal("in_word", &[cfg.max_word_len, d], 0.1)?,
            max_word_len: cfg.max_word_len,
            stack: EncoderStack::new(b, "stack", depth, d, cfg.heads)?,
        })
    }

    pub fn encode<F: Real>(&self, t: &mut Tape<'_, F>, m: Modality, s: &str) -> Result<Var> {
        let words: Vec<&[u8]> = s.as_bytes().split(u8::is_ascii_whitespace).filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return Err(Error::payload(m, "text has no words"));
        }
        let total: usize = words.iter().map(|w| w.len()).sum();
        let mut ids = Vec::with_capacity(total);
        let mut pos = Vec::with_capacity(total);
        let mut avg = vec![F::zero(); words.len() * total];
        let mut col = 0;
        for (r, w) in words.iter().enumerate() {
            let inv = F::one() / F::of(w.len() as f64);
            for (i, &byte) in w.iter().enumerate() {
                ids.push(byte as usize);
                pos.push(i.min(self.max_word_len - 1));
                avg[r * total + col] = inv;
                col += 1;
            }
        }
        let table = t.param(self.bytes)?;
        let pos_table = t.param(self.in_word)?;
        let e = t.embedding(table, &ids)?;
        let p = t.embedding(pos_table, &pos)?;
        let e = t.add(e, p)?;
        let a = t.input(Tensor::new([words.len(), total], avg)?);
        let tokens = t.matmul(a, e)?;
        let tokens = add_positions(t, tokens)?;
        self.stack.forward(t, tokens)
    }
}
