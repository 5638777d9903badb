//! Byte-level tokenizer: ids 0..=255 are raw bytes, followed by four specials.

pub const PAD: usize = 256;
pub const BOS: usize = 257;
pub const EOS: usize = 258;
pub const SEP: usize = 259;
pub const VOCAB: usize = 260;

pub fn tokenize(s: &[u8]) -> Vec<usize> {
    s.iter().map(|&b| b as usize).collect()
}

/// Inverse of [`tokenize`]. Special ids carry no bytes and are dropped.
pub fn detokenize(ids: &[usize]) -> Vec<u8> {
    ids.iter().filter(|&&i| i < 256).map(|&i| i as u8).collect()
}

pub fn is_special(id: usize) -> bool {
    (256..VOCAB).contains(&id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert!(tokenize(b"").is_empty());
        assert_eq!(tokenize(b"ab"), vec![97, 98]);
        assert_eq!(detokenize(&[97, 98]), b"ab");
        assert_eq!(detokenize(&[BOS, 97, EOS]), b"a");
    }
}
