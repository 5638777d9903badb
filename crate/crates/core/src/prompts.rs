//! Per-modality text prompts and the train/eval selection policy.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::modality::Modality;
use crate::tokenizer;

const BUILTIN: &str = include_str!("../resources/prompts.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    /// Uniform random choice per forward pass.
    Train,
    /// Always the first prompt.
    Eval,
}

/// Ordered prompts per modality. Code has none.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptRegistry {
    prompts: BTreeMap<Modality, Vec<String>>,
    eval_tokens: BTreeMap<Modality, Vec<usize>>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN, Path::new("<builtin prompts>")).expect("builtin prompt table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsio::read_string(path)?, path)
    }

    /// Parses `modality<TAB>index<TAB>text` records. Blank lines and lines
    /// starting with `#` are skipped; indices must run 0, 1, 2, ... per modality.
    pub fn parse(src: &str, origin: &Path) -> Result<Self> {
        let mut prompts: BTreeMap<Modality, Vec<String>> = BTreeMap::new();
        for (lineno, line) in src.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| Error::format(origin, format!("line {}: {why}", lineno + 1));
            let mut parts = line.splitn(3, '\t');
            let (Some(m), Some(idx), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected three tab-separated fields"));
            };
            let m: Modality = m.parse().map_err(|_| bad("unknown modality"))?;
            let idx: usize = idx.trim().parse().map_err(|_| bad("index is not an integer"))?;
            let list = prompts.entry(m).or_default();
            if idx != list.len() {
                return Err(bad("prompt indices must be consecutive from 0"));
            }
            list.push(text.to_string());
        }
        for m in Modality::ALL {
            let n = prompts.get(&m).map_or(0, Vec::len);
            if m == Modality::Code && n > 0 {
                return Err(Error::format(origin, "code modality takes no prompt"));
            }
            if m != Modality::Code && n == 0 {
                return Err(Error::format(origin, format!("no prompt for {m}")));
            }
        }
        prompts.entry(Modality::Code).or_default();
        let eval_tokens = prompts
            .iter()
            .map(|(&m, list)| (m, list.first().map_or_else(Vec::new, |p| tokenizer::tokenize(p.as_bytes()))))
            .collect();
        Ok(PromptRegistry { prompts, eval_tokens })
    }

    pub fn prompts(&self, m: Modality) -> &[String] {
        self.prompts.get(&m).map_or(&[], Vec::as_slice)
    }

    pub fn select(&self, m: Modality, mode: PromptMode, rng: &mut impl Rng) -> Result<&str> {
        let list = self
            .prompts
            .get(&m)
            .ok_or_else(|| Error::UnknownModality(m.to_string()))?;
        if list.is_empty() {
            return Ok("");
        }
        Ok(match mode {
            PromptMode::Eval => &list[0],
            PromptMode::Train => &list[rng.random_range(0..list.len())],
        })
    }

    /// Prompt token ids. Eval-mode ids are tokenized once at load.
    pub fn select_tokens(&self, m: Modality, mode: PromptMode, rng: &mut impl Rng) -> Result<Vec<usize>> {
        match mode {
            PromptMode::Eval => self
                .eval_tokens
                .get(&m)
                .cloned()
                .ok_or_else(|| Error::UnknownModality(m.to_string())),
            PromptMode::Train => Ok(tokenizer::tokenize(self.select(m, mode, rng)?.as_bytes())),
        }
    }

    pub fn max_prompt_len(&self) -> usize {
        self.prompts.values().flatten().map(String::len).max().unwrap_or(0)
    }
}
