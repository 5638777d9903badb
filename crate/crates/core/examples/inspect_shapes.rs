//! Shapes through encoder, bridge and prompt assembly for each modality.

use modalbridge::data::{self, SyntheticTaskSpec};
use modalbridge::diagnostics::inspect;
use modalbridge::prompts::{PromptMode, PromptRegistry};
use modalbridge::train::{self, RunConfig};
use modalbridge::{Modality, Preset};
use rand::SeedableRng;

fn main() -> modalbridge::Result<()> {
    let prompts = PromptRegistry::builtin();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    println!("{:<11} {:>9} {:>8} {:>7} {:>9}", "modality", "tokens", "bridged", "prompt", "assembled");
    for m in Modality::ALL {
        let ds = data::generate(&SyntheticTaskSpec::desk(m, 1, 0))?;
        let (model, store) = train::prepare(&RunConfig::new(m, Preset::Desk, 0), &ds)?;
        let prompt = prompts.select_tokens(m, PromptMode::Eval, &mut rng)?;
        let r = inspect(&model, &store, &ds.examples[0], &prompt)?;
        let dims = |d: &[usize]| format!("{}x{}", d[0], d[1]);
        println!(
            "{:<11} {:>9} {:>8} {:>7} {:>9}",
            m.to_string(),
            dims(&r.tokens),
            dims(&r.bridged),
            r.prompt_len,
            r.assembled_len
        );
    }
    Ok(())
}
