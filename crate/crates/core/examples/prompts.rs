//! Prompt selection: random in training, always the first in evaluation.

use modalbridge::prompts::{PromptMode, PromptRegistry};
use modalbridge::Modality;
use rand::SeedableRng;

fn main() -> modalbridge::Result<()> {
    let reg = PromptRegistry::builtin();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for m in [Modality::Hsi, Modality::Oblique, Modality::Code] {
        println!("{m}: {} prompt(s)", reg.prompts(m).len());
        for _ in 0..3 {
            println!("  train: {:?}", reg.select(m, PromptMode::Train, &mut rng)?);
        }
        println!("  eval:  {:?}", reg.select(m, PromptMode::Eval, &mut rng)?);
    }
    Ok(())
}
