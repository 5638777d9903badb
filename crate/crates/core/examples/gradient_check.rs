//! End-to-end finite-difference check for every modality at 64-bit.

use modalbridge::data::{self, SyntheticTaskSpec};
use modalbridge::diagnostics::{pipeline_grad_check, Precision};
use modalbridge::prompts::{PromptMode, PromptRegistry};
use modalbridge::train::{self, RunConfig};
use modalbridge::{Modality, Preset};
use rand::SeedableRng;

fn main() -> modalbridge::Result<()> {
    let prompts = PromptRegistry::builtin();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for m in Modality::ALL {
        let ds = data::generate(&SyntheticTaskSpec::desk(m, 2, 0))?;
        let (model, store) = train::prepare(&RunConfig::new(m, Preset::Desk, 0), &ds)?;
        let prompt = prompts.select_tokens(m, PromptMode::Eval, &mut rng)?;
        let cfg = Precision::F64.config(100, 0);
        let r = pipeline_grad_check(&model, &store, &ds.examples[0], &prompt, Precision::F64, &cfg)?;
        println!("{:<11} {} probes  max rel err {:.2e}  {}", m.to_string(), r.checked, r.max_rel_err, if r.passed { "ok" } else { "FAIL" });
    }
    Ok(())
}
