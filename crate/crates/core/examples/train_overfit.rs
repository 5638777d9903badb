//! Overfits the 8-sample desk task for one modality and prints the loss curve
//! every 50 steps.
//!
//! `cargo run --release --example train_overfit -- table`

use modalbridge::data::{self, SyntheticTaskSpec};
use modalbridge::prompts::PromptRegistry;
use modalbridge::train::{self, RunConfig};
use modalbridge::{Modality, Preset};

fn main() -> modalbridge::Result<()> {
    let m: Modality = std::env::args().nth(1).as_deref().unwrap_or("hsi").parse()?;
    let ds = data::generate(&SyntheticTaskSpec::desk(m, 8, 0))?;
    let run = RunConfig::new(m, Preset::Desk, 0);
    let prompts = PromptRegistry::builtin();

    let out = train::train(&run, &ds, &prompts)?;
    for r in out.curve.iter().step_by(50) {
        println!("step {:>3}  lr {:.2e}  loss {:.5}", r.step, r.lr, r.loss);
    }
    let before = train::dataset_loss(&out.model, &train::prepare(&run, &ds)?.1, &ds.examples, &prompts)?;
    let after = train::dataset_loss(&out.model, &out.store, &ds.examples, &prompts)?;
    println!("{m}: eval loss {before:.4} -> {after:.5} ({:.2}% of initial)", 100.0 * after / before);
    Ok(())
}
