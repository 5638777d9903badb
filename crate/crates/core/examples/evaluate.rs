//! Trains briefly, saves a checkpoint, reloads it and scores the training set
//! with the fixed evaluation prompt.

use modalbridge::data::{self, checkpoint, SyntheticTaskSpec};
use modalbridge::eval;
use modalbridge::prompts::PromptRegistry;
use modalbridge::train::{self, RunConfig};
use modalbridge::{Modality, Preset};

fn main() -> modalbridge::Result<()> {
    let m = Modality::Trajectory;
    let ds = data::generate(&SyntheticTaskSpec::desk(m, 8, 1))?;
    let mut run = RunConfig::new(m, Preset::Desk, 1);
    run.max_epochs = Some(40);
    let prompts = PromptRegistry::builtin();
    let out = train::train(&run, &ds, &prompts)?;

    let dir = std::env::temp_dir().join("modalbridge-eval-example");
    checkpoint::save(&dir.join("checkpoint"), &out.model, &out.store, run.seed)?;
    let (model, store, _) = checkpoint::load(&dir.join("checkpoint"))?;
    let report = eval::evaluate(&model, &store, &ds, &prompts)?;
    report.write(&dir)?;
    print!("{}", String::from_utf8_lossy(&report.to_csv()?));
    Ok(())
}
