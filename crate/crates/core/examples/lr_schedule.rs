//! Linear warmup then cosine decay, for the desk preset and one paper row.

use modalbridge::train::{RunConfig, ScheduleSpec};
use modalbridge::{Modality, Preset};

fn main() -> modalbridge::Result<()> {
    let desk = RunConfig::new(Modality::Rgb, Preset::Desk, 0).schedule(2);
    let paper = ScheduleSpec::table2(Modality::Rgb, 10);
    for (name, s) in [("desk", desk), ("paper rgb", paper)] {
        s.validate()?;
        println!("{name}: {} steps, warmup {}", s.total_steps(), s.warmup_steps());
        let last = s.total_steps() - 1;
        for k in [0, s.warmup_steps() / 2, s.warmup_steps(), (s.warmup_steps() + last) / 2, last] {
            println!("  step {k:>4}  lr {:.3e}", s.lr_at(k)?);
        }
    }
    Ok(())
}
