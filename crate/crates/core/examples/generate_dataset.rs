//! Writes a synthetic dataset for one modality and reads it back.
//!
//! `cargo run --example generate_dataset -- trajectory /tmp/traj`

use std::path::PathBuf;

use modalbridge::data::{self, SyntheticTaskSpec};
use modalbridge::Modality;

fn main() -> modalbridge::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: Modality = args.next().as_deref().unwrap_or("rgb").parse()?;
    let dir = args.next().map_or_else(|| std::env::temp_dir().join(format!("modalbridge-{m}")), PathBuf::from);

    let spec = SyntheticTaskSpec::desk(m, 8, 7);
    let ds = data::generate(&spec)?;
    let manifest = data::write_dataset(&dir, &ds)?;
    println!("{m}: {} samples, task {:?}", ds.len(), ds.task);
    for (file, hash) in manifest.files.iter().take(3) {
        println!("  {file}  {}", &hash[..16]);
    }

    let back = data::read_dataset(&dir)?;
    assert_eq!(back.examples.len(), ds.examples.len());
    println!("read back {} samples from {}", back.len(), dir.display());
    Ok(())
}
