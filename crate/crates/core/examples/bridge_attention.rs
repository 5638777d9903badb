//! The query bridge maps any number of tokens to a fixed block. Prints the
//! first layer's attention rows for a short input.

use modalbridge::bridge::{Bridge, BridgeConfig};
use modalbridge::nn::Builder;
use modalbridge::tensor::{ParamStore, Tape, Tensor};
use modalbridge::Modality;
use rand::SeedableRng;

fn main() -> modalbridge::Result<()> {
    let mut store = ParamStore::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let cfg = BridgeConfig {
        queries: 4,
        ..BridgeConfig::default()
    };
    let bridge = {
        let mut b = Builder::new(&mut store, &mut rng, "model");
        Bridge::build(&cfg, &[(Modality::Sar, 16)], &mut b)?
    };

    for n in [1, 5, 300] {
        let tokens = Tensor::from_fn([n, 16], |i| ((i * 7919) % 13) as f32 / 13.0 - 0.5);
        let mut t = Tape::with_store(&store);
        let x = t.input(tokens.clone());
        let out = bridge.forward(&mut t, Modality::Sar, x)?;
        println!("n = {n:>3} -> {:?}", t.dims(out));
        if n == 5 {
            let x = t.input(tokens);
            let w = bridge.attention_weights(&mut t, Modality::Sar, x, 0)?;
            for row in w.data().chunks(n) {
                println!("    {:?}", row.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
            }
        }
    }
    Ok(())
}
