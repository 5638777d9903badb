//! Reverse-mode gradients on a tiny two-layer network, checked against
//! central differences.

use modalbridge::tensor::{grad_check, GradCheckConfig, ParamStore, Stencil, Tape, Tensor};

fn main() -> modalbridge::Result<()> {
    let mut store: ParamStore<f64> = ParamStore::new();
    let w1 = store.add("w1", "demo", Tensor::from_f64([3, 4], &[0.2, -0.1, 0.4, 0.0, 0.3, 0.5, -0.2, 0.1, -0.4, 0.2, 0.1, 0.3])?, false)?;
    let w2 = store.add("w2", "demo", Tensor::from_f64([4, 2], &[0.1, -0.3, 0.2, 0.4, -0.5, 0.1, 0.3, 0.2])?, false)?;
    let x = Tensor::from_f64([2, 3], &[1.0, -2.0, 0.5, 0.3, 0.8, -1.0])?;

    let forward = |t: &mut Tape<'_, f64>| {
        let xv = t.input(x.clone());
        let (a, b) = (t.param(w1)?, t.param(w2)?);
        let h = t.matmul(xv, a)?;
        let h = t.gelu(h)?;
        let logits = t.matmul(h, b)?;
        t.cross_entropy(logits, &[1, 0])
    };

    let grads = {
        let mut t = Tape::with_store(&store);
        let loss = forward(&mut t)?;
        println!("loss = {:.6}", t.scalar(loss));
        t.backward(loss)?
    };
    println!("dL/dw2 = {:?}", grads.get(w2).unwrap());

    let cfg = GradCheckConfig {
        samples: 20,
        epsilon: 1e-4,
        stencil: Stencil::Three,
        tolerance: 1e-6,
        floor: 1e-8,
        seed: 0,
    };
    let report = grad_check(&mut store, forward, &cfg)?;
    println!("checked {} scalars, max rel err {:.2e}, passed {}", report.checked, report.max_rel_err, report.passed);
    Ok(())
}
