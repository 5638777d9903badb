//! Every task metric on small hand-made inputs.

use modalbridge::metrics::{ade_fde, classification, mrr, pag, regression};

fn main() -> modalbridge::Result<()> {
    let (ade, fde) = ade_fde(&[[0.0, 0.0], [1.0, 1.0], [3.0, 4.0]], &[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])?;
    println!("ADE {ade:.3}  FDE {fde:.3}");

    let height_errors = [0.1, -0.4, 0.7, 1.2, -0.05, 0.9];
    println!("PAG@0.6m {:.1}%  PAG@1.0m {:.1}%", pag(&height_errors, 6)?, pag(&height_errors, 10)?);

    let c = classification(&[0, 1, 1, 2, 2, 2], &[0, 1, 2, 2, 2, 1], 3)?;
    println!("OA {:.3}  AA {:.3}  kappa {:.3}", c.oa, c.aa, c.kappa);

    let r = regression(&[2.5, 0.0, 2.1, 7.8], &[3.0, -0.5, 2.0, 7.0])?;
    println!("RMSE {:.3}  MAE {:.3}  R2 {:.3}", r.rmse, r.mae, r.r2);

    println!("MRR {:.3}", mrr(&[1, 3, 2, 1])?);
    Ok(())
}
