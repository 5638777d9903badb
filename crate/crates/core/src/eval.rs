//! Eval-mode scoring of a trained model on a dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::metrics::{self, MetricReport};
use crate::model::{Model, Prediction, Target};
use crate::prompts::{PromptMode, PromptRegistry};
use crate::tensor::ParamStore;
use crate::train::dataset_loss;

/// Longest greedy decode during evaluation.
pub const MAX_DECODE: usize = 32;

/// Scores every example with the first prompt. Metrics depend on the head:
/// classification gives accuracy, OA, AA and kappa; trajectories give ADE
/// and FDE; depth grids give PAG at 0.6 m and 1.0 m; other regressions give
/// RMSE, MAE and R-squared; text gives exact match and MRR, ranking every
/// distinct target in the dataset by likelihood.
pub fn evaluate(model: &Model, store: &ParamStore, data: &Dataset, prompts: &PromptRegistry) -> Result<MetricReport> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate an empty dataset"));
    }
    let m = data.modality;
    let kind = model.config.head(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let prompt = prompts.select_tokens(m, PromptMode::Eval, &mut rng)?;
    let mut report = MetricReport::new(m.name(), data.len());
    report.set("loss", dataset_loss(model, store, &data.examples, prompts)?);
    let preds = data
        .examples
        .iter()
        .map(|e| model.predict(store, &e.sample, &prompt, MAX_DECODE))
        .collect::<Result<Vec<_>>>()?;
    let mismatch = || Error::contract(format!("prediction kind does not match the {m} targets"));
    match kind {
        HeadKind::Classify { classes } => {
            let mut p = Vec::new();
            let mut l = Vec::new();
            for (pred, ex) in preds.iter().zip(&data.examples) {
                match (pred, &ex.target) {
                    (Prediction::Class(a), Target::Class(b)) => {
                        p.push(*a);
                        l.push(*b);
                    }
                    _ => return Err(mismatch()),
                }
            }
            let c = metrics::classification(&p, &l, classes)?;
            report.set("accuracy", c.top1);
            report.set("oa", c.oa);
            report.set("aa", c.aa);
            report.set("kappa", c.kappa);
        }
        HeadKind::Regress { .. } | HeadKind::DepthRegress { .. } => {
            let mut p = Vec::new();
            let mut y = Vec::new();
            let (mut ade, mut fde) = (0.0, 0.0);
            for (pred, ex) in preds.iter().zip(&data.examples) {
                let (Prediction::Values(a), Target::Values(b)) = (pred, &ex.target) else {
                    return Err(mismatch());
                };
                if m == crate::modality::Modality::Trajectory {
                    let pts = |v: &[f64]| v.chunks(2).map(|c| [c[0], c[1]]).collect::<Vec<_>>();
                    let (a1, f1) = metrics::ade_fde(&pts(a), &pts(b))?;
                    ade += a1;
                    fde += f1;
                }
                p.extend_from_slice(a);
                y.extend_from_slice(b);
            }
            let n = data.len() as f64;
            if m == crate::modality::Modality::Trajectory {
                report.set("ade", ade / n);
                report.set("fde", fde / n);
            } else if matches!(kind, HeadKind::DepthRegress { .. }) {
                let errs: Vec<f64> = p.iter().zip(&y).map(|(a, b)| a - b).collect();
                report.set("pag_6", metrics::pag(&errs, 6)?);
                report.set("pag_10", metrics::pag(&errs, 10)?);
            }
            match metrics::regression(&p, &y) {
                Ok(r) => {
                    report.set("rmse", r.rmse);
                    report.set("mae", r.mae);
                    report.set("r2", r.r2);
                }
                Err(Error::Contract(_)) => {
                    let r = (p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64).sqrt();
                    report.set("rmse", r);
                    report.set("mae", p.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64);
                }
                Err(e) => return Err(e),
            }
        }
        HeadKind::TextDecode => {
            let mut candidates: Vec<&str> = data
                .examples
                .iter()
                .filter_map(|e| match &e.target {
                    Target::Text(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            let mut exact = 0usize;
            let mut ranks = Vec::with_capacity(data.len());
            for (pred, ex) in preds.iter().zip(&data.examples) {
                let (Prediction::Text(a), Target::Text(b)) = (pred, &ex.target) else {
                    return Err(mismatch());
                };
                exact += usize::from(a == b);
                let truth = model.text_nll(store, &ex.sample, &prompt, b)?;
                let mut rank = 1;
                for c in &candidates {
                    if *c != b && model.text_nll(store, &ex.sample, &prompt, c)? < truth {
                        rank += 1;
                    }
                }
                ranks.push(rank);
            }
            report.set("exact_match", exact as f64 / data.len() as f64);
            report.set("mrr", metrics::mrr(&ranks)?);
        }
    }
    Ok(report)
}
