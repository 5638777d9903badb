//! Evaluation metrics. All inputs and outputs are `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

fn l2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Average and final displacement error between two equal-length paths.
pub fn ade_fde(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::contract(format!(
            "trajectory lengths {} and {} must match and be non-empty",
            pred.len(),
            gt.len()
        )));
    }
    let d: Vec<f64> = pred.iter().zip(gt).map(|(&p, &g)| l2(p, g)).collect();
    Ok((d.iter().sum::<f64>() / d.len() as f64, d[d.len() - 1]))
}

/// Percentage of grid cells whose absolute depth error is within `a / 10` metres.
pub fn pag(errors: &[f64], a: u32) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::contract("PAG of an empty error list"));
    }
    let thr = a as f64 / 10.0;
    let ok = errors.iter().filter(|e| e.abs() <= thr).count();
    Ok(ok as f64 / errors.len() as f64 * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub top1: f64,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

/// Accuracy, per-class mean recall, and Cohen's kappa.
///
/// Classes absent from `labels` are left out of the average recall. When
/// chance agreement is exactly 1, kappa is defined as 0.
pub fn classification(preds: &[usize], labels: &[usize], classes: usize) -> Result<Classification> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::contract("predictions and labels must be equal-length and non-empty"));
    }
    let mut cm = vec![0usize; classes * classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Index {
                what: "class",
                index: p.max(l),
                size: classes,
            });
        }
        cm[l * classes + p] += 1;
    }
    let n = preds.len() as f64;
    let diag: usize = (0..classes).map(|c| cm[c * classes + c]).sum();
    let oa = diag as f64 / n;
    let mut recalls = Vec::new();
    let mut pe = 0.0;
    for c in 0..classes {
        let row: usize = cm[c * classes..(c + 1) * classes].iter().sum();
        let col: usize = (0..classes).map(|r| cm[r * classes + c]).sum();
        if row > 0 {
            recalls.push(cm[c * classes + c] as f64 / row as f64);
        }
        pe += (row as f64 / n) * (col as f64 / n);
    }
    let aa = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let kappa = if pe == 1.0 { 0.0 } else { (oa - pe) / (1.0 - pe) };
    Ok(Classification { top1: oa, oa, aa, kappa })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

pub fn regression(preds: &[f64], targets: &[f64]) -> Result<Regression> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::contract("predictions and targets must be equal-length and non-empty"));
    }
    let n = preds.len() as f64;
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    let mae = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mean = targets.iter().sum::<f64>() / n;
    let sst: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::contract("R-squared undefined for constant targets"));
    }
    Ok(Regression {
        rmse: (sse / n).sqrt(),
        mae,
        r2: 1.0 - sse / sst,
    })
}

/// Mean of `1 / rank` over queries; ranks start at 1.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(Error::contract("MRR needs at least one rank, all >= 1"));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Named metric values from one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub modality: String,
    pub samples: usize,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn new(modality: impl Into<String>, samples: usize) -> Self {
        MetricReport {
            modality: modality.into(),
            samples,
            metrics: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// `modality,samples,metric,value` rows.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["modality", "samples", "metric", "value"])?;
        for (k, v) in &self.metrics {
            w.write_record([self.modality.as_str(), &self.samples.to_string(), k, &format!("{v}")])?;
        }
        w.into_inner().map_err(|e| Error::contract(e.to_string()))
    }

    /// Writes `metrics.json` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        fsio::write_atomic(&dir.join("metrics.json"), &json)?;
        fsio::write_atomic(&dir.join("metrics.csv"), &self.to_csv()?)
    }
}
