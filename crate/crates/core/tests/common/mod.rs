//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numeric code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gelu_tanh(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

fn vec_mat(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    (0..w[0].len()).map(|j| x.iter().zip(w).map(|(xi, row)| xi * row[j]).sum()).collect()
}

/// Weights of a single non-residual bridge layer, each stored `in x out`.
pub struct BridgeLayer {
    pub queries: Vec<Vec<f64>>,
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    pub up_w: Vec<Vec<f64>>,
    pub up_b: Vec<f64>,
    pub down_w: Vec<Vec<f64>>,
    pub down_b: Vec<f64>,
}

/// `FFN(softmax(Q Wq (t Wk)^T / sqrt(D)) (t Wv))`, written out loop by loop.
pub fn bridge_layer(p: &BridgeLayer, tokens: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d_out = p.queries[0].len() as f64;
    let keys: Vec<Vec<f64>> = tokens.iter().map(|t| vec_mat(t, &p.wk)).collect();
    let vals: Vec<Vec<f64>> = tokens.iter().map(|t| vec_mat(t, &p.wv)).collect();
    p.queries
        .iter()
        .map(|qrow| {
            let q = vec_mat(qrow, &p.wq);
            let scores: Vec<f64> = keys
                .iter()
                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / d_out.sqrt())
                .collect();
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut a = vec![0.0; vals[0].len()];
            for (e, v) in exps.iter().zip(&vals) {
                for (ai, vi) in a.iter_mut().zip(v) {
                    *ai += e / z * vi;
                }
            }
            let h: Vec<f64> = vec_mat(&a, &p.up_w)
                .iter()
                .zip(&p.up_b)
                .map(|(x, b)| gelu_tanh(x + b))
                .collect();
            vec_mat(&h, &p.down_w).iter().zip(&p.down_b).map(|(x, b)| x + b).collect()
        })
        .collect()
}

pub fn oracle_ade_fde(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> (f64, f64) {
    let mut total = 0.0;
    let mut last = 0.0;
    for i in 0..pred.len() {
        let dx = pred[i][0] - gt[i][0];
        let dy = pred[i][1] - gt[i][1];
        last = (dx * dx + dy * dy).sqrt();
        total += last;
    }
    (total / pred.len() as f64, last)
}

pub fn oracle_pag(errors: &[f64], a: u32) -> f64 {
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let hits = abs.partition_point(|&e| e <= a as f64 / 10.0);
    100.0 * hits as f64 / errors.len() as f64
}

/// `(oa, aa, kappa)` by brute-force counting per class pair.
pub fn oracle_classification(preds: &[usize], labels: &[usize], classes: usize) -> (f64, f64, f64) {
    let n = preds.len() as f64;
    let count = |l: usize, p: usize| preds.iter().zip(labels).filter(|&(&pp, &ll)| pp == p && ll == l).count() as f64;
    let correct: f64 = (0..classes).map(|c| count(c, c)).sum();
    let oa = correct / n;
    let mut recall_sum = 0.0;
    let mut present = 0.0;
    let mut pe = 0.0;
    for c in 0..classes {
        let truth = labels.iter().filter(|&&l| l == c).count() as f64;
        let guessed = preds.iter().filter(|&&p| p == c).count() as f64;
        if truth > 0.0 {
            recall_sum += count(c, c) / truth;
            present += 1.0;
        }
        pe += truth * guessed / (n * n);
    }
    let kappa = if pe == 1.0 { 0.0 } else { (oa - pe) / (1.0 - pe) };
    (oa, recall_sum / present, kappa)
}

pub fn oracle_regression(p: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = p.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut sst = 0.0;
    for i in 0..p.len() {
        sse += (p[i] - y[i]) * (p[i] - y[i]);
        sae += (p[i] - y[i]).abs();
        sst += (y[i] - mean) * (y[i] - mean);
    }
    ((sse / n).sqrt(), sae / n, 1.0 - sse / sst)
}

pub fn oracle_mrr(ranks: &[usize]) -> f64 {
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.random_range(-scale..scale), rng.random_range(-scale..scale)])
        .collect()
}
