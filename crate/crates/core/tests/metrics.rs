mod common;

use std::path::Path;

use modalbridge::metrics::{ade_fde, classification, mrr, pag, regression, MetricReport};
use modalbridge::Error;
use proptest::prelude::*;

#[test]
fn ade_fde_examples() {
    assert_eq!(ade_fde(&[[3.0, -1.0]], &[[3.0, -1.0]]).unwrap(), (0.0, 0.0));
    assert_eq!(ade_fde(&[[0.0, 1.0], [1.0, 1.0]], &[[0.0, 0.0], [1.0, 0.0]]).unwrap(), (1.0, 1.0));
    // 3-4-5 triangle at the last point only.
    let (ade, fde) = ade_fde(&[[0.0, 0.0], [3.0, 4.0]], &[[0.0, 0.0], [0.0, 0.0]]).unwrap();
    assert_eq!((ade, fde), (2.5, 5.0));
}

#[test]
fn ade_fde_matches_oracle_on_twelve_point_paths() {
    let mut r = common::rng(1);
    for _ in 0..200 {
        let p = common::random_points(&mut r, 12, 3.0);
        let g = common::random_points(&mut r, 12, 3.0);
        let (a, f) = ade_fde(&p, &g).unwrap();
        let (oa, of) = common::oracle_ade_fde(&p, &g);
        assert!((a - oa).abs() < 1e-12 && (f - of).abs() < 1e-12);
    }
}

#[test]
fn ade_fde_rejects_bad_lengths() {
    assert!(matches!(ade_fde(&[[0.0, 0.0]], &[]), Err(Error::Contract(_))));
    assert!(ade_fde(&[], &[]).is_err());
}

#[test]
fn pag_examples() {
    assert_eq!(pag(&[0.0; 4], 6).unwrap(), 100.0);
    let errs = [0.0, 0.6, -0.6, 0.59, 0.61, 1.0, -1.0, 1.01, 3.0, -0.2];
    // Within 0.6 m: 0, +-0.6, 0.59, -0.2.
    assert_eq!(pag(&errs, 6).unwrap(), 50.0);
    // Within 1.0 m adds 0.61 and +-1.0.
    assert_eq!(pag(&errs, 10).unwrap(), 80.0);
    assert!(pag(&[], 6).is_err());
}

#[test]
fn classification_examples() {
    let c = classification(&[2, 0, 1], &[2, 0, 1], 3).unwrap();
    assert_eq!((c.top1, c.oa, c.aa, c.kappa), (1.0, 1.0, 1.0, 1.0));
    let c = classification(&[0, 0, 0, 0], &[0, 1, 1, 0], 2).unwrap();
    assert_eq!((c.oa, c.aa, c.kappa), (0.5, 0.5, 0.0));
    // Single-class degenerate case: chance agreement is 1.
    let c = classification(&[1, 1], &[1, 1], 3).unwrap();
    assert_eq!((c.oa, c.aa, c.kappa), (1.0, 1.0, 0.0));
    // Class 2 never appears in the labels, so AA averages two recalls.
    let c = classification(&[0, 2, 1, 1], &[0, 0, 1, 1], 3).unwrap();
    assert_eq!(c.aa, 0.75);
}

#[test]
fn classification_rejects_out_of_range_classes() {
    assert!(matches!(classification(&[0, 3], &[0, 1], 3), Err(Error::Index { .. })));
    assert!(classification(&[0], &[0, 1], 3).is_err());
}

#[test]
fn regression_examples() {
    let r = regression(&[1.0, -2.0, 5.0], &[1.0, -2.0, 5.0]).unwrap();
    assert_eq!((r.rmse, r.mae, r.r2), (0.0, 0.0, 1.0));
    // Predicting the mean gives R^2 = 0.
    let r = regression(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(r.r2, 0.0);
    assert!((r.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert!(matches!(regression(&[1.0, 2.0], &[4.0, 4.0]), Err(Error::Contract(_))));
}

#[test]
fn mrr_examples() {
    assert_eq!(mrr(&[1, 1]).unwrap(), 1.0);
    assert!((mrr(&[1, 2, 4]).unwrap() - 0.583_333_333_333_333_4).abs() < 1e-15);
    assert!(mrr(&[]).is_err());
    assert!(mrr(&[1, 0]).is_err());
}

#[test]
fn report_csv_and_json() {
    let mut rep = MetricReport::new("rgb", 8);
    rep.set("oa", 0.5);
    rep.set("kappa", -0.25);
    let csv = String::from_utf8(rep.to_csv().unwrap()).unwrap();
    assert_eq!(csv, "modality,samples,metric,value\nrgb,8,kappa,-0.25\nrgb,8,oa,0.5\n");
    let dir = tempfile::tempdir().unwrap();
    rep.write(dir.path()).unwrap();
    let back: MetricReport = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(back, rep);
    assert!(Path::new(&dir.path().join("metrics.csv")).exists());
}

proptest! {
    #[test]
    fn pag_counts_exactly(errs in proptest::collection::vec(-2.0f64..2.0, 1..60), a in prop::sample::select(vec![6u32, 10])) {
        let p = pag(&errs, a).unwrap();
        let thr = a as f64 / 10.0;
        let count = errs.iter().filter(|e| e.abs() <= thr).count();
        prop_assert_eq!((p * errs.len() as f64 / 100.0).round() as usize, count);
        prop_assert!((0.0..=100.0).contains(&p));
    }

    #[test]
    fn classification_ranges_and_oracle(
        pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..80)
    ) {
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let c = classification(&preds, &labels, 5).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.oa) && (0.0..=1.0).contains(&c.aa));
        prop_assert!((-1.0..=1.0).contains(&c.kappa));
        let (oa, aa, kappa) = common::oracle_classification(&preds, &labels, 5);
        prop_assert!((c.oa - oa).abs() < 1e-12 && (c.aa - aa).abs() < 1e-12 && (c.kappa - kappa).abs() < 1e-12);
    }

    #[test]
    fn mrr_is_in_unit_interval(ranks in proptest::collection::vec(1usize..1000, 1..50)) {
        let v = mrr(&ranks).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        prop_assert!((v - common::oracle_mrr(&ranks)).abs() < 1e-12);
    }

    #[test]
    fn regression_is_nonnegative(y in proptest::collection::vec(-5.0f64..5.0, 2..40), shift in -1.0f64..1.0) {
        prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-6));
        let p: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let r = regression(&p, &y).unwrap();
        prop_assert!(r.rmse >= 0.0 && r.mae >= 0.0 && r.r2 <= 1.0);
        prop_assert!((r.mae - shift.abs()).abs() < 1e-12);
    }
}
