use modalbridge::tensor::{
    grad_check, init, matmul, softmax_rows, stt, AttentionMask, GradCheckConfig, ParamId, ParamStore, Tape, Var,
};
use modalbridge::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn triple_loop(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[test]
fn matmul_identity_and_zero() {
    let i2 = Tensor::<f32>::eye(2);
    assert_eq!(matmul(&i2, &i2).unwrap(), i2);
    let a = Tensor::<f32>::from_f64([2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let z = Tensor::<f32>::zeros([2, 1]);
    assert_eq!(matmul(&a, &z).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    let a: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let want = triple_loop(&a, &b, 3, 4, 2);
    let got = matmul(
        &Tensor::<f32>::from_f64([3, 4], &a).unwrap(),
        &Tensor::<f32>::from_f64([4, 2], &b).unwrap(),
    )
    .unwrap();
    assert_eq!(got.dims(), &[3, 2]);
    for (g, w) in got.data().iter().zip(&want) {
        assert!((*g as f64 - w).abs() < 1e-6);
    }
}

#[test]
fn matmul_reports_both_shapes() {
    let err = matmul(&Tensor::<f32>::zeros([2, 3]), &Tensor::<f32>::zeros([2, 3])).unwrap_err();
    match err {
        Error::Shape { lhs, rhs, .. } => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn softmax_examples() {
    let z = softmax_rows(&Tensor::<f32>::zeros([1, 4])).unwrap();
    assert_eq!(z.data(), &[0.25; 4]);

    let big = softmax_rows(&Tensor::<f32>::from_f64([1, 2], &[1000.0, 0.0]).unwrap()).unwrap();
    assert!((big.data()[0] - 1.0).abs() < 1e-6 && big.data()[1] < 1e-6);

    let mut r = rng(2);
    let x: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
    let got = softmax_rows(&Tensor::<f32>::from_f64([2, 3], &x).unwrap()).unwrap();
    for row in 0..2 {
        let e: Vec<f64> = x[row * 3..row * 3 + 3].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        for j in 0..3 {
            assert!((got.data()[row * 3 + j] as f64 - e[j] / s).abs() < 1e-6);
        }
    }

    let nan = Tensor::<f32>::from_f64([1, 2], &[f64::NAN, 0.0]).unwrap();
    assert!(matches!(softmax_rows(&nan), Err(Error::NonFinite { .. })));
}

#[test]
fn causal_mask_zeroes_future() {
    let mut t = Tape::<f64>::new();
    let x = t.input(Tensor::zeros([3, 3]));
    let y = t.masked_softmax(x, AttentionMask::Causal { full_prefix: 2 }).unwrap();
    let v = t.value(y);
    assert_eq!(&v[0..3], &[0.5, 0.5, 0.0]);
    assert_eq!(&v[3..6], &[0.5, 0.5, 0.0]);
    let third = 1.0 / 3.0;
    assert_eq!(&v[6..9], &[third, third, third]);
}

#[test]
fn primitive_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.input(Tensor::from_f64([2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
    let w = t.input(Tensor::eye(3));
    let b = t.input(Tensor::zeros([3]));
    let y = t.linear(x, w, Some(b)).unwrap();
    assert_eq!(t.value(y), t.value(x));

    let c = t.input(Tensor::full([2, 4], 3.25));
    let n = t.layer_norm(c, None, None, 1e-5).unwrap();
    assert!(t.value(n).iter().all(|&v| v == 0.0));

    // Sliding-window oracle for a length-3 averaging kernel.
    let sig = [1.0, 4.0, -2.0, 8.0, 0.5];
    let s = t.input(Tensor::from_f64([1, 5], &sig).unwrap());
    let k = t.input(Tensor::full([1, 1, 3], 1.0 / 3.0));
    let out = t.conv1d(s, k, None, 1, 0).unwrap();
    assert_eq!(t.dims(out), &[1, 3]);
    for i in 0..3 {
        let want = (sig[i] + sig[i + 1] + sig[i + 2]) / 3.0;
        assert!((t.value(out)[i] - want).abs() < 1e-12);
    }

    let table = t.input(Tensor::from_fn([4, 2], |i| i as f64));
    let e = t.embedding(table, &[3, 0]).unwrap();
    assert_eq!(t.value(e), &[6.0, 7.0, 0.0, 1.0]);
    assert!(matches!(t.embedding(table, &[4]), Err(Error::Index { .. })));

    let a = t.input(Tensor::from_fn([2, 1, 2], |i| i as f64));
    let bb = t.input(Tensor::from_fn([2, 2, 2], |i| 10.0 + i as f64));
    let cat = t.concat(&[a, bb], 1).unwrap();
    assert_eq!(t.dims(cat), &[2, 3, 2]);
    assert_eq!(
        t.value(cat),
        &[0.0, 1.0, 10.0, 11.0, 12.0, 13.0, 2.0, 3.0, 14.0, 15.0, 16.0, 17.0]
    );
    let m = t.mean_pool(cat, 1).unwrap();
    assert_eq!(t.dims(m), &[2, 2]);
    for (g, w) in t.value(m).iter().zip([22.0 / 3.0, 25.0 / 3.0, 32.0 / 3.0, 35.0 / 3.0]) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn conv2d_matches_direct_oracle() {
    let mut r = rng(3);
    let (c, h, w, o, k, stride, pad) = (2, 5, 6, 3, 3, 2, 1);
    let x: Vec<f64> = (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect();
    let kern: Vec<f64> = (0..o * c * k * k).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut t = Tape::<f64>::new();
    let xv = t.input(Tensor::from_f64([c, h, w], &x).unwrap());
    let kv = t.input(Tensor::from_f64([o, c, k, k], &kern).unwrap());
    let y = t.conv2d(xv, kv, None, stride, pad).unwrap();
    let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
    assert_eq!(t.dims(y), &[o, oh, ow]);
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c {
                    for a in 0..k {
                        for b in 0..k {
                            let (ii, jj) = ((i * stride + a) as isize - pad as isize, (j * stride + b) as isize - pad as isize);
                            if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                acc += x[(ci * h + ii as usize) * w + jj as usize] * kern[((oc * c + ci) * k + a) * k + b];
                            }
                        }
                    }
                }
                assert!((t.value(y)[(oc * oh + i) * ow + j] - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn backward_trivial_cases() {
    let mut s = ParamStore::<f64>::new();
    let x = s
        .add("x", "g", Tensor::from_f64([2, 2], &[1.0, -2.0, 0.5, 3.0]).unwrap(), false)
        .unwrap();
    let unused = s.add("unused", "g", Tensor::zeros([3]), false).unwrap();

    let mut t = Tape::with_store(&s);
    let xv = t.param(x).unwrap();
    let l = t.sum(xv).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap(), &[1.0; 4]);

    let mut t = Tape::with_store(&s);
    let xv = t.param(x).unwrap();
    let sq = t.mul(xv, xv).unwrap();
    let sm = t.sum(sq).unwrap();
    let l = t.scale(sm, 0.5).unwrap();
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap(), s.get(x).data());

    // Accumulation until zeroing; disconnected params keep a zero gradient.
    s.accumulate(&g).unwrap();
    s.accumulate(&g).unwrap();
    assert_eq!(s.get(x).grad().unwrap(), &[2.0, -4.0, 1.0, 6.0]);
    assert_eq!(s.get(unused).grad().unwrap(), &[0.0; 3]);
    s.zero_grad();
    assert_eq!(s.get(x).grad().unwrap(), &[0.0; 4]);

    let mut t = Tape::with_store(&s);
    let xv = t.param(x).unwrap();
    assert!(matches!(t.backward(xv), Err(Error::Shape { .. })));
}

#[test]
fn frozen_params_receive_no_gradient() {
    let mut s = ParamStore::<f64>::new();
    let a = s.add("a", "base", Tensor::full([2], 2.0), true).unwrap();
    let b = s.add("b", "head", Tensor::full([2], 3.0), false).unwrap();
    let mut t = Tape::with_store(&s);
    let (av, bv) = (t.param(a).unwrap(), t.param(b).unwrap());
    let p = t.mul(av, bv).unwrap();
    let l = t.sum(p).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.get(a).is_none());
    assert_eq!(g.get(b).unwrap(), &[2.0, 2.0]);
}

/// Builds `sum(f(params) * probe)` with a fixed random probe so every output
/// element carries a distinct weight.
fn probed<'s>(t: &mut Tape<'s, f64>, y: Var, seed: u64) -> Var {
    let n = t.value(y).len();
    let mut r = rng(seed);
    let probe = t.input(Tensor::from_fn(t.dims(y).to_vec(), |_| r.random_range(-1.0..1.0)));
    debug_assert_eq!(t.value(probe).len(), n);
    let p = t.mul(y, probe).unwrap();
    t.sum(p).unwrap()
}

fn store_with(shapes: &[&[usize]], seed: u64) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut r = rng(seed);
    let mut s = ParamStore::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, d)| s.add(format!("p{i}"), "g", init::normal(d, 0.7, &mut r), false).unwrap())
        .collect();
    (s, ids)
}

fn check(shapes: &[&[usize]], tol: f64, f: impl Fn(&mut Tape<'_, f64>, &[Var]) -> Var) {
    let (mut s, ids) = store_with(shapes, 11);
    let cfg = GradCheckConfig {
        samples: 60,
        epsilon: 1e-5,
        tolerance: tol,
        ..Default::default()
    };
    let report = grad_check(
        &mut s,
        |t| {
            let vars: Vec<Var> = ids.iter().map(|&id| t.param(id)).collect::<Result<_, _>>()?;
            let y = f(t, &vars);
            Ok(probed(t, y, 5))
        },
        &cfg,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn gradients_of_every_primitive() {
    check(&[&[3, 4], &[4, 2]], 1e-6, |t, v| t.matmul(v[0], v[1]).unwrap());
    check(&[&[4, 3], &[2, 4]], 1e-6, |t, v| t.matmul_t(v[0], true, v[1], true).unwrap());
    check(&[&[3, 4], &[4]], 1e-6, |t, v| t.add_bias(v[0], v[1]).unwrap());
    check(&[&[2, 3], &[2, 3]], 1e-6, |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let b = t.sub(a, v[1]).unwrap();
        let c = t.mul(b, v[1]).unwrap();
        t.scale(c, 1.7).unwrap()
    });
    check(&[&[3, 5]], 1e-4, |t, v| t.gelu(v[0]).unwrap());
    check(&[&[3, 5]], 1e-6, |t, v| t.softmax_rows(v[0]).unwrap());
    check(&[&[4, 4]], 1e-6, |t, v| {
        t.masked_softmax(v[0], AttentionMask::Causal { full_prefix: 2 }).unwrap()
    });
    check(&[&[3, 6], &[6], &[6]], 1e-6, |t, v| {
        t.layer_norm(v[0], Some(v[1]), Some(v[2]), 1e-5).unwrap()
    });
    check(&[&[3, 4]], 1e-6, |t, v| {
        let a = t.transpose(v[0]).unwrap();
        t.reshape(a, [2, 6]).unwrap()
    });
    check(&[&[2, 3], &[2, 1]], 1e-6, |t, v| t.concat(&[v[0], v[1]], 1).unwrap());
    check(&[&[2, 5, 3]], 1e-6, |t, v| t.slice(v[0], 1, 1, 3).unwrap());
    check(&[&[5, 3]], 1e-6, |t, v| t.embedding(v[0], &[4, 1, 4, 0]).unwrap());
    check(&[&[2, 9], &[3, 2, 3], &[3]], 1e-6, |t, v| {
        t.conv1d(v[0], v[1], Some(v[2]), 2, 1).unwrap()
    });
    check(&[&[2, 5, 6], &[3, 2, 3, 3], &[3]], 1e-6, |t, v| {
        t.conv2d(v[0], v[1], Some(v[2]), 2, 1).unwrap()
    });
    check(&[&[2, 3, 4]], 1e-6, |t, v| t.mean_pool(v[0], 1).unwrap());
    check(&[&[4, 3]], 1e-6, |t, v| t.cross_entropy(v[0], &[2, 0, 1, 2]).unwrap());
    check(&[&[2, 3]], 1e-6, |t, v| t.mse(v[0], &[0.5, -1.0, 2.0, 0.0, 0.1, 3.0]).unwrap());
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    let (mut s, ids) = store_with(&[&[4, 6], &[6], &[6, 3], &[3]], 21);
    let mut r = rng(22);
    let x = Tensor::<f64>::from_fn([5, 4], |_| r.random_range(-1.0..1.0));
    let cfg = GradCheckConfig {
        samples: s.trainable_scalars(),
        epsilon: 1e-4,
        tolerance: 1e-6,
        ..Default::default()
    };
    let report = grad_check(
        &mut s,
        |t| {
            let xv = t.input(x.clone());
            let p: Vec<Var> = ids.iter().map(|&id| t.param(id)).collect::<Result<_, _>>()?;
            let h = t.linear(xv, p[0], Some(p[1]))?;
            let h = t.layer_norm(h, None, None, 1e-5)?;
            let y = t.linear(h, p[2], Some(p[3]))?;
            t.cross_entropy(y, &[0, 2, 1, 1, 0])
        },
        &cfg,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn linear_model_is_exact() {
    let (mut s, ids) = store_with(&[&[3, 2]], 31);
    let cfg = GradCheckConfig {
        samples: 6,
        tolerance: 1e-10,
        ..Default::default()
    };
    let report = grad_check(
        &mut s,
        |t| {
            let x = t.input(Tensor::from_f64([1, 3], &[0.5, -1.0, 2.0]).unwrap());
            let w = t.param(ids[0])?;
            let y = t.matmul(x, w)?;
            t.sum(y)
        },
        &cfg,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-10, "{report:?}");
}

#[test]
fn grad_check_detects_nondeterminism() {
    let (mut s, ids) = store_with(&[&[2]], 41);
    let mut calls = 0.0;
    let err = grad_check(
        &mut s,
        |t| {
            calls += 1.0;
            let w = t.param(ids[0])?;
            let l = t.sum(w)?;
            t.scale(l, calls)
        },
        &GradCheckConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn grad_check_restores_parameters() {
    let (mut s, ids) = store_with(&[&[3, 3]], 51);
    let before = s.get(ids[0]).clone();
    grad_check(
        &mut s,
        |t| {
            let w = t.param(ids[0])?;
            let g = t.gelu(w)?;
            t.sum(g)
        },
        &GradCheckConfig {
            samples: 9,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(s.get(ids[0]).bits_eq(&before));
}

#[test]
fn identical_seeds_give_identical_forward() {
    let run = || {
        let (s, ids) = store_with(&[&[4, 4]], 61);
        let mut t = Tape::with_store(&s);
        let w = t.param(ids[0]).unwrap();
        let y = t.softmax_rows(w).unwrap();
        let y = t.gelu(y).unwrap();
        t.tensor(y)
    };
    assert!(run().bits_eq(&run()));
}

#[test]
fn stt_roundtrip_both_precisions() {
    let dir = tempfile::tempdir().unwrap();
    let t32 = Tensor::<f32>::from_fn([2, 3, 1], |i| (i as f32).sin() * 1e-3);
    let p = dir.path().join("a.stt");
    stt::write(&p, &t32).unwrap();
    assert!(stt::read::<f32>(&p).unwrap().bits_eq(&t32));

    let t64 = Tensor::<f64>::from_fn([4], |i| (i as f64).exp());
    let p = dir.path().join("b.stt");
    stt::write(&p, &t64).unwrap();
    assert!(stt::read::<f64>(&p).unwrap().bits_eq(&t64));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(m in 1usize..=64, n in 1usize..=64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = Tensor::<f32>::from_fn([m, n], |_| r.random_range(-30.0..30.0));
        let y = softmax_rows(&x).unwrap();
        for row in y.data().chunks(n) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn primitives_stay_finite(vals in proptest::collection::vec(-1e3f64..1e3, 12)) {
        let mut t = Tape::<f32>::new();
        let x = t.input(Tensor::from_f64([3, 4], &vals).unwrap());
        let g = t.gelu(x).unwrap();
        let s = t.softmax_rows(g).unwrap();
        let n = t.layer_norm(x, None, None, 1e-5).unwrap();
        let w = t.input(Tensor::full([4, 4], 0.5));
        let y = t.matmul(n, w).unwrap();
        let l = t.cross_entropy(x, &[0, 1, 3]).unwrap();
        for v in [g, s, n, y, l] {
            prop_assert!(t.value(v).iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn stt_roundtrip_is_bit_exact(dims in proptest::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = Tensor::<f32>::from_fn(dims, |_| r.random::<f32>() * 2e3 - 1e3);
        let bytes = stt::encode(&t).unwrap();
        let back = stt::decode::<f32>(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert!(back.bits_eq(&t));
        prop_assert_eq!(stt::encode(&back).unwrap(), bytes);
    }
}
