use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2fin_core::autodiff::Tape;
use s2fin_core::sparse::*;
use s2fin_core::Tensor;

/// Projection onto the probability simplex by enumerating every support set
/// and keeping the closest feasible candidate.
fn simplex_projection(z: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let size = mask.count_ones() as f64;
        let sum: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| z[i]).sum();
        let tau = (sum - 1.0) / size;
        let w: Vec<f64> = (0..m)
            .map(|i| if mask >> i & 1 == 1 { z[i] - tau } else { 0.0 })
            .collect();
        if w.iter().any(|&v| v < -1e-15) {
            continue;
        }
        let dist: f64 = w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, w));
        }
    }
    best.unwrap().1
}

#[test]
fn matches_brute_force_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..400 {
        let m = rng.gen_range(1..=10);
        let scale = rng.gen_range(0.1..5.0);
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-scale..scale)).collect();
        let got = sparsemax_threshold(&z).unwrap();
        let want = simplex_projection(&z);
        for (a, b) in got.w.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9, "{z:?}: {:?} vs {want:?}", got.w);
        }
        assert!((got.w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(got.support_size, got.w.iter().filter(|&&v| v > 0.0).count());
        for (&zi, &wi) in z.iter().zip(&got.w) {
            if zi <= got.tau {
                assert_eq!(wi, 0.0);
            }
        }
    }
}

#[test]
fn tied_scores_keep_all_or_none() {
    let w = sparsemax_threshold(&[1.0, 1.0, -5.0]).unwrap();
    assert_eq!(w.w, vec![0.5, 0.5, 0.0]);
    assert_eq!(w.support_size, 2);
}

#[test]
fn tokens_are_always_on_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let m = rng.gen_range(1..20);
        let d = rng.gen_range(1..6);
        let data: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w = spatial_sparse_scores(&Tensor::from_vec(&[m, d], data).unwrap()).unwrap();
        assert!(w.w.iter().all(|&v| v >= 0.0));
        assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn shift_covariance(z in proptest::collection::vec(-5.0..5.0f64, 1..12), c in -20.0..20.0f64) {
        let a = sparsemax_threshold(&z).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let b = sparsemax_threshold(&shifted).unwrap();
        for (x, y) in a.w.iter().zip(&b.w) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn raising_a_score_keeps_it_in_the_support(
        z in proptest::collection::vec(-5.0..5.0f64, 1..12),
        pick in 0usize..12,
        bump in 0.0..5.0f64,
    ) {
        let i = pick % z.len();
        let before = sparsemax_threshold(&z).unwrap();
        let mut raised = z.clone();
        raised[i] += bump;
        let after = sparsemax_threshold(&raised).unwrap();
        if before.w[i] > 0.0 {
            prop_assert!(after.w[i] > 0.0);
        }
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn depthwise_conv_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (c, h, w, k) = (3, 5, 4, 3);
    let x = random(&mut rng, &[c, h, w]);
    let wt = random(&mut rng, &[3, c, k, k]);
    let b = random(&mut rng, &[3, c]);
    let qkv = depthwise_qkv(&x, &wt, &b).unwrap();
    let r = (k / 2) as isize;
    for (j, out) in [&qkv.q, &qkv.k, &qkv.v].into_iter().enumerate() {
        assert_eq!(out.shape(), &[h * w, c]);
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b.data()[j * c + ch];
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (sy, sx) = (y as isize + dy, xx as isize + dx);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let kw = wt.data()[((j * c + ch) * k + (dy + r) as usize) * k + (dx + r) as usize];
                            acc += kw * x.data()[(ch * h + sy as usize) * w + sx as usize];
                        }
                    }
                    let got = out.data()[(y * w + xx) * c + ch];
                    assert!((got - acc).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn identity_and_zero_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (c, h, w) = (2, 3, 4);
    let x = random(&mut rng, &[c, h, w]);
    let mut id = vec![0.0; 3 * c * 9];
    for i in 0..3 * c {
        id[i * 9 + 4] = 1.0;
    }
    let id = Tensor::from_vec(&[3, c, 3, 3], id).unwrap();
    let qkv = depthwise_qkv(&x, &id, &Tensor::zeros(&[3, c])).unwrap();
    assert_eq!(qkv.q, qkv.k);
    assert_eq!(qkv.k, qkv.v);
    for ch in 0..c {
        for t in 0..h * w {
            assert_eq!(qkv.q.data()[t * c + ch], x.data()[ch * h * w + t]);
        }
    }
    let bias = random(&mut rng, &[3, c]);
    let qkv = depthwise_qkv(&x, &Tensor::zeros(&[3, c, 3, 3]), &bias).unwrap();
    for (j, out) in [&qkv.q, &qkv.k, &qkv.v].into_iter().enumerate() {
        for t in 0..h * w {
            for ch in 0..c {
                assert_eq!(out.data()[t * c + ch], bias.data()[j * c + ch]);
            }
        }
    }
}

#[test]
fn attention_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (m, d) = (3, 4);
    let qkv = QkvTriple {
        q: random(&mut rng, &[m, d]),
        k: random(&mut rng, &[m, d]),
        v: random(&mut rng, &[m, d]),
    };
    let out = squared_relu_attention(&qkv).unwrap();
    for i in 0..m {
        for j in 0..d {
            let mut acc = 0.0;
            for t in 0..m {
                let s: f64 = (0..d).map(|e| qkv.q.data()[i * d + e] * qkv.k.data()[t * d + e]).sum();
                acc += s.max(0.0).powi(2) * qkv.v.data()[t * d + j];
            }
            assert!((out.data()[i * d + j] - acc).abs() <= 1e-10);
        }
    }
}

#[test]
fn attention_trivial_cases() {
    let n = 4;
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    let eye = Tensor::from_vec(&[n, n], eye).unwrap();
    let out = squared_relu_attention(&QkvTriple {
        q: eye.clone(),
        k: eye.clone(),
        v: eye.clone(),
    })
    .unwrap();
    assert_eq!(out, eye);

    let q = Tensor::full(&[3, 2], 1.0);
    let k = Tensor::full(&[3, 2], -1.0);
    let v = Tensor::full(&[3, 2], 7.0);
    let out = squared_relu_attention(&QkvTriple { q, k, v }).unwrap();
    assert!(out.data().iter().all(|&x| x == 0.0));
}

#[test]
fn sparsemax_gradient_matches_finite_differences() {
    let z = Tensor::from_vec(&[5], vec![0.9, 0.3, -0.2, 0.45, 0.1]).unwrap();
    let coef = [1.0, -2.0, 0.5, 3.0, -1.0];
    let loss = |z: &Tensor| {
        let w = sparsemax_threshold(z.data()).unwrap().w;
        w.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()
    };
    let tape = Tape::new();
    let zv = tape.leaf_ref(&z, true);
    let w = tape.sparsemax(zv);
    let c = tape.constant(Tensor::from_vec(&[5], coef.to_vec()).unwrap());
    let l = tape.sum(tape.mul(w, c));
    tape.backward(l);
    let g = tape.grad(zv);
    for i in 0..5 {
        let mut p = z.clone();
        p.data_mut()[i] += 1e-6;
        let mut m = z.clone();
        m.data_mut()[i] -= 1e-6;
        let fd = (loss(&p) - loss(&m)) / 2e-6;
        assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
    }
}
