use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn randomize(net: &mut Network<f64>, rng: &mut ChaCha8Rng) {
    for t in net.params_mut() {
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
}

/// One small network per layer kind, each ending in something smooth enough
/// for central differences.
fn kind_nets(rng: &mut ChaCha8Rng) -> Vec<(Network<f64>, Tensor<f64>)> {
    let cases: Vec<(Vec<usize>, Vec<LayerSpec>)> = vec![
        (vec![2, 7, 6], vec![LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1 }]),
        (vec![5], vec![LayerSpec::Dense { inputs: 5, units: 4 }]),
        (vec![6], vec![LayerSpec::Dense { inputs: 6, units: 6 }, LayerSpec::Relu]),
        (vec![2, 6, 6], vec![LayerSpec::MaxPool { size: 2 }]),
        (vec![7], vec![LayerSpec::Softmax]),
        (vec![3 + 4], vec![LayerSpec::GruCell { inputs: 3, units: 4 }]),
    ];
    cases
        .into_iter()
        .map(|(shape, layers)| {
            let mut net = Network::zeros(&shape, layers).unwrap();
            randomize(&mut net, rng);
            let x = rand_tensor(&shape, rng);
            (net, x)
        })
        .collect()
}

#[test]
fn identity_dense_passes_input_through() {
    let mut net = Network::<f64>::zeros(&[3], vec![LayerSpec::Dense { inputs: 3, units: 3 }]).unwrap();
    for i in 0..3 {
        net.params_mut()[0].data[i * 3 + i] = 1.0;
    }
    let x = Tensor::vector(vec![0.5, -2.0, 3.25]);
    assert_eq!(net.infer(&x).unwrap().data, x.data);
}

#[test]
fn relu_of_negatives_is_zero() {
    let net = Network::<f64>::zeros(&[4], vec![LayerSpec::Relu]).unwrap();
    let y = net.infer(&Tensor::vector(vec![-1.0, -0.1, -5.0, -1e-9])).unwrap();
    assert!(y.data.iter().all(|&v| v == 0.0));
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (ic, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oc, k) = (w.shape[0], w.shape[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let at = |c: usize, y: isize, xx: isize| {
        if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.data[(c * h + y as usize) * wd + xx as usize]
        }
    };
    let mut out = vec![];
    for o in 0..oc {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = b.data[o];
                for c in 0..ic {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let xx = (ox * stride + kx) as isize - pad as isize;
                            s += w.data[((o * ic + c) * k + ky) * k + kx] * at(c, y, xx);
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    Tensor::new(vec![oc, ho, wo], out).unwrap()
}

#[test]
fn three_layer_net_matches_naive_math() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layers = vec![
        LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, padding: 1 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 3 * 5 * 4, units: 6 },
    ];
    let net = Network::<f64>::init(&[2, 5, 4], layers, &mut rng).unwrap();
    let x = rand_tensor(&[2, 5, 4], &mut rng);
    let p = net.params();
    let conv = naive_conv(&x, &p[0], &p[1], 1, 1);
    let hidden: Vec<f64> = conv.data.iter().map(|v| v.max(0.0)).collect();
    let expect: Vec<f64> =
        (0..6).map(|i| p[3].data[i] + (0..hidden.len()).map(|j| p[2].data[i * hidden.len() + j] * hidden[j]).sum::<f64>()).collect();
    let got = net.infer(&x).unwrap();
    for (a, b) in got.data.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn linear_gradient_is_input() {
    let mut net = Network::<f64>::zeros(&[3], vec![LayerSpec::Dense { inputs: 3, units: 1 }]).unwrap();
    net.params_mut()[0].data = vec![0.3, -0.2, 0.9];
    let x = Tensor::vector(vec![1.5, -2.0, 0.25]);
    let (_, cache) = net.forward(&x).unwrap();
    let mut g = zeros_like(net.params());
    net.backward(&cache, &Tensor::vector(vec![1.0]), &mut g).unwrap();
    assert_eq!(g[0].data, x.data);
    assert_eq!(g[1].data, vec![1.0]);
}

#[test]
fn zero_output_gradient_gives_zero_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (net, x) in kind_nets(&mut rng) {
        let (y, cache) = net.forward(&x).unwrap();
        let mut g = zeros_like(net.params());
        let dx = net.backward(&cache, &Tensor::zeros(&y.shape), &mut g).unwrap();
        assert!(g.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
        assert!(dx.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        for (net, x) in kind_nets(&mut rng) {
            let e = grad_check(&net, &x, 1e-5);
            assert!(e < 1e-4, "{:?}: {e}", net.layers());
        }
    }
}

#[test]
fn linear_net_gradcheck_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net =
        Network::<f64>::zeros(&[4], vec![LayerSpec::Dense { inputs: 4, units: 3 }, LayerSpec::Dense { inputs: 3, units: 2 }]).unwrap();
    randomize(&mut net, &mut rng);
    // Central differences carry no truncation error on a linear map, so a
    // wide step only shrinks round-off.
    let e = grad_check(&net, &rand_tensor(&[4], &mut rng), 1e-2);
    assert!(e < 1e-10, "{e}");
}

#[test]
fn conv_relu_dense_stack_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let layers = vec![
        LayerSpec::Conv2d { in_channels: 3, out_channels: 4, kernel: 3, stride: 1, padding: 0 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        LayerSpec::Dense { inputs: 4 * 3 * 3, units: 5 },
    ];
    let net = Network::<f64>::init(&[3, 8, 8], layers, &mut rng).unwrap();
    assert!(grad_check(&net, &rand_tensor(&[3, 8, 8], &mut rng), 1e-5) < 1e-4);
}

/// Loss after unrolling the cell over `xs` from `h0`.
fn unrolled_loss(net: &Network<f64>, xs: &[Vec<f64>], h0: &[f64], c: &[f64]) -> f64 {
    let mut h = h0.to_vec();
    for x in xs {
        let mut v = x.clone();
        v.extend_from_slice(&h);
        h = net.infer(&Tensor::vector(v)).unwrap().data;
    }
    h.iter().zip(c).map(|(a, b)| a * b).sum()
}

#[test]
fn gru_unrolled_five_steps_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (ni, nh) = (3, 4);
    let mut net = Network::<f64>::zeros(&[ni + nh], vec![LayerSpec::GruCell { inputs: ni, units: nh }]).unwrap();
    randomize(&mut net, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let h0: Vec<f64> = (0..nh).map(|_| rng.random_range(-0.5..0.5)).collect();
    let c: Vec<f64> = (0..nh).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut h = h0.clone();
    let mut caches = vec![];
    for x in &xs {
        let mut v = x.clone();
        v.extend_from_slice(&h);
        let (y, cache) = net.forward(&Tensor::vector(v)).unwrap();
        caches.push(cache);
        h = y.data;
    }
    let mut grads = zeros_like(net.params());
    let mut gh = c.clone();
    for cache in caches.iter().rev() {
        let dx = net.backward(cache, &Tensor::vector(gh), &mut grads).unwrap();
        gh = dx.data[ni..].to_vec();
    }
    let mut probe = net.clone();
    let mut params = net.params().to_vec();
    let numeric = central_differences(&mut params, 1e-5, |p| {
        probe.params_mut().clone_from_slice(p);
        unrolled_loss(&probe, &xs, &h0, &c)
    });
    assert!(max_relative_error(&grads, &numeric) < 1e-4);
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::<f64>::init(&[3], vec![LayerSpec::Dense { inputs: 3, units: 2 }], &mut rng).unwrap();
    let (_, cache) = net.forward(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
    net.params_mut()[1].data[0] = 1.0;
    let mut g = zeros_like(net.params());
    assert_eq!(net.backward(&cache, &Tensor::vector(vec![1.0, 1.0]), &mut g), Err(AdError::StaleCache));
}

#[test]
fn shape_mismatch_is_an_error() {
    let net = Network::<f64>::zeros(&[1, 4, 4], vec![LayerSpec::MaxPool { size: 2 }]).unwrap();
    assert!(matches!(net.forward(&Tensor::vector(vec![0.0; 15])), Err(AdError::Shape { .. })));
    assert!(Network::<f64>::zeros(&[5], vec![LayerSpec::Dense { inputs: 4, units: 2 }]).is_err());
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut p = Tensor::vector(vec![1.0f64, -2.0]);
    let mut adam = Adam::new(&[&p]);
    adam.step(vec![&mut p], &[Tensor::vector(vec![0.0, 0.0])], 0.1);
    assert_eq!(p.data, vec![1.0, -2.0]);
    assert_eq!(adam.t, 1);
}

#[test]
fn adam_constant_gradient_steps_lr_sign() {
    let mut p = Tensor::vector(vec![0.0f64, 0.0]);
    let mut adam = Adam::new(&[&p]);
    let mut last = p.data.clone();
    for _ in 0..2000 {
        last = p.data.clone();
        adam.step(vec![&mut p], &[Tensor::vector(vec![3.0, -0.01])], 1e-3);
    }
    assert!((last[0] - p.data[0] - 1e-3).abs() < 1e-6);
    assert!((p.data[1] - last[1] - 1e-3).abs() < 1e-6);
}

#[test]
fn adam_descends_quadratic_bowl() {
    let target = [1.0, -3.0, 0.5];
    let scales = [1.0, 10.0, 0.1];
    let loss = |p: &[f64]| (0..3).map(|i| scales[i] * (p[i] - target[i]).powi(2)).sum::<f64>();
    let mut p = Tensor::vector(vec![0.0f64; 3]);
    let mut adam = Adam::new(&[&p]);
    let mut losses = vec![];
    for _ in 0..1000 {
        let g = Tensor::vector((0..3).map(|i| 2.0 * scales[i] * (p.data[i] - target[i])).collect());
        adam.step(vec![&mut p], &[g], 0.01);
        losses.push(loss(&p.data));
    }
    assert!(losses[999] < 1e-3 * losses[0]);
    let decreasing = losses[50..].windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(decreasing as f64 >= 0.9 * (losses.len() - 51) as f64);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Network::<f32>::init(
        &[2, 6, 6],
        vec![LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, padding: 0 }, LayerSpec::Relu],
        &mut rng,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n.ckpt");
    let header = serde_json::json!({ "arch": net.layers() });
    write_checkpoint(&path, &header, &net.params().iter().collect::<Vec<_>>()).unwrap();
    let (h, tensors) = read_checkpoint(&path).unwrap();
    assert_eq!(h["arch"], header["arch"]);
    let mut back = Network::<f32>::zeros(&[2, 6, 6], net.layers().to_vec()).unwrap();
    back.params_mut().clone_from_slice(&tensors);
    let x = Tensor::new(vec![2, 6, 6], (0..72).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
    assert_eq!(net.infer(&x).unwrap(), back.infer(&x).unwrap());

    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(read_checkpoint(&path), Err(AdError::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_backward_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (net, x) in kind_nets(&mut rng) {
            let (y1, c1) = net.forward(&x).unwrap();
            let (y2, c2) = net.forward(&x).unwrap();
            prop_assert_eq!(&y1, &y2);
            let mut g1 = zeros_like(net.params());
            let mut g2 = zeros_like(net.params());
            let d1 = net.backward(&c1, &y1, &mut g1).unwrap();
            let d2 = net.backward(&c2, &y2, &mut g2).unwrap();
            prop_assert_eq!(d1, d2);
            prop_assert_eq!(g1, g2);
        }
    }

    #[test]
    fn softmax_sums_to_one(v in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let net = Network::<f64>::zeros(&[v.len()], vec![LayerSpec::Softmax]).unwrap();
        let p = net.infer(&Tensor::vector(v)).unwrap();
        prop_assert!((p.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
