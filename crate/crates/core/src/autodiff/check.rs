use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{zeros_like, Network, Tensor};

/// `|a - b| / max(|a|, |b|, 1e-3)`. The floor keeps near-zero entries from
/// turning round-off into huge ratios.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn max_relative_error(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).flat_map(|(x, y)| x.data.iter().zip(&y.data).map(|(p, q)| relative_error(*p, *q))).fold(0.0, f64::max)
}

/// Central differences of `loss` w.r.t. every entry of `params`.
pub fn central_differences(params: &mut [Tensor<f64>], h: f64, mut loss: impl FnMut(&[Tensor<f64>]) -> f64) -> Vec<Tensor<f64>> {
    let mut out = zeros_like(params);
    for k in 0..params.len() {
        for i in 0..params[k].data.len() {
            let orig = params[k].data[i];
            params[k].data[i] = orig + h;
            let up = loss(params);
            params[k].data[i] = orig - h;
            let down = loss(params);
            params[k].data[i] = orig;
            out[k].data[i] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// Compares analytic and numeric gradients of `sum(c * net(input))` with a
/// fixed random `c`, over all parameters and the input. Returns the largest
/// relative error.
pub fn grad_check(net: &Network<f64>, input: &Tensor<f64>, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let n_out: usize = net.output_shape().iter().product();
    let c: Vec<f64> = (0..n_out).map(|_| StandardNormal.sample(&mut rng)).collect();
    let loss_of = |y: &Tensor<f64>| y.data.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();

    let (_, cache) = net.forward(input).expect("input shape");
    let mut grads = zeros_like(net.params());
    let dx = net.backward(&cache, &Tensor::new(net.output_shape().to_vec(), c.clone()).unwrap(), &mut grads).unwrap();

    let mut probe = net.clone();
    let mut params = net.params().to_vec();
    let numeric = central_differences(&mut params, h, |p| {
        probe.params_mut().clone_from_slice(p);
        loss_of(&probe.infer(input).unwrap())
    });
    let mut x = vec![input.clone()];
    let numeric_x = central_differences(&mut x, h, |xs| loss_of(&net.infer(&xs[0]).unwrap()));
    max_relative_error(&grads, &numeric).max(max_relative_error(&[dx], &numeric_x))
}
