use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::layers::{self, LayerCache, LayerSpec};
use super::{AdError, Real, Tensor};

static STAMPS: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

/// Sequential stack of layers with its parameters. Every mutable access to
/// the parameters invalidates caches from earlier forward passes.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Tensor<T>>,
    offsets: Vec<usize>,
    stamp: u64,
}

/// Activations kept by [`Network::forward`] for one backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    stamp: u64,
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> Network<T> {
    /// Zero-initialized network; fails if the layer shapes do not chain.
    pub fn zeros(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self, AdError> {
        let mut shape = input_shape.to_vec();
        let mut shapes = vec![shape.clone()];
        let mut params = Vec::new();
        let mut offsets = Vec::new();
        for (index, l) in layers.iter().enumerate() {
            shape = l.output_shape(&shape).map_err(|message| AdError::Layer { index, message })?;
            shapes.push(shape.clone());
            offsets.push(params.len());
            params.extend(l.param_shapes().iter().map(|s| Tensor::zeros(s)));
        }
        offsets.push(params.len());
        Ok(Network { input_shape: input_shape.to_vec(), layers, shapes, params, offsets, stamp: fresh_stamp() })
    }

    /// He-uniform weights for conv and dense layers, zero biases, and
    /// uniform ±1/sqrt(units) for GRU weights.
    pub fn init<R: Rng + ?Sized>(input_shape: &[usize], layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self, AdError> {
        let mut net = Self::zeros(input_shape, layers)?;
        for li in 0..net.layers.len() {
            let (a, b) = (net.offsets[li], net.offsets[li + 1]);
            let bound = match net.layers[li] {
                LayerSpec::Conv2d { in_channels, kernel, .. } => (6.0 / (in_channels * kernel * kernel) as f64).sqrt(),
                LayerSpec::Dense { inputs, .. } => (6.0 / inputs as f64).sqrt(),
                LayerSpec::GruCell { units, .. } => 1.0 / (units as f64).sqrt(),
                _ => continue,
            };
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            let gru = matches!(net.layers[li], LayerSpec::GruCell { .. });
            for (k, t) in net.params[a..b].iter_mut().enumerate() {
                let is_weight = if gru { k < 3 } else { k == 0 };
                if is_weight {
                    t.data.iter_mut().for_each(|v| *v = T::lit(dist.sample(rng)));
                }
            }
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    /// Parameters of layer `i`.
    pub fn layer_params(&self, i: usize) -> &[Tensor<T>] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn layer_params_mut(&mut self, i: usize) -> &mut [Tensor<T>] {
        self.stamp = fresh_stamp();
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        &mut self.params[a..b]
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(|t| t.cast()).collect(),
            offsets: self.offsets.clone(),
            stamp: fresh_stamp(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), AdError> {
        let want: usize = self.input_shape.iter().product();
        let ok = match self.layers.first() {
            Some(LayerSpec::Conv2d { .. }) | Some(LayerSpec::MaxPool { .. }) => input.shape == self.input_shape,
            _ => input.len() == want,
        };
        if ok && input.len() == want {
            Ok(())
        } else {
            Err(AdError::Shape { expected: self.input_shape.clone(), got: input.shape.clone() })
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), AdError> {
        self.check_input(input)?;
        let mut x = Tensor { shape: self.input_shape.clone(), data: input.data.clone() };
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (y, c) = layers::forward(l, self.layer_params(i), &x);
            caches.push(c);
            x = y;
        }
        Ok((x, Cache { stamp: self.stamp, layers: caches }))
    }

    /// Forward pass without keeping activations.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, AdError> {
        self.forward(input).map(|(y, _)| y)
    }

    /// Accumulates parameter gradients into `grads` (same layout as
    /// [`Network::params`]) and returns the gradient w.r.t. the input.
    pub fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>, grads: &mut [Tensor<T>]) -> Result<Tensor<T>, AdError> {
        self.backward_impl(cache, grad_out, grads, true)
    }

    /// [`Network::backward`] without the input gradient of the first layer.
    pub fn backward_params(&self, cache: &Cache<T>, grad_out: &Tensor<T>, grads: &mut [Tensor<T>]) -> Result<(), AdError> {
        self.backward_impl(cache, grad_out, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        cache: &Cache<T>,
        grad_out: &Tensor<T>,
        grads: &mut [Tensor<T>],
        input_grad: bool,
    ) -> Result<Tensor<T>, AdError> {
        if cache.stamp != self.stamp || cache.layers.len() != self.layers.len() {
            return Err(AdError::StaleCache);
        }
        if grads.len() != self.params.len() {
            return Err(AdError::Shape { expected: vec![self.params.len()], got: vec![grads.len()] });
        }
        let out = self.output_shape();
        if grad_out.len() != out.iter().product::<usize>() {
            return Err(AdError::Shape { expected: out.to_vec(), got: grad_out.shape.clone() });
        }
        let mut g = Tensor { shape: out.to_vec(), data: grad_out.data.clone() };
        for i in (0..self.layers.len()).rev() {
            let (a, b) = (self.offsets[i], self.offsets[i + 1]);
            g = layers::backward(&self.layers[i], &self.params[a..b], &cache.layers[i], &g, &mut grads[a..b], input_grad || i > 0);
        }
        g.shape = self.input_shape.clone();
        Ok(g)
    }
}
