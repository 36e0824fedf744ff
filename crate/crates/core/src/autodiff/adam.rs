use super::{Real, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one parameter list.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(shapes: &[&Tensor<T>]) -> Self {
        Adam {
            m: shapes.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            v: shapes.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            t: 0,
        }
    }

    /// One bias-corrected update of every tensor in `params`.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let (one_b1, one_b2) = (T::lit(1.0 - ADAM_BETA1), T::lit(1.0 - ADAM_BETA2));
        let (c1, c2, lr, eps) = (T::lit(c1), T::lit(c2), T::lit(lr), T::lit(ADAM_EPS));
        for (k, p) in params.into_iter().enumerate() {
            let g = &grads[k];
            assert_eq!(p.shape, g.shape);
            let (m, v) = (&mut self.m[k].data, &mut self.v[k].data);
            for i in 0..p.data.len() {
                m[i] = b1 * m[i] + one_b1 * g.data[i];
                v[i] = b2 * v[i] + one_b2 * g.data[i] * g.data[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
