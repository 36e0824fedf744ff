use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Real;

const LN_2PI: f64 = 1.8378770664093453;

/// Action distribution produced by one head.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist<T> {
    Gaussian { mean: T, log_std: T },
    Categorical { logits: Vec<T> },
}

/// Gradient of a scalar w.r.t. the distribution parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DistGrad<T> {
    Gaussian { mean: T, log_std: T },
    Categorical { logits: Vec<T> },
}

/// A sampled or deterministic action. `value` is the unclamped Gaussian
/// sample or the chosen atom/bearing; `index` is set for categorical heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub value: f64,
    pub index: Option<usize>,
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: T = e.iter().cloned().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

impl<T: Real> Dist<T> {
    pub fn zero_grad(&self) -> DistGrad<T> {
        match self {
            Dist::Gaussian { .. } => DistGrad::Gaussian { mean: T::zero(), log_std: T::zero() },
            Dist::Categorical { logits } => DistGrad::Categorical { logits: vec![T::zero(); logits.len()] },
        }
    }

    pub fn probs(&self) -> Option<Vec<T>> {
        match self {
            Dist::Categorical { logits } => Some(softmax(logits)),
            _ => None,
        }
    }

    /// Log density of the unclamped Gaussian, or log probability of the
    /// categorical index.
    pub fn log_prob(&self, a: &Action) -> T {
        match self {
            Dist::Gaussian { mean, log_std } => {
                let z = (T::lit(a.value) - *mean) / log_std.exp();
                -T::lit(0.5) * z * z - *log_std - T::lit(0.5 * LN_2PI)
            }
            Dist::Categorical { logits } => log_softmax(logits)[a.index.expect("categorical action has an index")],
        }
    }

    pub fn grad_log_prob(&self, a: &Action) -> DistGrad<T> {
        match self {
            Dist::Gaussian { mean, log_std } => {
                let s = log_std.exp();
                let d = T::lit(a.value) - *mean;
                DistGrad::Gaussian { mean: d / (s * s), log_std: d * d / (s * s) - T::one() }
            }
            Dist::Categorical { logits } => {
                let mut g: Vec<T> = softmax(logits).into_iter().map(|p| -p).collect();
                g[a.index.expect("categorical action has an index")] += T::one();
                DistGrad::Categorical { logits: g }
            }
        }
    }

    /// Nats; for the Gaussian this is the unclamped distribution.
    pub fn entropy(&self) -> T {
        match self {
            Dist::Gaussian { log_std, .. } => T::lit(0.5 * (LN_2PI + 1.0)) + *log_std,
            Dist::Categorical { logits } => {
                let lp = log_softmax(logits);
                -lp.iter().map(|&l| l.exp() * l).sum::<T>()
            }
        }
    }

    pub fn grad_entropy(&self) -> DistGrad<T> {
        match self {
            Dist::Gaussian { .. } => DistGrad::Gaussian { mean: T::zero(), log_std: T::one() },
            Dist::Categorical { logits } => {
                let lp = log_softmax(logits);
                let h = -lp.iter().map(|&l| l.exp() * l).sum::<T>();
                // dH/dz_i = -p_i (log p_i + H)
                DistGrad::Categorical { logits: lp.iter().map(|&l| -l.exp() * (l + h)).collect() }
            }
        }
    }

    /// Mean of the Gaussian, or the probability-weighted sum of `values`.
    pub fn deterministic(&self, values: &[f64]) -> f64 {
        match self {
            Dist::Gaussian { mean, .. } => mean.f64(),
            Dist::Categorical { logits } => softmax(logits).iter().zip(values).map(|(p, v)| p.f64() * v).sum(),
        }
    }

    /// Gradient of [`Dist::deterministic`].
    pub fn grad_deterministic(&self, values: &[f64]) -> DistGrad<T> {
        match self {
            Dist::Gaussian { .. } => DistGrad::Gaussian { mean: T::one(), log_std: T::zero() },
            Dist::Categorical { logits } => {
                let p = softmax(logits);
                let e: T = p.iter().zip(values).map(|(&pi, &v)| pi * T::lit(v)).sum();
                DistGrad::Categorical { logits: p.iter().zip(values).map(|(&pi, &v)| pi * (T::lit(v) - e)).collect() }
            }
        }
    }

    /// Deterministic action as an [`Action`]; categorical heads keep the
    /// most likely index for bookkeeping.
    pub fn mode_action(&self, values: &[f64]) -> Action {
        let index = self.probs().map(|p| (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best }));
        Action { value: self.deterministic(values), index }
    }

    pub fn sample<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Action {
        match self {
            Dist::Gaussian { mean, log_std } => {
                let eps: f64 = StandardNormal.sample(rng);
                let s = log_std.f64().exp();
                Action { value: if s > 0.0 { mean.f64() + s * eps } else { mean.f64() }, index: None }
            }
            Dist::Categorical { logits } => {
                let p = softmax(logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = p.len() - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi.f64();
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                Action { value: values[idx], index: Some(idx) }
            }
        }
    }
}

impl<T: Real> DistGrad<T> {
    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &DistGrad<T>, k: T) {
        match (self, other) {
            (DistGrad::Gaussian { mean, log_std }, DistGrad::Gaussian { mean: m, log_std: l }) => {
                *mean += k * *m;
                *log_std += k * *l;
            }
            (DistGrad::Categorical { logits }, DistGrad::Categorical { logits: o }) => {
                logits.iter_mut().zip(o).for_each(|(a, b)| *a += k * *b);
            }
            _ => panic!("distribution kinds differ"),
        }
    }
}
