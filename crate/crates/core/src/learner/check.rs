use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{loss_and_grad, segments, PpoConfig, RolloutBatch, Transition, WorkerRollout};
use crate::autodiff::{relative_error, Real, Tensor};
use crate::par::Workers;
use crate::policy::{Action, Policy, PolicyInput};
use crate::world::Command;

/// Random rollout for gradient checks and benchmarks: random images and
/// metrics, stored log-probabilities within ±0.05 of the current policy's,
/// random advantages, returns, episode ends (probability 0.2) and depth
/// targets. Recurrent state is carried through each worker's sequence.
pub fn synthetic_batch<T: Real>(policy: &Policy<T>, workers: usize, steps: usize, seed: u64) -> RolloutBatch<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = &policy.cfg;
    let channels = if cfg.semseg_only { 3 } else { 4 };
    let values = cfg.action_values();
    let mut out = Vec::with_capacity(workers);
    for _ in 0..workers {
        let mut hidden = policy.initial_hidden();
        let mut transitions = Vec::with_capacity(steps);
        for _ in 0..steps {
            let n = channels * policy.height * policy.width;
            let input = PolicyInput {
                image: Tensor {
                    shape: vec![channels, policy.height, policy.width],
                    data: (0..n).map(|_| T::lit(rng.random_range(0.0..1.0))).collect(),
                },
                metrics: [0; 3].map(|_| T::lit(rng.random_range(-1.0..1.0))),
                command: Command::from_index(rng.random_range(0..4)).unwrap(),
            };
            let (o, _) = policy.forward(&input, hidden.as_deref()).expect("input matches policy");
            let action = if values.is_empty() {
                Action { value: o.dist.deterministic(&values) + 0.2 * rng.sample::<f64, _>(StandardNormal), index: None }
            } else {
                let i = rng.random_range(0..values.len());
                Action { value: values[i], index: Some(i) }
            };
            let done = rng.random_bool(0.2);
            let log_prob = o.dist.log_prob(&action).f64() + rng.random_range(-0.05..0.05);
            transitions.push(Transition {
                input,
                action,
                log_prob,
                value: o.value.f64(),
                reward: rng.sample(StandardNormal),
                done,
                depth_target: cfg.aux_depth.then(|| (0..cfg.depth_rays).map(|_| rng.random_range(0.0..1.0)).collect()),
                hidden: hidden.clone(),
            });
            hidden = if done { policy.initial_hidden() } else { o.hidden };
        }
        let advantages = (0..steps).map(|_| StandardNormal.sample(&mut rng)).collect();
        let returns = (0..steps).map(|_| StandardNormal.sample(&mut rng)).collect();
        out.push(WorkerRollout { transitions, bootstrap_value: 0.0, finished: vec![], advantages, returns });
    }
    RolloutBatch { workers: out }
}

/// Largest relative error between the analytic gradient of the full PPO
/// objective (all components, L2 included) and central differences with
/// step `h`, over every parameter. Segments span `window` steps.
pub fn ppo_grad_check(policy: &Policy<f64>, batch: &RolloutBatch<f64>, cfg: &PpoConfig, window: usize, h: f64) -> f64 {
    check_coordinates(policy, batch, cfg, window, h, |_, len| (0..len).collect())
}

/// [`ppo_grad_check`] over `per_tensor` randomly chosen entries of every
/// parameter tensor (all entries of smaller tensors), for networks too large
/// to difference exhaustively.
pub fn ppo_grad_check_sampled(
    policy: &Policy<f64>,
    batch: &RolloutBatch<f64>,
    cfg: &PpoConfig,
    window: usize,
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    check_coordinates(policy, batch, cfg, window, h, |_, len| {
        if len <= per_tensor {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, per_tensor).into_vec()
        }
    })
}

fn check_coordinates(
    policy: &Policy<f64>,
    batch: &RolloutBatch<f64>,
    cfg: &PpoConfig,
    window: usize,
    h: f64,
    mut pick: impl FnMut(usize, usize) -> Vec<usize>,
) -> f64 {
    let pool = Workers::sequential();
    let segs = segments(batch, window);
    let (_, analytic) = loss_and_grad(policy, batch, &segs, cfg, 1, &pool).expect("finite loss");
    let mut probe = policy.clone();
    let mut params: Vec<Tensor<f64>> = policy.params().into_iter().cloned().collect();
    let mut err = 0.0f64;
    for k in 0..params.len() {
        for i in pick(k, params[k].data.len()) {
            let orig = params[k].data[i];
            let mut eval = |v: f64, params: &mut Vec<Tensor<f64>>| {
                params[k].data[i] = v;
                probe.set_params(params).unwrap();
                loss_and_grad(&probe, batch, &segs, cfg, 1, &pool).expect("finite loss").0.total
            };
            let up = eval(orig + h, &mut params);
            let down = eval(orig - h, &mut params);
            params[k].data[i] = orig;
            err = err.max(relative_error(analytic[k].data[i], (up - down) / (2.0 * h)));
        }
    }
    err
}
