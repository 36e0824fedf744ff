use rand::seq::SliceRandom;
use rand::Rng;

use super::{compute_gae, normalize, LearnError, PpoConfig, RolloutBatch};
use crate::autodiff::{Adam, Real, Tensor};
use crate::par::Workers;
use crate::policy::{OutputGrad, Policy, PolicyCache, PolicyOutput};

/// Contiguous transitions of one worker replayed together; recurrent state
/// flows only inside a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub worker: usize,
    pub start: usize,
    pub len: usize,
}

/// Per-sample means of each loss component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub aux_depth_loss: f64,
    pub l2_term: f64,
    pub approx_kl: f64,
    /// Weighted objective that the gradient descends.
    pub total: f64,
}

impl LossStats {
    fn add_scaled(&mut self, o: &LossStats, k: f64) {
        self.policy_loss += k * o.policy_loss;
        self.value_loss += k * o.value_loss;
        self.entropy += k * o.entropy;
        self.clip_fraction += k * o.clip_fraction;
        self.aux_depth_loss += k * o.aux_depth_loss;
        self.l2_term += k * o.l2_term;
        self.approx_kl += k * o.approx_kl;
        self.total += k * o.total;
    }

    fn check_finite(&self) -> Result<(), LearnError> {
        for (component, v) in [
            ("policy", self.policy_loss),
            ("value", self.value_loss),
            ("entropy", self.entropy),
            ("aux_depth", self.aux_depth_loss),
            ("l2", self.l2_term),
        ] {
            if !v.is_finite() {
                return Err(LearnError::NonFinite { component });
            }
        }
        Ok(())
    }
}

/// Fills advantages and returns per worker, then normalizes advantages over
/// the whole batch.
pub fn prepare_batch<T>(batch: &mut RolloutBatch<T>, cfg: &PpoConfig) -> Result<(), LearnError> {
    for w in &mut batch.workers {
        let r: Vec<f64> = w.transitions.iter().map(|t| t.reward).collect();
        let v: Vec<f64> = w.transitions.iter().map(|t| t.value).collect();
        let d: Vec<bool> = w.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, w.bootstrap_value, cfg.gamma, cfg.lambda)?;
        w.advantages = adv;
        w.returns = ret;
    }
    let mut all: Vec<f64> = batch.workers.iter().flat_map(|w| w.advantages.iter().copied()).collect();
    normalize(&mut all);
    let mut it = all.into_iter();
    for w in &mut batch.workers {
        w.advantages.iter_mut().for_each(|a| *a = it.next().unwrap());
    }
    Ok(())
}

/// Windows of `window` steps per worker (the tail window may be shorter).
pub fn segments<T>(batch: &RolloutBatch<T>, window: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    for (worker, w) in batch.workers.iter().enumerate() {
        let n = w.transitions.len();
        let mut start = 0;
        while start < n {
            let len = window.min(n - start);
            out.push(Segment { worker, start, len });
            start += len;
        }
    }
    out
}

/// Splits into `k` contiguous parts whose sizes differ by at most one;
/// empty parts are dropped.
pub fn split_even<S>(items: &[S], k: usize) -> Vec<&[S]> {
    let k = k.max(1);
    let (q, r) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = q + usize::from(i < r);
        if len > 0 {
            out.push(&items[start..start + len]);
        }
        start += len;
    }
    out
}

/// Mean loss over every sample of `segs` (L2 excluded) and its gradient.
pub fn shard_loss_grad<T: Real>(
    policy: &Policy<T>,
    batch: &RolloutBatch<T>,
    segs: &[Segment],
    cfg: &PpoConfig,
) -> Result<(LossStats, Vec<Tensor<T>>), LearnError> {
    let mut grads = policy.zero_grads();
    let n: usize = segs.iter().map(|s| s.len).sum();
    let mut stats = LossStats::default();
    if n == 0 {
        return Ok((stats, grads));
    }
    let inv = 1.0 / n as f64;
    let pc = &policy.cfg;
    for seg in segs {
        let w = &batch.workers[seg.worker];
        let range = seg.start..seg.start + seg.len;
        let tr = &w.transitions[range.clone()];
        let adv = &w.advantages[range.clone()];
        let ret = &w.returns[range];
        let mut fwd: Vec<(PolicyOutput<T>, PolicyCache<T>)> = Vec::with_capacity(tr.len());
        let mut hidden = tr[0].hidden.clone();
        for (k, t) in tr.iter().enumerate() {
            if k > 0 {
                hidden = if tr[k - 1].done { policy.initial_hidden() } else { fwd[k - 1].0.hidden.clone() };
            }
            fwd.push(policy.forward(&t.input, hidden.as_deref())?);
        }
        let mut dh_next: Option<Vec<T>> = None;
        for k in (0..tr.len()).rev() {
            let t = &tr[k];
            let (out, cache) = &fwd[k];
            let a = adv[k];
            let lp = out.dist.log_prob(&t.action).f64();
            let ratio = (lp - t.log_prob).exp();
            let clipped = ratio.clamp(1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
            let (s1, s2) = (ratio * a, clipped * a);
            let pg = -s1.min(s2);
            let d_lp = if s1 <= s2 { -a * ratio * inv } else { 0.0 };
            let entropy = out.dist.entropy().f64();
            let mut dist_grad = out.dist.grad_log_prob(&t.action);
            let mut g = out.dist.zero_grad();
            g.add_scaled(&dist_grad, T::lit(d_lp));
            dist_grad = out.dist.grad_entropy();
            g.add_scaled(&dist_grad, T::lit(-cfg.entropy_coef * inv));
            let v = out.value.f64();
            let mut og = OutputGrad { dist: Some(g), value: T::lit(cfg.value_coef * 2.0 * (v - ret[k]) * inv), depth: None, hidden: None };
            let mut aux = 0.0;
            if let (Some(pred), Some(target)) = (&out.depth, &t.depth_target) {
                let m = target.len() as f64;
                aux = pred.iter().zip(target).map(|(p, q)| (p.f64() - q).powi(2)).sum::<f64>() / m;
                og.depth = Some(pred.iter().zip(target).map(|(p, q)| T::lit(cfg.aux_depth_coef * 2.0 * (p.f64() - q) / m * inv)).collect());
            }
            if !t.done {
                og.hidden = dh_next.take();
            }
            let dh = policy.backward_params(cache, &og, &mut grads)?;
            dh_next = dh;
            let sample = LossStats {
                policy_loss: pg,
                value_loss: (v - ret[k]).powi(2),
                entropy,
                clip_fraction: if (ratio - 1.0).abs() > cfg.clip_range { 1.0 } else { 0.0 },
                aux_depth_loss: aux,
                l2_term: 0.0,
                approx_kl: t.log_prob - lp,
                total: pg + cfg.value_coef * (v - ret[k]).powi(2) - cfg.entropy_coef * entropy
                    + if pc.aux_depth { cfg.aux_depth_coef * aux } else { 0.0 },
            };
            stats.add_scaled(&sample, inv);
        }
    }
    stats.check_finite()?;
    Ok((stats, grads))
}

/// Element-wise mean over workers, reduced in worker-index order.
pub fn sync_gradients<T: Real>(worker_grads: &[Vec<Tensor<T>>]) -> Result<Vec<Tensor<T>>, LearnError> {
    let first = worker_grads.first().ok_or_else(|| LearnError::Shape("no worker gradients".into()))?;
    for (i, g) in worker_grads.iter().enumerate() {
        if g.len() != first.len() || g.iter().zip(first).any(|(a, b)| a.shape != b.shape) {
            return Err(LearnError::Shape(format!("worker {i} differs from worker 0")));
        }
    }
    let mut out = first.clone();
    for g in &worker_grads[1..] {
        for (o, t) in out.iter_mut().zip(g) {
            o.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += *b);
        }
    }
    let k = T::lit(worker_grads.len() as f64);
    out.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v = *v / k));
    Ok(out)
}

/// Full minibatch objective and gradient: `shards` equal slices evaluated
/// concurrently, averaged by [`sync_gradients`], plus the L2 term.
pub fn loss_and_grad<T: Real + Send + Sync>(
    policy: &Policy<T>,
    batch: &RolloutBatch<T>,
    segs: &[Segment],
    cfg: &PpoConfig,
    shards: usize,
    pool: &Workers,
) -> Result<(LossStats, Vec<Tensor<T>>), LearnError> {
    let parts = split_even(segs, shards);
    if parts.is_empty() {
        return Ok((LossStats::default(), policy.zero_grads()));
    }
    let results = pool.map(parts.len(), |i| shard_loss_grad(policy, batch, parts[i], cfg));
    let mut stats = LossStats::default();
    let mut grads = Vec::with_capacity(parts.len());
    let k = 1.0 / parts.len() as f64;
    for r in results {
        let (s, g) = r?;
        stats.add_scaled(&s, k);
        grads.push(g);
    }
    let mut grads = sync_gradients(&grads)?;
    if cfg.l2_coef > 0.0 {
        let mut sq = 0.0;
        for (g, p) in grads.iter_mut().zip(policy.params()) {
            for (gv, &pv) in g.data.iter_mut().zip(&p.data) {
                *gv += T::lit(2.0 * cfg.l2_coef) * pv;
                sq += pv.f64() * pv.f64();
            }
        }
        stats.l2_term = cfg.l2_coef * sq;
        stats.total += stats.l2_term;
    }
    stats.check_finite()?;
    Ok((stats, grads))
}

fn clip_global_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g.data.iter().map(|v| v.f64() * v.f64()).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = T::lit(max_norm / norm);
        grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= k));
    }
}

/// Epochs of shuffled minibatch Adam steps on a prepared batch. Returns the
/// component means over all minibatches.
pub fn ppo_update<T: Real + Send + Sync, R: Rng + ?Sized>(
    policy: &mut Policy<T>,
    adam: &mut Adam<T>,
    batch: &RolloutBatch<T>,
    cfg: &PpoConfig,
    rng: &mut R,
    pool: &Workers,
) -> Result<LossStats, LearnError> {
    let window = if policy.cfg.recurrent { cfg.bptt_window } else { 1 };
    let mut segs = segments(batch, window);
    let mut stats = LossStats::default();
    let mut count = 0usize;
    let mut acc = Vec::new();
    for _ in 0..cfg.epochs_per_update {
        segs.shuffle(rng);
        for mb in split_even(&segs, cfg.minibatch_count) {
            let (s, mut grads) = loss_and_grad(policy, batch, mb, cfg, cfg.workers, pool)?;
            clip_global_norm(&mut grads, cfg.max_grad_norm);
            adam.step(policy.params_mut(), &grads, cfg.learning_rate);
            acc.push(s);
            count += 1;
        }
    }
    for s in &acc {
        stats.add_scaled(s, 1.0 / count.max(1) as f64);
    }
    Ok(stats)
}
