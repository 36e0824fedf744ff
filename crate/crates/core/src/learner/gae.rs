use super::LearnError;

/// Generalized advantage estimation over one worker's trajectory.
/// `dones[t]` marks that step `t` ended its episode, so the value after it
/// is not bootstrapped. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(LearnError::Length { rewards: n, values: values.len(), dones: dones.len() });
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit standard deviation; left centered when the spread is
/// negligible.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

/// Divides rewards by the running standard deviation of each worker's
/// discounted return, clipping the result to `±clip`. Statistics are
/// updated before scaling, in worker order, so runs are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    pub gamma: f64,
    pub clip: f64,
    running: Vec<f64>,
    count: f64,
    mean: f64,
    var: f64,
}

impl RewardScaler {
    pub fn new(workers: usize, gamma: f64) -> Self {
        RewardScaler { gamma, clip: 10.0, running: vec![0.0; workers], count: 0.0, mean: 0.0, var: 1.0 }
    }

    pub fn std(&self) -> f64 {
        (self.var + 1e-8).sqrt()
    }

    /// Scales `rewards[w]` in place; `dones[w][t]` resets worker `w`'s return.
    pub fn scale(&mut self, rewards: &mut [Vec<f64>], dones: &[Vec<bool>]) {
        let mut seen = Vec::new();
        for (w, (r, d)) in rewards.iter().zip(dones).enumerate() {
            for (x, done) in r.iter().zip(d) {
                self.running[w] = self.running[w] * self.gamma + x;
                seen.push(self.running[w]);
                if *done {
                    self.running[w] = 0.0;
                }
            }
        }
        if !seen.is_empty() {
            let n = seen.len() as f64;
            let mean = seen.iter().sum::<f64>() / n;
            let var = seen.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let total = self.count + n;
            let delta = mean - self.mean;
            let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
            self.mean += delta * n / total;
            self.var = m2 / total;
            self.count = total;
        }
        let k = 1.0 / self.std();
        for r in rewards.iter_mut() {
            r.iter_mut().for_each(|x| *x = (*x * k).clamp(-self.clip, self.clip));
        }
    }
}
