//! Kinematic bicycle vehicle with steering limits, actuation delay, PID
//! speed control and per-episode dynamics randomization.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("non-finite input to vehicle step: {0}")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameter {field}: {message}")]
    InvalidParam { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains { kp: 1.0, ki: 0.1, kd: 0.0 }
    }
}

/// Physical constants of the car. Steering limit and delay are the
/// identified quantities; the defaults are stand-ins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steering_angle: f64,
    pub steering_delay: f64,
    pub target_speed: f64,
    pub pid_gains: PidGains,
    pub max_accel: f64,
    /// Integral term clamp (m/s accumulated error).
    pub integral_limit: f64,
    pub body_length: f64,
    pub body_width: f64,
    /// Distance from the rear axle back to the rear bumper.
    pub rear_overhang: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.7,
            max_steering_angle: 0.5,
            steering_delay: 0.2,
            target_speed: 5.6,
            pid_gains: PidGains::default(),
            max_accel: 3.0,
            integral_limit: 2.0,
            body_length: 4.5,
            body_width: 1.9,
            rear_overhang: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("wheelbase", self.wheelbase),
            ("max_steering_angle", self.max_steering_angle),
            ("target_speed", self.target_speed),
            ("max_accel", self.max_accel),
            ("body_length", self.body_length),
            ("body_width", self.body_width),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(VehicleError::InvalidParam { field, message: format!("must be positive, got {v}") });
            }
        }
        if self.max_steering_angle > std::f64::consts::FRAC_PI_2 {
            return Err(VehicleError::InvalidParam { field: "max_steering_angle", message: "must not exceed pi/2".into() });
        }
        if self.steering_delay < 0.0 || self.integral_limit < 0.0 {
            return Err(VehicleError::InvalidParam { field: "steering_delay", message: "must be non-negative".into() });
        }
        Ok(())
    }
}

/// Closed interval for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricNoise {
    pub speed: f64,
    pub accel: f64,
    pub steering_angle: f64,
}

impl MetricNoise {
    pub const ZERO: MetricNoise = MetricNoise { speed: 0.0, accel: 0.0, steering_angle: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsRandomization {
    pub target_speed_range: Interval,
    pub steering_gain_range: Interval,
    pub steering_bias_range: Interval,
    pub latency_range: Interval,
    pub metric_noise_std: MetricNoise,
}

impl Default for DynamicsRandomization {
    fn default() -> Self {
        DynamicsRandomization {
            target_speed_range: Interval::new(4.5, 7.0),
            steering_gain_range: Interval::new(0.8, 1.2),
            steering_bias_range: Interval::new(-0.03, 0.03),
            latency_range: Interval::new(0.0, 0.2),
            metric_noise_std: MetricNoise { speed: 0.1, accel: 0.1, steering_angle: 0.01 },
        }
    }
}

impl DynamicsRandomization {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let ranges = [
            ("target_speed_range", self.target_speed_range),
            ("steering_gain_range", self.steering_gain_range),
            ("steering_bias_range", self.steering_bias_range),
            ("latency_range", self.latency_range),
        ];
        for (field, r) in ranges {
            if !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                return Err(VehicleError::InvalidParam { field, message: format!("empty interval [{}, {}]", r.lo, r.hi) });
            }
        }
        if self.latency_range.lo < 0.0 || self.target_speed_range.lo <= 0.0 {
            return Err(VehicleError::InvalidParam { field: "latency_range", message: "must be non-negative".into() });
        }
        let n = self.metric_noise_std;
        if n.speed < 0.0 || n.accel < 0.0 || n.steering_angle < 0.0 {
            return Err(VehicleError::InvalidParam { field: "metric_noise_std", message: "must be >= 0".into() });
        }
        Ok(())
    }
}

/// One episode's draw of the dynamics randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledDynamics {
    pub target_speed: f64,
    pub steering_gain: f64,
    pub steering_bias: f64,
    pub latency: f64,
    pub metric_noise_std: MetricNoise,
}

impl SampledDynamics {
    /// The identified car with no perturbation.
    pub fn nominal(params: &VehicleParams) -> Self {
        SampledDynamics {
            target_speed: params.target_speed,
            steering_gain: 1.0,
            steering_bias: 0.0,
            latency: 0.0,
            metric_noise_std: MetricNoise::ZERO,
        }
    }
}

pub fn sample_dynamics<R: Rng + ?Sized>(cfg: &DynamicsRandomization, rng: &mut R) -> SampledDynamics {
    SampledDynamics {
        target_speed: cfg.target_speed_range.sample(rng),
        steering_gain: cfg.steering_gain_range.sample(rng),
        steering_bias: cfg.steering_bias_range.sample(rng),
        latency: cfg.latency_range.sample(rng),
        metric_noise_std: cfg.metric_noise_std,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// PID on speed error. The integral only accumulates while the output is
/// unsaturated and stays within `integral_limit`.
pub fn pid_throttle(
    speed: f64,
    target: f64,
    gains: &PidGains,
    dt: f64,
    state: PidState,
    max_accel: f64,
    integral_limit: f64,
) -> (f64, PidState) {
    let error = target - speed;
    let derivative = state.prev_error.map_or(0.0, |p| (error - p) / dt);
    let integral = (state.integral + error * dt).clamp(-integral_limit, integral_limit);
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let saturated = raw.abs() > max_accel;
    let integral = if saturated { state.integral } else { integral };
    let out = (gains.kp * error + gains.ki * integral + gains.kd * derivative).clamp(-max_accel, max_accel);
    (out, PidState { integral, prev_error: Some(error) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    /// Steering currently applied at the wheels.
    pub steering_angle: f64,
    /// Effective commands waiting to reach the wheels, oldest first.
    pub command_buffer: VecDeque<f64>,
    pub pid: PidState,
}

/// FIFO length for a total actuation delay.
pub fn delay_steps(delay: f64, dt: f64) -> usize {
    (delay / dt).round() as usize
}

impl VehicleState {
    pub fn new(position: Vec2, heading: f64, speed: f64, params: &VehicleParams, dynamics: &SampledDynamics, dt: f64) -> Self {
        let n = delay_steps(params.steering_delay + dynamics.latency, dt);
        VehicleState {
            position,
            heading,
            speed,
            accel: 0.0,
            steering_angle: 0.0,
            command_buffer: std::iter::repeat_n(0.0, n).collect(),
            pid: PidState::default(),
        }
    }

    /// Body rectangle corners, counter-clockwise from rear-right.
    pub fn footprint(&self, params: &VehicleParams) -> [Vec2; 4] {
        let f = Vec2::from_angle(self.heading);
        let l = f.perp();
        let back = -params.rear_overhang;
        let front = params.body_length - params.rear_overhang;
        let hw = params.body_width / 2.0;
        let p = self.position;
        [p + f * back - l * hw, p + f * front - l * hw, p + f * front + l * hw, p + f * back + l * hw]
    }
}

/// Advances the car by `dt`. Steering goes through gain/bias, clamp, then the
/// delay FIFO; speed follows the PID toward the sampled target; the pose is
/// integrated at the midpoint heading.
pub fn step(
    state: &VehicleState,
    commanded_steering: f64,
    dt: f64,
    params: &VehicleParams,
    dynamics: &SampledDynamics,
) -> Result<VehicleState, VehicleError> {
    if !commanded_steering.is_finite() {
        return Err(VehicleError::NonFinite("commanded_steering"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(VehicleError::NonFinite("dt"));
    }
    let limit = params.max_steering_angle;
    let effective = (dynamics.steering_gain * commanded_steering + dynamics.steering_bias).clamp(-limit, limit);

    let mut next = state.clone();
    let n = delay_steps(params.steering_delay + dynamics.latency, dt);
    while next.command_buffer.len() > n {
        next.command_buffer.pop_front();
    }
    while next.command_buffer.len() < n {
        next.command_buffer.push_front(state.steering_angle);
    }
    next.command_buffer.push_back(effective);
    next.steering_angle = next.command_buffer.pop_front().unwrap();

    let (accel, pid) =
        pid_throttle(state.speed, dynamics.target_speed, &params.pid_gains, dt, state.pid, params.max_accel, params.integral_limit);
    let v1 = (state.speed + accel * dt).max(0.0);
    let v_mid = 0.5 * (state.speed + v1);
    let dheading = v_mid / params.wheelbase * next.steering_angle.tan() * dt;
    let mid_heading = state.heading + 0.5 * dheading;
    next.position = state.position + Vec2::from_angle(mid_heading) * (v_mid * dt);
    next.heading = crate::geometry::wrap_angle(state.heading + dheading);
    next.speed = v1;
    next.accel = (v1 - state.speed) / dt;
    next.pid = pid;
    Ok(next)
}

/// Car metrics as the policy sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarMetrics {
    pub speed: f64,
    pub accel: f64,
    pub steering_angle: f64,
}

pub fn observe_metrics<R: Rng + ?Sized>(state: &VehicleState, dynamics: &SampledDynamics, rng: &mut R) -> CarMetrics {
    let mut noisy = |v: f64, std: f64| {
        if std > 0.0 {
            v + Normal::new(0.0, std).unwrap().sample(rng)
        } else {
            v
        }
    };
    let n = dynamics.metric_noise_std;
    CarMetrics {
        speed: noisy(state.speed, n.speed),
        accel: noisy(state.accel, n.accel),
        steering_angle: noisy(state.steering_angle, n.steering_angle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_delay() -> VehicleParams {
        VehicleParams { steering_delay: 0.0, ..Default::default() }
    }

    #[test]
    fn degenerate_ranges_are_exact() {
        let cfg = DynamicsRandomization {
            target_speed_range: Interval::point(5.0),
            steering_gain_range: Interval::point(1.1),
            steering_bias_range: Interval::point(-0.01),
            latency_range: Interval::point(0.1),
            metric_noise_std: MetricNoise::ZERO,
        };
        let s = sample_dynamics(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!((s.target_speed, s.steering_gain, s.steering_bias, s.latency), (5.0, 1.1, -0.01, 0.1));
    }

    #[test]
    fn sampling_is_seeded() {
        let cfg = DynamicsRandomization::default();
        let a = sample_dynamics(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_dynamics(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn gain_mean_monte_carlo() {
        let cfg = DynamicsRandomization::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mean = (0..n).map(|_| sample_dynamics(&cfg, &mut rng).steering_gain).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn straight_line_advance() {
        let p = no_delay();
        let d = SampledDynamics::nominal(&p);
        let s = VehicleState::new(Vec2::ZERO, 0.3, p.target_speed, &p, &d, 0.1);
        let n = step(&s, 0.0, 0.1, &p, &d).unwrap();
        assert_eq!(n.heading, 0.3);
        let moved = n.position - s.position;
        assert!((moved.norm() - p.target_speed * 0.1).abs() < 1e-12);
        assert!((moved.angle() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn circle_radius_matches_geometry() {
        for dt in [0.01, 0.1] {
            let p = no_delay();
            let d = SampledDynamics::nominal(&p);
            let delta = 0.3;
            let mut s = VehicleState::new(Vec2::ZERO, 0.0, p.target_speed, &p, &d, dt);
            let mut pts = vec![];
            for _ in 0..(60.0 / dt) as usize {
                s = step(&s, delta, dt, &p, &d).unwrap();
                pts.push(s.position);
            }
            let expected = p.wheelbase / delta.tan();
            // Center sits on the left normal of the start pose.
            let center = Vec2::new(0.0, expected);
            for q in pts {
                let r = q.dist(center);
                assert!((r - expected).abs() / expected < 0.01, "dt {dt}: r {r} vs {expected}");
            }
        }
    }

    #[test]
    fn delay_fifo_three_steps() {
        let p = VehicleParams { steering_delay: 0.3, ..Default::default() };
        let d = SampledDynamics::nominal(&p);
        let mut s = VehicleState::new(Vec2::ZERO, 0.0, 5.0, &p, &d, 0.1);
        assert_eq!(s.command_buffer.len(), 3);
        let mut applied = vec![];
        for _ in 0..6 {
            s = step(&s, 0.2, 0.1, &p, &d).unwrap();
            applied.push(s.steering_angle);
        }
        assert_eq!(applied, vec![0.0, 0.0, 0.0, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn non_finite_command_rejected() {
        let p = no_delay();
        let d = SampledDynamics::nominal(&p);
        let s = VehicleState::new(Vec2::ZERO, 0.0, 0.0, &p, &d, 0.1);
        assert_eq!(step(&s, f64::NAN, 0.1, &p, &d), Err(VehicleError::NonFinite("commanded_steering")));
    }

    #[test]
    fn pid_terms() {
        let g = PidGains { kp: 2.0, ki: 0.0, kd: 0.0 };
        let (a, _) = pid_throttle(3.0, 4.0, &g, 0.1, PidState::default(), 10.0, 1.0);
        assert_eq!(a, 2.0);
        let (a, _) = pid_throttle(4.0, 4.0, &PidGains { kp: 1.0, ki: 0.0, kd: 0.5 }, 0.1, PidState::default(), 10.0, 1.0);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn pid_settles_from_rest() {
        let p = no_delay();
        let d = SampledDynamics::nominal(&p);
        let mut s = VehicleState::new(Vec2::ZERO, 0.0, 0.0, &p, &d, 0.1);
        let mut settled_at = None;
        for k in 0..300 {
            s = step(&s, 0.0, 0.1, &p, &d).unwrap();
            let within = (s.speed - p.target_speed).abs() <= 0.05 * p.target_speed;
            if within && settled_at.is_none() {
                settled_at = Some(k);
            }
            if !within {
                settled_at = None;
            }
            assert!(s.speed.is_finite());
        }
        assert!(settled_at.unwrap() < 100, "{settled_at:?}");
    }

    #[test]
    fn zero_noise_metrics_exact() {
        let p = VehicleParams::default();
        let d = SampledDynamics::nominal(&p);
        let s = VehicleState::new(Vec2::ZERO, 0.0, 4.2, &p, &d, 0.1);
        let m = observe_metrics(&s, &d, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m, CarMetrics { speed: 4.2, accel: 0.0, steering_angle: 0.0 });
    }

    #[test]
    fn speed_noise_std_monte_carlo() {
        let p = VehicleParams::default();
        let mut d = SampledDynamics::nominal(&p);
        d.metric_noise_std.speed = 0.1;
        let s = VehicleState::new(Vec2::ZERO, 0.0, 4.0, &p, &d, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..10_000).map(|_| observe_metrics(&s, &d, &mut rng).speed).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005, "{}", var.sqrt());
        let again: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..10_000).map(|_| observe_metrics(&s, &d, &mut rng).speed).collect()
        };
        assert_eq!(xs, again);
    }

    #[test]
    fn halved_delay_and_dt_same_schedule() {
        // Command switches at t = 1.0 s; applied steering switches at t = 1.0 + delay.
        let switch_time = |dt: f64, delay: f64| {
            let p = VehicleParams { steering_delay: delay, ..Default::default() };
            let d = SampledDynamics::nominal(&p);
            let mut s = VehicleState::new(Vec2::ZERO, 0.0, 5.0, &p, &d, dt);
            let steps = (3.0 / dt).round() as usize;
            for k in 0..steps {
                let t = k as f64 * dt;
                let cmd = if t >= 1.0 - 1e-9 { 0.1 } else { 0.0 };
                s = step(&s, cmd, dt, &p, &d).unwrap();
                if s.steering_angle != 0.0 {
                    return t;
                }
            }
            f64::NAN
        };
        let a = switch_time(0.1, 0.2);
        let b = switch_time(0.05, 0.1);
        assert!((a - 1.2).abs() < 1e-9 && (b - 1.1).abs() < 1e-9, "{a} {b}");
        let c = switch_time(0.05, 0.2);
        assert!((a - c).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn applied_steering_within_limit(cmds in proptest::collection::vec(-10.0f64..10.0, 1..60), bias in -0.2f64..0.2, gain in 0.5f64..2.0) {
            let p = VehicleParams::default();
            let d = SampledDynamics { steering_gain: gain, steering_bias: bias, ..SampledDynamics::nominal(&p) };
            let mut s = VehicleState::new(Vec2::ZERO, 0.0, 0.0, &p, &d, 0.1);
            for c in cmds {
                s = step(&s, c, 0.1, &p, &d).unwrap();
                prop_assert!(s.steering_angle.abs() <= p.max_steering_angle);
                prop_assert!(s.speed <= d.target_speed + p.max_accel * 0.1 + 1e-12);
            }
        }

        #[test]
        fn zero_steering_stays_on_heading_line(heading in -3.0f64..3.0, target in 1.0f64..9.0) {
            let p = VehicleParams::default();
            let d = SampledDynamics { target_speed: target, ..SampledDynamics::nominal(&p) };
            let mut s = VehicleState::new(Vec2::new(3.0, -1.0), heading, 0.0, &p, &d, 0.1);
            let start = s.position;
            for _ in 0..200 {
                s = step(&s, 0.0, 0.1, &p, &d).unwrap();
            }
            let off = Vec2::from_angle(heading).cross(s.position - start);
            prop_assert!(off.abs() < 1e-9);
            prop_assert_eq!(s.heading, heading);
            prop_assert!(s.speed <= target + p.max_accel * 0.1);
        }
    }
}
