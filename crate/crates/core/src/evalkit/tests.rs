use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{bundled_track, Env, EnvConfig, RandomizationToggles};
use crate::geometry::Vec2;
use crate::par::Workers;
use crate::policy::{ExtractorPreset, Policy, PolicyConfig};
use crate::sensor::CameraConfig;
use crate::world::Command;

fn frame(k: usize, s: f64, steering: f64, intervention: bool) -> Frame {
    Frame {
        t: k as f64 * 0.1,
        position: Vec2::new(s, 0.0),
        heading: 0.0,
        speed: 5.0,
        commanded_steering: steering,
        applied_steering: steering,
        command: Command::LaneFollow,
        lateral: 0.0,
        arclength: s,
        offroad: false,
        intervention,
        observation: None,
    }
}

/// Straight-line log with arclengths `s` and the given steering/flags.
fn log_from(s: &[f64], steering: &[f64], flags: &[bool]) -> DriveLog {
    let mut log = DriveLog::new("synthetic", "m", 0);
    log.frames = (0..s.len()).map(|k| frame(k, s[k], steering[k], flags[k])).collect();
    log
}

fn uniform_log(n: usize, steering: impl Fn(usize) -> f64) -> DriveLog {
    let s: Vec<f64> = (0..n).map(|k| k as f64 * 0.5).collect();
    let st: Vec<f64> = (0..n).map(steering).collect();
    log_from(&s, &st, &vec![false; n])
}

fn setup() -> EvalSetup {
    EvalSetup::new(Env::new(EnvConfig::default(), CameraConfig::desk()))
}

fn expert_factory() -> Result<Box<dyn Driver>, EvalError> {
    DriverSpec::expert().build()
}

#[test]
fn autonomy_trivial_cases() {
    let log = uniform_log(11, |_| 0.0);
    assert_eq!(autonomy_percent(&log).unwrap(), 100.0);
    let mut half = log.clone();
    for f in &mut half.frames[5..] {
        f.intervention = true;
    }
    assert_eq!(autonomy_percent(&half).unwrap(), 50.0);
    assert!(matches!(autonomy_percent(&DriveLog::new("a", "b", 0)), Err(EvalError::EmptyLog)));
    let still = log_from(&[3.0, 3.0, 3.0], &[0.0; 3], &[false; 3]);
    assert!(matches!(autonomy_percent(&still), Err(EvalError::ZeroDistance)));
}

#[test]
fn autonomy_three_segments_hand_computed() {
    // Irregular spacing; three intervention segments.
    let s = [0.0, 0.4, 1.3, 1.9, 3.0, 3.2, 4.7, 5.0, 6.6, 7.1, 8.0];
    let flags = [false, true, true, false, false, true, false, false, true, false, false];
    let log = log_from(&s, &[0.0; 11], &flags);
    // Intervention distances: (1.3-0.4) + (1.9-1.3) + (4.7-3.2) + (7.1-6.6).
    let int = 0.9 + 0.6 + 1.5 + 0.5;
    let expected = 100.0 * (8.0 - int) / 8.0;
    assert!((autonomy_percent(&log).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn mae_and_f1_trivial_and_derived() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = uniform_log(200, |_| 0.0);
    let a =
        DriveLog { frames: a.frames.into_iter().map(|f| Frame { commanded_steering: rng.random_range(-0.3..0.3), ..f }).collect(), ..a };
    assert_eq!(steering_mae(&a, &a).unwrap(), 0.0);
    let shifted = DriveLog {
        frames: a.frames.iter().map(|f| Frame { commanded_steering: f.commanded_steering + 0.1, ..f.clone() }).collect(),
        ..a.clone()
    };
    assert!((steering_mae(&shifted, &a).unwrap() - 0.1).abs() < 1e-12);
    let b = DriveLog {
        frames: a.frames.iter().map(|f| Frame { commanded_steering: rng.random_range(-0.3..0.3), ..f.clone() }).collect(),
        ..a.clone()
    };
    let mut oracle = 0.0;
    for k in 0..200 {
        oracle += (a.frames[k].commanded_steering - b.frames[k].commanded_steering).abs();
    }
    assert!((steering_mae(&a, &b).unwrap() - oracle / 200.0).abs() < 1e-12);
    assert_eq!(steering_mae(&a, &b).unwrap(), steering_mae(&b, &a).unwrap());
    assert!(matches!(steering_mae(&a, &uniform_log(3, |_| 0.0)), Err(EvalError::LengthMismatch(200, 3))));
    assert_eq!(average_f1(&a, &a, BUCKET_THRESHOLD).unwrap(), 1.0);
}

#[test]
fn f1_confusion_matrix_hand_computation() {
    let reference = uniform_log(9, |k| [-0.1, 0.0, 0.1][k % 3]);
    let model = uniform_log(9, |_| 0.0);
    // left: absent from model -> 0; straight: tp 3, fp 6 -> 0.5; right -> 0.
    let f1 = average_f1(&model, &reference, BUCKET_THRESHOLD).unwrap();
    assert!((f1 - 0.5 / 3.0).abs() < 1e-12);
    // Bucket absent from both sequences scores 1.
    let only_straight = uniform_log(4, |_| 0.01);
    assert_eq!(average_f1(&only_straight, &only_straight, BUCKET_THRESHOLD).unwrap(), 1.0);
    // A mixed case: ref [L, L, S, R], model [L, S, S, L].
    let r = uniform_log(4, |k| [-0.5, -0.5, 0.0, 0.5][k]);
    let m = uniform_log(4, |k| [-0.5, 0.0, 0.0, -0.5][k]);
    let left = 2.0 * 1.0 / (2.0 + 1.0 + 1.0);
    let straight = 2.0 * 1.0 / (2.0 + 1.0 + 0.0);
    let right = 0.0;
    assert!((average_f1(&m, &r, BUCKET_THRESHOLD).unwrap() - (left + straight + right) / 3.0).abs() < 1e-12);
}

#[test]
fn bucket_boundaries_are_straight() {
    assert_eq!(bucket(-0.02, BUCKET_THRESHOLD), Bucket::Straight);
    assert_eq!(bucket(0.02, BUCKET_THRESHOLD), Bucket::Straight);
    assert_eq!(bucket(-0.020000001, BUCKET_THRESHOLD), Bucket::Left);
    assert_eq!(bucket(0.020000001, BUCKET_THRESHOLD), Bucket::Right);
    let a = uniform_log(2, |k| [-0.02, 0.02][k]);
    let b = uniform_log(2, |_| 0.0);
    assert_eq!(average_f1(&a, &b, BUCKET_THRESHOLD).unwrap(), 1.0);
}

#[test]
fn spearman_hand_table_and_ties() {
    // Ranks x: [1,2,3,4], y: [2,1,4,3]; d^2 = 4; rho = 1 - 6*4/(4*15) = 0.6.
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[20.0, 10.0, 40.0, 30.0]).unwrap().unwrap();
    assert!((rho - 0.6).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    // Ties: Pearson on mean ranks, computed by hand.
    // rx = [1, 2.5, 2.5, 4], ry = [1, 2, 3, 4]: cov = 4.5, var_x = 4.5, var_y = 5.
    let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap().unwrap();
    assert!((rho - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
}

#[test]
fn spearman_matches_rank_difference_formula_without_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = rng.random_range(3..20);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let (rx, ry) = (ranks(&x), ranks(&y));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let nf = n as f64;
        let oracle = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        assert!((spearman(&x, &y).unwrap().unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn mean_deviation_trivial_cases() {
    let log = uniform_log(50, |_| 0.0);
    assert_eq!(mean_deviation(&log, &log, 0.25).unwrap(), 0.0);
    let offset = DriveLog {
        frames: log.frames.iter().map(|f| Frame { position: f.position + Vec2::new(0.0, 0.5), ..f.clone() }).collect(),
        ..log.clone()
    };
    assert!((mean_deviation(&offset, &log, 0.25).unwrap() - 0.5).abs() < 1e-12);
    let far = log_from(&[100.0, 101.0], &[0.0; 2], &[false; 2]);
    assert!(matches!(mean_deviation(&far, &log, 0.25), Err(EvalError::Disjoint)));
}

#[test]
fn mean_deviation_matches_dense_resampling() {
    let track = bundled_track("val_s_east").unwrap();
    let s = setup();
    let expert = drive(&s, track.clone(), &mut ExpertDriver { lookahead: 6.0 }, "e", 1).unwrap();
    let noisy = drive(&s, track, &mut NoisyExpertDriver::new(6.0, 0.05, 4), "n", 1).unwrap();
    let coarse = mean_deviation(&noisy, &expert, 1.0).unwrap();
    let dense = mean_deviation(&noisy, &expert, 0.01).unwrap();
    assert!(coarse > 0.0);
    assert!((coarse - dense).abs() / dense < 0.01, "coarse {coarse} dense {dense}");
}

#[test]
fn log_round_trip_is_exact() {
    let track = bundled_track("train_east").unwrap();
    let mut s = setup();
    s.record_observations = true;
    let logs =
        evaluate_with_safety_driver(&s, &track, &expert_factory, Some(&DriverSpec::expert()), "EXPERT", 1, 5, &Workers::sequential())
            .unwrap();
    let log = &logs[0];
    assert!(log.has_observations());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drive.jsonl");
    log.write(&path).unwrap();
    let back = DriveLog::read(&path).unwrap();
    assert_eq!(&back, log);
    for (a, b) in back.frames.iter().zip(&log.frames) {
        assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
        assert_eq!(a.observation.as_ref().unwrap().photometric, b.observation.as_ref().unwrap().photometric);
    }
    back.check().unwrap();
}

#[test]
fn log_check_rejects_time_going_backwards() {
    let mut log = uniform_log(4, |_| 0.0);
    log.frames[2].t = log.frames[1].t;
    assert!(log.check().is_err());
    let mut log = uniform_log(4, |_| 0.0);
    log.frames[2].arclength = 0.0;
    assert!(log.check().is_err());
    log.frames[2].intervention = true;
    log.check().unwrap();
}

#[test]
fn unsupported_log_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v9.jsonl");
    std::fs::write(&path, "{\"format_version\":9,\"scenario\":\"a\",\"model\":\"b\",\"seed\":0}\n").unwrap();
    assert!(matches!(DriveLog::read(&path), Err(EvalError::Log(_))));
}

#[test]
fn expert_needs_no_intervention() {
    let s = setup();
    for name in ["train_east", "val_s_west", "junction_straight_left", "junction_right", "test_town_west"] {
        let log = drive(&s, bundled_track(name).unwrap(), &mut ExpertDriver { lookahead: 6.0 }, "EXPERT", 2).unwrap();
        assert!(log.frames.iter().all(|f| !f.intervention), "{name}");
        assert_eq!(autonomy_percent(&log).unwrap(), 100.0, "{name}");
        let end = log.frames.last().unwrap();
        assert!(end.arclength >= bundled_track(name).unwrap().route.path.total_length - 1e-9, "{name}");
    }
}

#[test]
fn hard_left_triggers_early_and_repeatedly() {
    let s = setup();
    let log = drive(&s, bundled_track("train_east").unwrap(), &mut ConstantDriver(0.4), "LEFT", 0).unwrap();
    let first = log.frames.iter().position(|f| f.intervention).unwrap();
    assert!(log.frames[first].arclength < 10.0, "first takeover at {}", log.frames[first].arclength);
    let starts = log.frames.windows(2).filter(|w| !w[0].intervention && w[1].intervention).count();
    assert!(starts >= 3, "{starts} takeovers");
    assert!(autonomy_percent(&log).unwrap() < 50.0);
    assert_eq!(derive_interventions(&log.frames, s.intervention), log.frames.iter().map(|f| f.intervention).collect::<Vec<_>>());
}

#[test]
fn intervention_flags_are_rederivable_for_a_network_driver() {
    let s = setup();
    let cfg = PolicyConfig { extractor: ExtractorPreset::Desk, ..Default::default() };
    let policy = Arc::new(Policy::<f32>::new(&cfg, 64, 40, &mut ChaCha8Rng::seed_from_u64(11)).unwrap());
    let log = drive(&s, bundled_track("val_s_east").unwrap(), &mut NetworkDriver::new(policy), "RANDOM-NET", 3).unwrap();
    let flags: Vec<bool> = log.frames.iter().map(|f| f.intervention).collect();
    assert_eq!(derive_interventions(&log.frames, s.intervention), flags);
    // The policy never acts in a state where the rule fires.
    for f in &log.frames {
        if s.intervention.triggers(f.lateral, f.offroad) {
            assert!(f.intervention);
        }
    }
}

#[test]
fn safety_driver_hands_back_after_resume_window() {
    let mut sd = SafetyDriver::new(InterventionPolicy::default());
    assert!(!sd.update(0.2, false, 0.0));
    assert!(sd.update(1.6, false, 5.0));
    assert!(sd.update(0.3, false, 14.9));
    assert!(!sd.update(0.3, false, 15.0));
    assert!(sd.update(0.0, true, 16.0));
    assert!(InterventionPolicy { takeover_lateral: 5.0, ..Default::default() }.validate(5.0).is_err());
}

#[test]
fn replay_is_bitwise_and_detects_tampering() {
    let track = bundled_track("val_s_west").unwrap();
    let s = setup();
    let spec = DriverSpec::NoisyExpert { lookahead: 6.0, noise_std: 0.1, seed: 8 };
    let make = || spec.build();
    let logs = evaluate_with_safety_driver(&s, &track, &make, Some(&spec), "NOISY", 2, 21, &Workers::sequential()).unwrap();
    assert_ne!(logs[0].header.seed, logs[1].header.seed);
    let resolve = |name: &str| bundled_track(name);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noisy.jsonl");
    logs[1].write(&path).unwrap();
    let back = DriveLog::read(&path).unwrap();
    let check = verify_replay(&back, &resolve).unwrap();
    assert!(check.matches(), "{check:?}");
    let mut tampered = back.clone();
    tampered.frames[17].commanded_steering = f64::from_bits(tampered.frames[17].commanded_steering.to_bits() ^ 1);
    assert_eq!(verify_replay(&tampered, &resolve).unwrap().first_mismatch, Some(17));
}

#[test]
fn parallel_trials_match_sequential() {
    let track = bundled_track("val_s_east").unwrap();
    let s = setup();
    let spec = DriverSpec::NoisyExpert { lookahead: 6.0, noise_std: 0.2, seed: 1 };
    let make = || spec.build();
    let a = evaluate_with_safety_driver(&s, &track, &make, Some(&spec), "N", 3, 4, &Workers::sequential()).unwrap();
    let b = evaluate_with_safety_driver(&s, &track, &make, Some(&spec), "N", 3, 4, &Workers::new(3)).unwrap();
    assert_eq!(a, b);
}

fn zero_policy() -> Arc<Policy<f32>> {
    let cfg = PolicyConfig { extractor: ExtractorPreset::Desk, ..Default::default() };
    let mut p = Policy::<f32>::new(&cfg, 64, 40, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let zeros: Vec<_> =
        p.params().into_iter().map(|t| crate::autodiff::Tensor { shape: t.shape.clone(), data: vec![0.0; t.data.len()] }).collect();
    p.set_params(&zeros).unwrap();
    Arc::new(p)
}

#[test]
fn replay_reference_contracts() {
    let track = bundled_track("val_s_east").unwrap();
    let mut s = setup();
    let plain = drive(&s, track.clone(), &mut ExpertDriver { lookahead: 6.0 }, "EXPERT", 0).unwrap();
    assert!(matches!(replay_reference(&zero_policy(), &plain, "Z"), Err(EvalError::MissingObservations)));
    s.record_observations = true;
    let reference = drive(&s, track, &mut ExpertDriver { lookahead: 6.0 }, "EXPERT", 0).unwrap();
    assert_eq!(steering_mae(&reference, &reference).unwrap(), 0.0);
    let zero = replay_reference(&zero_policy(), &reference, "ZERO").unwrap();
    let mean_abs = reference.frames.iter().map(|f| f.commanded_steering.abs()).sum::<f64>() / reference.frames.len() as f64;
    assert!((steering_mae(&zero, &reference).unwrap() - mean_abs).abs() < 1e-12);
    let cfg = PolicyConfig { extractor: ExtractorPreset::Desk, recurrent: true, ..Default::default() };
    let net = Arc::new(Policy::<f32>::new(&cfg, 64, 40, &mut ChaCha8Rng::seed_from_u64(2)).unwrap());
    assert_eq!(replay_reference(&net, &reference, "R").unwrap(), replay_reference(&net, &reference, "R").unwrap());
}

#[test]
fn correlation_of_graded_expert_noise() {
    let mut s = setup();
    s.env.cfg.randomization = RandomizationToggles::OFF;
    s.record_observations = false;
    let track = bundled_track("val_s_east").unwrap();
    let reference = drive(&s, track.clone(), &mut ExpertDriver { lookahead: 6.0 }, "EXPERT", 0).unwrap();
    let mut rows = Vec::new();
    for (name, std) in [("expert", 0.0), ("expert+noise", 0.08), ("random", 0.6)] {
        // Open loop on the reference states the expert part reproduces the
        // reference steering exactly; only the noise differs.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = rand_distr::Normal::new(0.0, std).unwrap();
        let model = DriveLog {
            frames: reference
                .frames
                .iter()
                .map(|f| Frame {
                    commanded_steering: (f.commanded_steering + rand_distr::Distribution::sample(&noise, &mut rng)).clamp(-0.5, 0.5),
                    ..f.clone()
                })
                .collect(),
            ..reference.clone()
        };
        let closed = (0..3)
            .map(|k| autonomy_percent(&drive(&s, track.clone(), &mut NoisyExpertDriver::new(6.0, std, 5), name, k).unwrap()).unwrap())
            .sum::<f64>()
            / 3.0;
        rows.push(ModelMetrics {
            model: name.into(),
            autonomy: closed,
            steering_mae: steering_mae(&model, &reference).unwrap(),
            average_f1: average_f1(&model, &reference, BUCKET_THRESHOLD).unwrap(),
        });
    }
    assert!(rows[0].steering_mae < rows[1].steering_mae && rows[1].steering_mae < rows[2].steering_mae);
    assert!(rows[0].autonomy > rows[2].autonomy, "{rows:?}");
    let report = correlation_report(&rows).unwrap();
    if rows[0].autonomy > rows[1].autonomy && rows[1].autonomy > rows[2].autonomy {
        assert_eq!(report.mae_vs_autonomy, Some(-1.0));
    }
    assert!(report.to_csv().contains("spearman_mae_vs_autonomy"));
    assert!(matches!(correlation_report(&rows[..2]), Err(EvalError::TooFewModels(2))));
    let same = vec![rows[0].clone(); 3];
    assert_eq!(correlation_report(&same).unwrap().mae_vs_autonomy, None);
}

fn tr(model: &str, scenario: &str, trial: usize, autonomy: f64) -> TrialResult {
    TrialResult { model: model.into(), scenario: scenario.into(), trial, autonomy }
}

#[test]
fn leaderboard_sorting_and_means() {
    let one = leaderboard(&[tr("A", "s1", 0, 100.0)]);
    assert_eq!(one.len(), 1);
    assert_eq!((one[0].mean, one[0].max), (100.0, 100.0));
    let rows = leaderboard(&[
        tr("B", "s1", 0, 80.0),
        tr("B", "s1", 1, 60.0),
        tr("B", "s2", 0, 90.0),
        tr("A", "s1", 0, 50.0),
        tr("A", "s2", 0, 70.0),
        tr("C", "s1", 0, 60.0),
        tr("C", "s2", 0, 60.0),
    ]);
    let order: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(order, ["B", "A", "C"]);
    assert_eq!(rows[0].per_scenario, vec![("s1".to_string(), 70.0), ("s2".to_string(), 90.0)]);
    assert_eq!((rows[0].mean, rows[0].max), (80.0, 90.0));
    let csv = leaderboard_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), "model,s1,s2,mean,max");
    assert_eq!(csv.lines().nth(1).unwrap(), "B,70,90,80,90");
}

#[test]
fn trajectory_heat_bins_fractions() {
    let log = log_from(&[0.2, 0.4, 1.5], &[0.0; 3], &[false, true, false]);
    let heat = trajectory_heat(&[log], 1.0);
    assert_eq!(heat, vec![(0.5, 0.5, 0.5), (1.5, 0.5, 1.0)]);
    assert!(heat_csv(&heat).starts_with("x,y,autonomy_fraction\n"));
}

#[test]
fn oscillation_of_alternating_steering() {
    let log = uniform_log(5, |k| if k % 2 == 0 { 0.1 } else { -0.1 });
    assert!((oscillation(&log).unwrap() - 0.2).abs() < 1e-12);
    assert_eq!(oscillation(&uniform_log(5, |_| 0.3)), Some(0.0));
}

proptest! {
    #[test]
    fn autonomy_bounds(steps in prop::collection::vec((0.01f64..2.0, any::<bool>()), 2..60)) {
        let mut s = vec![0.0];
        for (d, _) in &steps[1..] {
            s.push(s.last().unwrap() + d);
        }
        let flags: Vec<bool> = steps.iter().map(|x| x.1).collect();
        let log = log_from(&s, &vec![0.0; s.len()], &flags);
        let a = autonomy_percent(&log).unwrap();
        prop_assert!((0.0..=100.0).contains(&a));
        let driven = flags[..flags.len() - 1].iter().any(|f| *f);
        prop_assert_eq!(a == 100.0, !driven);
    }

    #[test]
    fn f1_is_one_iff_diagonal(pairs in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 1..40)) {
        let m = uniform_log(pairs.len(), |k| pairs[k].0);
        let r = uniform_log(pairs.len(), |k| pairs[k].1);
        let f1 = average_f1(&m, &r, BUCKET_THRESHOLD).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
        let diagonal = pairs.iter().all(|(a, b)| bucket(*a, BUCKET_THRESHOLD) == bucket(*b, BUCKET_THRESHOLD));
        prop_assert_eq!(f1 == 1.0, diagonal);
    }

    #[test]
    fn mae_symmetric_and_self_deviation_zero(v in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0), 2..40)) {
        let a = uniform_log(v.len(), |k| v[k].0);
        let b = uniform_log(v.len(), |k| v[k].1);
        prop_assert_eq!(steering_mae(&a, &b).unwrap(), steering_mae(&b, &a).unwrap());
        let wiggly = DriveLog { frames: a.frames.iter().zip(&v).map(|(f, x)| Frame { position: f.position + Vec2::new(0.0, x.2), ..f.clone() }).collect(), ..a.clone() };
        prop_assert_eq!(mean_deviation(&wiggly, &wiggly, 0.3).unwrap(), 0.0);
    }
}
