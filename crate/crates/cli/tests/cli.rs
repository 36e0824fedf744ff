use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lanecraft::evalkit::DriveLog;
use lanecraft::learner::read_metrics;

fn lanecraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanecraft")).args(args).env("LANECRAFT_THREADS", "2").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_code(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), stderr(o));
    assert!(!stderr(o).contains("panicked"), "{}", stderr(o));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMOKE: &str = "preset = \"CONTINUOUS-PLAIN\"\ntotal_frames = 64\ncheckpoint_every = 1\n[ppo]\nn_step = 16\nworkers = 2\nepochs_per_update = 1\nminibatch_count = 2\n";

fn smoke_config(dir: &Path) -> PathBuf {
    let path = dir.join("smoke.toml");
    std::fs::write(&path, SMOKE).unwrap();
    path
}

#[test]
fn missing_config_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanecraft(&["train", "--config", "no_such_config.toml", "--out", p(dir.path())]);
    assert_code(&o, 2);
    assert!(stderr(&o).contains("no_such_config.toml"));
}

#[test]
fn usage_errors_exit_2() {
    assert_code(&lanecraft(&["train"]), 2);
    assert_code(&lanecraft(&["frobnicate"]), 2);
    assert_code(&lanecraft(&["validate", "--scenario", "train_east", "--step", "-1"]), 2);
    assert_code(&lanecraft(&["--help"]), 0);
}

#[test]
fn smoke_train_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let out = dir.path().join("run");
    assert_code(&lanecraft(&["train", "--config", p(&cfg), "--out", p(&out), "-q"]), 0);
    assert!(out.join("final.ckpt").exists());
    assert!(out.join("checkpoints").join("update_000002.ckpt").exists());
    assert!(out.join("effective_config.json").exists());
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.update).collect::<Vec<_>>(), [1, 2]);

    let o = lanecraft(&["train", "--config", p(&cfg), "--out", p(&out), "--resume", p(&out.join("final.ckpt")), "--frames", "128", "-q"]);
    assert_code(&o, 0);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.update).collect::<Vec<_>>(), [1, 2, 3, 4]);
    assert_eq!(rows[2].frames, 96);

    // The snapshot is itself a loadable config.
    let again = dir.path().join("again");
    assert_code(&lanecraft(&["train", "--config", p(&out.join("effective_config.json")), "--out", p(&again), "--frames", "32", "-q"]), 0);
}

#[test]
fn eval_expert_stand_in_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let o = lanecraft(&["eval", "--checkpoint", "expert", "--scenarios", "val_s_east", "--trials", "3", "--out", p(&out), "-q"]);
    assert_code(&o, 0);
    let board = std::fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    assert_eq!(board.lines().nth(1).unwrap(), "EXPERT,100,100,100");
    let mut logs: Vec<String> =
        std::fs::read_dir(out.join("logs")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    logs.sort();
    assert_eq!(logs, ["EXPERT_val_s_east_trial0.jsonl", "EXPERT_val_s_east_trial1.jsonl", "EXPERT_val_s_east_trial2.jsonl"]);
    let dev = std::fs::read_to_string(out.join("deviation.csv")).unwrap();
    assert_eq!(dev.lines().count(), 4);
    assert!(out.join("effective_config.json").exists());
    assert!(out.join("heat.csv").exists());
}

#[test]
fn eval_rejects_unknown_scenarios_and_mismatched_architectures() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanecraft(&["eval", "--checkpoint", "expert", "--scenarios", "atlantis", "--out", p(&dir.path().join("x"))]);
    assert_code(&o, 2);
    assert!(stderr(&o).contains("atlantis"));
    assert_code(&lanecraft(&["eval", "--checkpoint", "missing.ckpt", "--out", p(&dir.path().join("y"))]), 2);

    let run = dir.path().join("run");
    assert_code(&lanecraft(&["train", "--config", p(&smoke_config(dir.path())), "--out", p(&run), "--frames", "32", "-q"]), 0);
    let ckpt = run.join("final.ckpt");
    let o = lanecraft(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--preset",
        "DISCRETE-PLAIN",
        "--scenarios",
        "val_s_east",
        "--out",
        p(&dir.path().join("z")),
    ]);
    assert_code(&o, 2);
    let msg = stderr(&o);
    assert!(msg.contains("CONTINUOUS 64x40 Desk") && msg.contains("DISCRETE 64x40 Desk"), "{msg}");

    // Without a config the checkpoint's own architecture is used.
    let out = dir.path().join("ok");
    assert_code(
        &lanecraft(&["eval", "--checkpoint", p(&ckpt), "--scenarios", "junction_right", "--trials", "1", "--out", p(&out), "-q"]),
        0,
    );
    let board = std::fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    assert!(board.lines().nth(1).unwrap().starts_with("CONTINUOUS-PLAIN@1,"), "{board}");
}

#[test]
fn offline_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec");
    assert_code(
        &lanecraft(&[
            "eval",
            "--checkpoint",
            "expert",
            "--scenarios",
            "val_s_west",
            "--trials",
            "1",
            "--record-observations",
            "--out",
            p(&rec),
            "-q",
        ]),
        0,
    );
    let reference = rec.join("logs").join("EXPERT_val_s_west_trial0.jsonl");
    let plain = dir.path().join("plain");
    assert_code(&lanecraft(&["eval", "--checkpoint", "expert", "--scenarios", "val_s_west", "--trials", "1", "--out", p(&plain), "-q"]), 0);
    let no_obs = plain.join("logs").join("EXPERT_val_s_west_trial0.jsonl");

    let o = lanecraft(&["offline", "--checkpoints", "reference", "--reference", p(&no_obs), "--out", p(&dir.path().join("a"))]);
    assert_code(&o, 2);
    assert!(stderr(&o).contains("observations"));

    let wp_cfg = dir.path().join("wp.toml");
    std::fs::write(&wp_cfg, SMOKE.replace("CONTINUOUS-PLAIN", "WAYPOINTS-DISCRETE")).unwrap();
    let wp = dir.path().join("wp");
    assert_code(&lanecraft(&["train", "--config", p(&wp_cfg), "--out", p(&wp), "--frames", "32", "-q"]), 0);
    let cont = dir.path().join("cont");
    assert_code(&lanecraft(&["train", "--config", p(&smoke_config(dir.path())), "--out", p(&cont), "--frames", "32", "-q"]), 0);

    let out = dir.path().join("offline");
    let o = lanecraft(&[
        "offline",
        "--checkpoints",
        "reference",
        p(&wp.join("final.ckpt")),
        p(&cont.join("final.ckpt")),
        "--reference",
        p(&reference),
        "--autonomy",
        p(&rec.join("leaderboard.csv")),
        "--out",
        p(&out),
    ]);
    assert_code(&o, 0);
    assert!(stderr(&o).contains("skipping WAYPOINTS-DISCRETE@1"), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("offline.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,steering_mae,average_f1,autonomy");
    assert_eq!(lines[1], "REFERENCE,0,1,");
    assert!(lines[2].starts_with("CONTINUOUS-PLAIN@1,"));
    assert_eq!(lines.len(), 3);
    assert!(out.join("effective_config.json").exists());
}

#[test]
fn validate_curb_bug_fixture_and_clean_routes() {
    let o = lanecraft(&["validate", "--scenario", "curb_bug_sparse"]);
    assert_code(&o, 1);
    assert!(stderr(&o).contains("arclengths ["), "{}", stderr(&o));
    assert_code(&lanecraft(&["validate", "--scenario", "curb_bug_dense"]), 0);
    let dir = tempfile::tempdir().unwrap();
    assert_code(&lanecraft(&["validate", "--scenario", "train_east", "--out", p(dir.path())]), 0);
    assert!(dir.path().join("effective_config.json").exists());
    assert_code(&lanecraft(&["validate", "--scenario", "nowhere.json"]), 2);
}

#[test]
fn saliency_and_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_code(&lanecraft(&["train", "--config", p(&smoke_config(dir.path())), "--out", p(&run), "--frames", "32", "-q"]), 0);
    let ckpt = run.join("final.ckpt");
    let ev = dir.path().join("ev");
    assert_code(
        &lanecraft(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--scenarios",
            "junction_right",
            "--trials",
            "1",
            "--record-observations",
            "--out",
            p(&ev),
            "-q",
        ]),
        0,
    );
    let log_path = std::fs::read_dir(ev.join("logs")).unwrap().next().unwrap().unwrap().path();

    assert_code(&lanecraft(&["replay", "--log", p(&log_path)]), 0);
    let mut log = DriveLog::read(&log_path).unwrap();
    log.frames[5].lateral += 1e-9;
    let tampered = dir.path().join("tampered.jsonl");
    log.write(&tampered).unwrap();
    let o = lanecraft(&["replay", "--log", p(&tampered)]);
    assert_code(&o, 1);
    assert!(stderr(&o).contains("frame 5"));

    let sal = dir.path().join("sal");
    assert_code(&lanecraft(&["saliency", "--checkpoint", p(&ckpt), "--log", p(&log_path), "--out", p(&sal), "-q"]), 0);
    let frames = std::fs::read_dir(&sal).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count();
    assert_eq!(frames, log.frames.len());
    assert!(sal.join("effective_config.json").exists());
    assert_code(&lanecraft(&["saliency", "--checkpoint", p(&ckpt), "--log", p(&log_path), "--out", p(&sal), "--patch", "0"]), 2);
}

#[test]
fn bad_input_files_exit_2_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "not json at all\n").unwrap();
    let junk_ckpt = dir.path().join("junk.ckpt");
    std::fs::write(&junk_ckpt, [0u8, 1, 2, 3]).unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    assert_code(&lanecraft(&["replay", "--log", p(&junk)]), 2);
    assert_code(&lanecraft(&["saliency", "--checkpoint", p(&junk_ckpt), "--log", p(&junk), "--out", p(dir.path())]), 2);
    assert_code(&lanecraft(&["eval", "--checkpoint", p(&junk_ckpt), "--out", p(dir.path())]), 2);
    assert_code(&lanecraft(&["offline", "--checkpoints", p(&junk_ckpt), "--reference", p(&junk), "--out", p(dir.path())]), 2);
    // An empty config is valid: every default applies.
    assert_code(&lanecraft(&["train", "--config", p(&empty), "--frames", "1", "--out", p(&dir.path().join("e")), "-q"]), 0);
}

#[test]
fn list_shows_presets_and_scenarios() {
    let o = lanecraft(&["list"]);
    assert_code(&o, 0);
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("DYNAMICS-RAND-RNN") && s.contains("test_town_west"));
}
