use std::path::Path;

use sgnav::controllers::ControllerId;
use sgnav::harness::TrainOptions;
use sgnav::harness::{train, ExperimentConfig, RunCheckpoint, RunMetrics, CURVES_HEADER, EPISODES_HEADER};

fn small(preset: &str, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset).unwrap();
    cfg.total_steps = steps;
    cfg.warmup = 200;
    cfg
}

fn audited(cfg: &ExperimentConfig, seed: u64) -> sgnav::harness::RunOutput {
    let options = TrainOptions { out: None, audit: true };
    train(cfg, seed, &options).unwrap()
}

#[test]
fn decisions_are_held_between_ticks() {
    let cfg = small("sguidance", 1500);
    let hold = cfg.hold_steps();
    let run = audited(&cfg, 3);
    assert_eq!(run.audit.len(), 1500);
    for pair in run.audit.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(b.tick, b.episode_step % hold == 0, "step {}", b.step);
        if !b.tick {
            assert_eq!(a.decision, b.decision, "decision changed off-tick at step {}", b.step);
        }
    }
    assert!(run.audit[0].tick);
}

#[test]
fn replay_stores_the_executed_action() {
    for preset in ["sguidance", "vanilla", "turnoff"] {
        let run = audited(&small(preset, 800), 1);
        for a in &run.audit {
            assert_eq!(a.stored, a.executed, "{preset} step {}", a.step);
            if a.executed_by == ControllerId::Ddpg {
                assert_eq!(a.executed, a.proposal, "{preset} step {}", a.step);
            }
        }
    }
}

#[test]
fn every_controller_gets_picked() {
    let run = audited(&small("sguidance", 2000), 0);
    for c in ControllerId::ALL {
        assert!(run.audit.iter().any(|a| a.executed_by == c), "{c:?} never executed");
    }
    let run = audited(&small("ddpg_pid", 2000), 0);
    assert!(run.audit.iter().all(|a| a.executed_by != ControllerId::Oa));
}

#[test]
fn step_count_matches_budget() {
    for (preset, steps) in [("sguidance", 1234), ("vanilla", 777), ("argmax", 1001)] {
        let run = train(&small(preset, steps), 2, &TrainOptions::default()).unwrap();
        assert_eq!(run.metrics.total_steps, steps, "{preset}");
        let ended = run.metrics.episodes.last().map_or(0, |e| e.end_step);
        assert!(ended <= steps);
        let lengths: usize = run.metrics.episodes.iter().map(|e| e.length).sum();
        assert!(lengths <= steps);
    }
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn zero_step_run_writes_valid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("sguidance", 0);
    let run = train(&cfg, 0, &TrainOptions::to_dir(dir.path())).unwrap();
    assert_eq!(run.metrics.total_steps, 0);
    assert!(run.metrics.episodes.is_empty());

    let curves = read(dir.path(), "curves.csv");
    assert_eq!(curves.lines().next(), Some(CURVES_HEADER));
    assert!(RunMetrics::from_curves_csv(&curves).unwrap().checkpoints.is_empty());
    assert_eq!(read(dir.path(), "episodes.csv").lines().next(), Some(EPISODES_HEADER));
    let back = ExperimentConfig::from_toml(&read(dir.path(), "config.toml")).unwrap();
    assert_eq!(back, cfg);
    let ckpt = RunCheckpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.step, 0);
    assert!(ckpt.switch.is_some());
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("sguidance", 2500);
    let run = train(&cfg, 4, &TrainOptions::to_dir(dir.path())).unwrap();
    let curves = RunMetrics::from_curves_csv(&read(dir.path(), "curves.csv")).unwrap();
    assert_eq!(curves.checkpoints, run.metrics.checkpoints);
    assert_eq!(curves.checkpoints.len(), 2500 / cfg.checkpoint_every);
    let episodes = read(dir.path(), "episodes.csv");
    assert_eq!(episodes.lines().count(), run.metrics.episodes.len() + 1);
    for line in read(dir.path(), "trajectory.jsonl")
        .lines()
        .chain(read(dir.path(), "switch.jsonl").lines())
    {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let ckpt = RunCheckpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.step, 2500);
    assert_eq!(ckpt.seed, 4);
}
