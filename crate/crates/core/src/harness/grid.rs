use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::eval::{evaluate, OaPilot, PidPilot};
use super::metrics::{mean_var, RunMetrics};
use super::train::{train, write_file, TrainOptions};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok(RunMetrics),
    Failed(String),
}

/// Across-seed statistics at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    pub mean: f64,
    pub variance: f64,
    pub usage_mean: f64,
    pub success_mean: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub name: String,
    pub runs: Vec<(u64, RunStatus)>,
    pub aggregate: Vec<AggregateRow>,
}

impl ConfigSummary {
    pub fn metrics(&self) -> Vec<&RunMetrics> {
        self.runs
            .iter()
            .filter_map(|(_, s)| match s {
                RunStatus::Ok(m) => Some(m),
                RunStatus::Failed(_) => None,
            })
            .collect()
    }

    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.runs
            .iter()
            .filter_map(|(seed, s)| match s {
                RunStatus::Failed(e) => Some((*seed, e.as_str())),
                RunStatus::Ok(_) => None,
            })
            .collect()
    }

    /// Mean over seeds of the final checkpoint's smoothed return.
    pub fn final_mean(&self) -> Option<f64> {
        self.aggregate.last().map(|r| r.mean)
    }

    /// Per-seed mean smoothed return over checkpoints after `from`.
    pub fn window_means(&self, from: usize) -> Vec<f64> {
        self.metrics().iter().filter_map(|m| m.window_mean(from)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridReport {
    pub configs: Vec<ConfigSummary>,
}

impl GridReport {
    pub fn get(&self, name: &str) -> Option<&ConfigSummary> {
        self.configs.iter().find(|c| c.name == name)
    }
}

/// Checkpoint-wise mean and sample variance of the smoothed return across runs.
pub fn aggregate(runs: &[&RunMetrics]) -> Vec<AggregateRow> {
    let len = runs.iter().map(|m| m.checkpoints.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let at = |f: &dyn Fn(&super::CheckpointRow) -> f64| {
                runs.iter().map(|m| f(&m.checkpoints[i])).collect::<Vec<_>>()
            };
            let (mean, variance) = mean_var(&at(&|c| c.smoothed_return));
            AggregateRow {
                step: runs[0].checkpoints[i].step,
                mean,
                variance,
                usage_mean: mean_var(&at(&|c| c.usage_fraction)).0,
                success_mean: mean_var(&at(&|c| c.success_rate)).0,
                runs: runs.len(),
            }
        })
        .collect()
}

fn threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var("SGNAV_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or_else(rayon::current_num_threads)
        .max(1)
}

/// Trains every `(config, seed)` pair; failed runs are recorded and the grid carries on.
///
/// Seeds come from each config unless `seeds` overrides them. Runs write under
/// `out/<config>/seed_<n>/` when `out` is given.
pub fn run_grid(
    configs: &[ExperimentConfig],
    seeds: Option<&[u64]>,
    parallelism: Option<usize>,
    out: Option<&Path>,
) -> Result<GridReport, HarnessError> {
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| seeds.unwrap_or(&c.seeds).iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(parallelism))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(usize, u64, RunStatus)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let cfg = &configs[i];
                let options = TrainOptions {
                    out: out.map(|o| o.join(&cfg.name).join(format!("seed_{seed}"))),
                    audit: false,
                };
                let status = match train(cfg, seed, &options) {
                    Ok(run) => RunStatus::Ok(run.metrics),
                    Err(e) => RunStatus::Failed(e.to_string()),
                };
                (i, seed, status)
            })
            .collect()
    });
    let mut report = GridReport::default();
    for (i, cfg) in configs.iter().enumerate() {
        let runs: Vec<(u64, RunStatus)> = results
            .iter()
            .filter(|(j, _, _)| *j == i)
            .map(|(_, seed, s)| (*seed, s.clone()))
            .collect();
        let mut summary = ConfigSummary {
            name: cfg.name.clone(),
            runs,
            aggregate: Vec::new(),
        };
        summary.aggregate = aggregate(&summary.metrics());
        if let Some(dir) = out {
            let mut csv = String::from("step,mean,variance,usage_mean,success_mean,runs\n");
            for r in &summary.aggregate {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.step, r.mean, r.variance, r.usage_mean, r.success_mean, r.runs
                );
            }
            let path = dir.join(&cfg.name);
            std::fs::create_dir_all(&path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            write_file(&path.join("aggregate.csv"), &csv)?;
        }
        report.configs.push(summary);
    }
    Ok(report)
}

/// Figure id and the configs it compares.
pub const FIGURES: [(&str, &[&str]); 6] = [
    ("fig3a", &["sguidance", "vanilla"]),
    ("fig3b", &["sguidance", "ddpg_pid", "ddpg_oa", "vanilla"]),
    ("fig4a", &["sguidance", "uniform", "argmax"]),
    ("fig4b", &["sguidance", "sb2", "softmax"]),
    ("fig5a", &["sguidance", "no_cv", "vanilla"]),
    ("fig5b", &["turnoff"]),
];

/// Speed of the obstacle-avoidance reference pilot.
const OA_REFERENCE_CRUISE: f64 = 0.3;

/// Writes one CSV per figure for which at least one config ran.
///
/// The first figure also carries the mean evaluation return of the PID and
/// OA reference pilots as flat columns.
pub fn write_figures(
    report: &GridReport,
    configs: &[ExperimentConfig],
    out: &Path,
) -> Result<Vec<String>, HarnessError> {
    let mut written = Vec::new();
    for (fig, names) in FIGURES {
        let present: Vec<&ConfigSummary> = names
            .iter()
            .filter_map(|n| report.get(n))
            .filter(|s| !s.aggregate.is_empty())
            .collect();
        if present.is_empty() {
            continue;
        }
        let mut reference = Vec::new();
        if fig == "fig3a" {
            if let Some(cfg) = configs.iter().find(|c| c.name == present[0].name) {
                let world = cfg.resolve_world()?;
                let mut pid = PidPilot {
                    pid: cfg.pid,
                    bounds: cfg.bounds,
                };
                let mut oa = OaPilot {
                    oa: cfg.oa,
                    cruise: OA_REFERENCE_CRUISE,
                    bounds: cfg.bounds,
                    beam_angles: world.lidar.beam_angles(),
                };
                let episodes = cfg.eval_episodes;
                reference.push((
                    "pid_reference",
                    evaluate(&mut pid, cfg, world.clone(), episodes, 0)?.mean_return,
                ));
                reference.push(("oa_reference", evaluate(&mut oa, cfg, world, episodes, 0)?.mean_return));
            }
        }
        let mut csv = String::from("step");
        for s in &present {
            let _ = write!(csv, ",{0}_mean,{0}_var,{0}_usage", s.name);
        }
        for (name, _) in &reference {
            let _ = write!(csv, ",{name}");
        }
        csv.push('\n');
        let rows = present.iter().map(|s| s.aggregate.len()).min().unwrap_or(0);
        for i in 0..rows {
            let _ = write!(csv, "{}", present[0].aggregate[i].step);
            for s in &present {
                let r = &s.aggregate[i];
                let _ = write!(csv, ",{},{},{}", r.mean, r.variance, r.usage_mean);
            }
            for (_, v) in &reference {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        let file = format!("{fig}.csv");
        write_file(&out.join(&file), &csv)?;
        written.push(file);
    }
    write_file(&out.join("plot.py"), plot_script())?;
    Ok(written)
}

/// Matplotlib script turning the figure CSVs next to it into PNGs.
pub fn plot_script() -> &'static str {
    r#"#!/usr/bin/env python3
"""Plots the learning curves written by `sgnav grid` / `sgnav plot-data`."""
import csv
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)

for path in sorted(here.glob("fig*.csv")):
    with path.open() as f:
        rows = list(csv.DictReader(f))
    if not rows:
        continue
    steps = [float(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    usage_ax = None
    for col in rows[0]:
        if col.endswith("_mean"):
            name = col[: -len("_mean")]
            mean = [float(r[col]) for r in rows]
            sd = [float(r[name + "_var"]) ** 0.5 for r in rows]
            ax.plot(steps, mean, label=name)
            ax.fill_between(steps, [m - s for m, s in zip(mean, sd)], [m + s for m, s in zip(mean, sd)], alpha=0.2)
            usage = [float(r[name + "_usage"]) for r in rows]
            if any(u > 0 for u in usage):
                usage_ax = usage_ax or ax.twinx()
                usage_ax.plot(steps, usage, linestyle="--", label=name + " usage")
                usage_ax.set_ylabel("heuristic usage")
        elif col.endswith("_reference"):
            ax.axhline(float(rows[0][col]), linestyle=":", color="grey", label=col)
    ax.set_xlabel("training steps")
    ax.set_ylabel("smoothed episode reward")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(path.stem)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
"#
}
