use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sgnav::harness::{
    evaluate_checkpoint, run_grid, train, write_figures, ConfigSummary, ExperimentConfig, GridReport, RunCheckpoint,
    RunMetrics, RunStatus, TrainOptions, PRESETS,
};
use sgnav::sim::World;

#[derive(Parser)]
#[command(
    name = "sgnav",
    version,
    about = "Stochastic controller switching for lidar navigation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run.
    Train {
        /// Config file, or one of the preset names.
        #[arg(long, default_value = "sguidance")]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the step budget.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Greedy evaluation of a run checkpoint.
    Eval {
        /// Path to checkpoint.json written by `train`.
        checkpoint: PathBuf,
        /// Bundled world name or world file; defaults to the training world.
        #[arg(long)]
        world: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drive with the actor alone, switch and heuristics off.
        #[arg(long)]
        isolate_ddpg: bool,
    },
    /// Train every config over every seed and write figure CSVs.
    Grid {
        /// Configs or presets; repeatable. Defaults to every preset.
        #[arg(long)]
        config: Vec<String>,
        /// Comma-separated seeds overriding the configs' own.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Worker threads; falls back to SGNAV_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild figure CSVs and the plot script from finished run directories.
    PlotData {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(spec: &str, steps: Option<usize>) -> Result<ExperimentConfig> {
    let path = Path::new(spec);
    let mut cfg = if path.is_file() {
        ExperimentConfig::load(path).with_context(|| format!("loading {spec}"))?
    } else {
        match ExperimentConfig::preset(spec) {
            Some(c) => c,
            None => bail!("{spec} is neither a file nor a preset ({})", PRESETS.join(", ")),
        }
    };
    if let Some(steps) = steps {
        cfg.total_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &GridReport) {
    for s in &report.configs {
        let last = s.aggregate.last();
        println!(
            "{:<12} runs={} failed={} final_mean={:.3} final_var={:.3}",
            s.name,
            s.runs.len(),
            s.failures().len(),
            last.map_or(f64::NAN, |r| r.mean),
            last.map_or(f64::NAN, |r| r.variance),
        );
        for (seed, err) in s.failures() {
            eprintln!("  seed {seed} failed: {err}");
        }
    }
}

/// Reads `out/<config>/seed_<n>/{config.toml,curves.csv}` back into a report.
fn collect(out: &Path) -> Result<(GridReport, Vec<ExperimentConfig>)> {
    let mut report = GridReport::default();
    let mut configs = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .with_context(|| format!("reading {}", out.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let mut seeds: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("curves.csv").is_file())
            .collect();
        seeds.sort();
        let Some(first) = seeds.first() else { continue };
        let cfg = ExperimentConfig::load(&first.join("config.toml"))?;
        let mut runs = Vec::new();
        for s in &seeds {
            let seed = s
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("seed_"))
                .and_then(|n| n.parse().ok())
                .unwrap_or(0);
            let text = std::fs::read_to_string(s.join("curves.csv"))?;
            runs.push((seed, RunStatus::Ok(RunMetrics::from_curves_csv(&text)?)));
        }
        let mut summary = ConfigSummary {
            name: cfg.name.clone(),
            runs,
            aggregate: Vec::new(),
        };
        summary.aggregate = sgnav::harness::aggregate(&summary.metrics());
        report.configs.push(summary);
        configs.push(cfg);
    }
    Ok((report, configs))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            steps,
        } => {
            let cfg = load_config(&config, steps)?;
            let run = train(&cfg, seed, &TrainOptions::to_dir(&out))?;
            let m = &run.metrics;
            println!(
                "{} seed {seed}: {} steps, {} episodes, final smoothed return {:.3}, {:.1}s",
                cfg.name,
                m.total_steps,
                m.episodes.len(),
                m.final_smoothed().unwrap_or(f64::NAN),
                m.wall_seconds
            );
            if let Some(step) = m.anneal_start {
                println!("heuristic anneal started at step {step}");
            }
        }
        Command::Eval {
            checkpoint,
            world,
            episodes,
            seed,
            isolate_ddpg,
        } => {
            let ckpt = RunCheckpoint::load(&checkpoint)?;
            let world = match world {
                None => None,
                Some(w) => Some(match World::named(&w) {
                    Some(w) => w,
                    None => World::load(Path::new(&w))?,
                }),
            };
            let r = evaluate_checkpoint(&ckpt, world, episodes, isolate_ddpg, seed)?;
            println!(
                "episodes {} success {:.3} crash {:.3} mean return {:.3}",
                r.episodes, r.success_rate, r.crash_rate, r.mean_return
            );
        }
        Command::Grid {
            config,
            seed,
            out,
            steps,
            threads,
        } => {
            let names: Vec<String> = if config.is_empty() {
                PRESETS
                    .iter()
                    .filter(|p| **p != "ddpg_only")
                    .map(|p| p.to_string())
                    .collect()
            } else {
                config
            };
            let configs = names
                .iter()
                .map(|n| load_config(n, steps))
                .collect::<Result<Vec<_>>>()?;
            let seeds = (!seed.is_empty()).then_some(seed.as_slice());
            let report = run_grid(&configs, seeds, threads, Some(&out))?;
            print_summary(&report);
            for f in write_figures(&report, &configs, &out)? {
                println!("wrote {}", out.join(f).display());
            }
        }
        Command::PlotData { out } => {
            let (report, configs) = collect(&out)?;
            print_summary(&report);
            for f in write_figures(&report, &configs, &out)? {
                println!("wrote {}", out.join(f).display());
            }
        }
    }
    Ok(())
}
