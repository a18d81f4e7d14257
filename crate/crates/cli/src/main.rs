//! `reactnav` command line: collect, relabel, train, bench, simulate, report.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use reactnav::curriculum::{train_planner, TrainingPlan};
use reactnav::dataset::{
    collect_with, detect_oscillation, emit_csv, relabel, split, CollectError, CollectOptions, DEFAULT_MIN_ALTERNATIONS,
    DEFAULT_TRAIN_FRACTION, DEFAULT_WINDOW,
};
use reactnav::learn::{accuracy, benchmark_fit, fit};
use reactnav::nav::compute_metrics;
use reactnav::scenario::{build, ScenarioKind};
use reactnav::{Algorithm, Dataset, EpisodeMetrics, Model, NavConfig, Policy, RobotSpec, Trajectory, WorldSpec};

use config::RunConfig;
use report::{report_tables, BenchRow};

#[derive(Parser, Debug)]
#[command(
    name = "reactnav",
    version,
    about = "Four-sonar reactive robot: data, learners and closed-loop simulation"
)]
struct Cli {
    /// JSON run configuration; missing fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Record teacher-labelled scans in a world.
    Collect {
        /// Scenario name (course, enclosure, corner, mobile) or world JSON file.
        #[arg(long)]
        world: Option<String>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace oscillating left/right stretches with their first label.
    Relabel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_ALTERNATIONS)]
        min_alternations: usize,
    },
    /// Fit one learner on a dataset.
    Train {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides the forest seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the frozen planner recipe (teacher recordings plus closed-loop refinement).
    TrainPlanner {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Split, fit all three learners and report accuracy and fit time.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run one closed-loop episode and log the trajectory.
    Simulate {
        #[arg(long, conflicts_with = "world")]
        scenario: Option<ScenarioKind>,
        /// World JSON file instead of a scenario.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        policy: Policy,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Recompute and print metrics for a logged episode.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
}

/// Everything needed to recompute metrics for a trajectory log. Written next
/// to the log as `<log>.meta.json`.
#[derive(Debug, Serialize, Deserialize)]
struct SimMeta {
    scenario: Option<ScenarioKind>,
    policy: Policy,
    seed: u64,
    robot: RobotSpec,
    nav: NavConfig,
    world: WorldSpec,
    metrics: EpisodeMetrics,
}

fn meta_path(log: &Path) -> PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

/// A scenario name builds that scenario with `seed`; anything else is a path.
fn resolve_world(arg: Option<&str>, cfg: &RunConfig, seed: u64) -> Result<(WorldSpec, String)> {
    match arg {
        Some(s) => match s.parse::<ScenarioKind>() {
            Ok(kind) => Ok((build(kind, seed), kind.as_str().to_string())),
            Err(_) => {
                let w = WorldSpec::load(Path::new(s)).with_context(|| format!("loading world {s}"))?;
                Ok((w, file_stem(Path::new(s))))
            }
        },
        None => match &cfg.world {
            Some(p) => Ok((WorldSpec::load(p)?, file_stem(p))),
            None => bail!("no world given: pass --world or set `world` in the config"),
        },
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| "world".into(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.cmd {
        Cmd::Collect {
            world,
            steps,
            seed,
            out,
        } => {
            let seed = seed.unwrap_or(cfg.seed);
            let (world, name) = resolve_world(world.as_deref(), &cfg, seed)?;
            world.validate()?;
            let out = out.unwrap_or_else(|| cfg.dir("data").join(format!("{name}-{seed}.csv")));
            let opts = CollectOptions {
                noise_sigma: cfg.noise_sigma,
                tick_seconds: NavConfig::default().tick_seconds,
                start: None,
            };
            match collect_with(&world, &cfg.robot, &cfg.thresholds, steps, seed, &opts) {
                Ok(ds) => {
                    write(&out, emit_csv(&ds))?;
                    println!("wrote {} samples to {}", ds.len(), out.display());
                    Ok(())
                }
                Err(CollectError::Collision { tick, partial }) => {
                    write(&out, emit_csv(&partial))?;
                    Err(anyhow!(
                        "teacher run collided at tick {tick}; kept {} samples in {}",
                        partial.len(),
                        out.display()
                    ))
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Relabel {
            input,
            out,
            window,
            min_alternations,
        } => {
            if window < 2 || min_alternations == 0 {
                bail!("window must be at least 2 and min-alternations at least 1");
            }
            let ds = load_dataset(&input)?;
            let eps = detect_oscillation(&ds.labels(), window, min_alternations);
            let (fixed, changed) = relabel(&ds, &eps);
            let out = out.unwrap_or_else(|| cfg.dir("data").join(format!("{}-relabeled.csv", file_stem(&input))));
            write(&out, emit_csv(&fixed))?;
            println!(
                "{} episodes, {changed} of {} labels changed, wrote {}",
                eps.len(),
                fixed.len(),
                out.display()
            );
            Ok(())
        }
        Cmd::Train {
            algo,
            data,
            model,
            seed,
        } => {
            let ds = load_dataset(&data)?;
            let mut learner = cfg.learner;
            if let Some(s) = seed {
                learner.seed = s;
            }
            let m = fit(algo, &ds, &learner)?;
            let out = model.unwrap_or_else(|| cfg.dir("models").join(format!("{algo}.json")));
            write(&out, m.to_json() + "\n")?;
            println!(
                "{algo}: training accuracy {:.2} on {} samples, wrote {}",
                accuracy(|s| m.predict(s), &ds),
                ds.len(),
                out.display()
            );
            Ok(())
        }
        Cmd::TrainPlanner { model } => {
            let plan = TrainingPlan {
                learner: cfg.learner,
                ..cfg.training.clone()
            };
            let nav = cfg.nav(plan.refine_ticks);
            let (m, rep) = train_planner(&plan, &cfg.robot, &nav)?;
            let out = model.unwrap_or_else(|| cfg.dir("models").join("planner.json"));
            write(&out, m.to_json() + "\n")?;
            println!(
                "{} samples, {} relabeled, {} refinement rounds, converged {}, wrote {}",
                rep.samples,
                rep.relabeled,
                rep.refine_rounds,
                rep.converged,
                out.display()
            );
            Ok(())
        }
        Cmd::Bench { data, reps, out_dir } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let ds = load_dataset(&data)?;
            let (train, test) = split(&ds, DEFAULT_TRAIN_FRACTION, cfg.split_seed)?;
            let mut rows = Vec::new();
            for algo in Algorithm::ALL {
                let r = benchmark_fit(algo, &train, &cfg.learner, reps)?;
                rows.push(BenchRow {
                    algorithm: algo,
                    train_acc: accuracy(|s| r.model.predict(s), &train),
                    test_acc: accuracy(|s| r.model.predict(s), &test),
                    fit_seconds: r.median_seconds,
                });
            }
            let (text, csv) = report_tables(&rows);
            let dir = out_dir.unwrap_or_else(|| cfg.dir("reports"));
            write(&dir.join("bench.txt"), &text)?;
            write(&dir.join("bench.csv"), &csv)?;
            print!("{text}");
            Ok(())
        }
        Cmd::Simulate {
            scenario,
            world,
            policy,
            model,
            seed,
            max_ticks,
            log,
        } => {
            let seed = seed.unwrap_or(cfg.seed);
            let (world, name) = match (scenario, &world) {
                (Some(k), _) => (build(k, seed), k.as_str().to_string()),
                (None, Some(p)) => (WorldSpec::load(p)?, file_stem(p)),
                (None, None) => resolve_world(None, &cfg, seed)?,
            };
            world.validate()?;
            let model = match (&model, policy) {
                (Some(p), _) => Some(Model::load(p).with_context(|| format!("loading {}", p.display()))?),
                (None, Policy::TwoTier) => bail!("two_tier needs --model"),
                (None, Policy::ReflexOnly) => None,
            };
            let ticks = max_ticks.unwrap_or_else(|| scenario.map_or(4000, ScenarioKind::max_ticks));
            let nav = cfg.nav(ticks);
            let (traj, metrics) = reactnav::run_episode(&world, &cfg.robot, policy, model.as_ref(), &nav, seed);
            let log = log.unwrap_or_else(|| cfg.dir("logs").join(format!("{name}-{policy}-{seed}.csv")));
            write(&log, traj.to_csv())?;
            let meta = SimMeta {
                scenario,
                policy,
                seed,
                robot: cfg.robot,
                nav,
                world,
                metrics,
            };
            write(&meta_path(&log), serde_json::to_string_pretty(&meta)? + "\n")?;
            print!("{}", meta.metrics);
            Ok(())
        }
        Cmd::Report { log } => {
            let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let traj = Trajectory::from_csv(&text)?;
            let mp = meta_path(&log);
            let meta_text = fs::read_to_string(&mp).with_context(|| format!("reading {}", mp.display()))?;
            let meta: SimMeta =
                serde_json::from_str(&meta_text).with_context(|| format!("parsing {}", mp.display()))?;
            let metrics = compute_metrics(&traj, &meta.world, &meta.robot, &meta.nav);
            print!("{metrics}");
            Ok(())
        }
    }
}

/// Error chain joined by `: `, skipping causes the previous message already
/// quotes (library errors often embed their source).
fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out += ": ";
        }
        out += &msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}
