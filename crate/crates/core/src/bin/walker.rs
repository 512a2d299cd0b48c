//! Command-line front end: `train`, `eval` and `export-traj`.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use walker_core::harness::{evaluate_dir, export_trajectory, EpisodeLog, ExperimentConfig, SuccessCriteria, TerrainSpec, Trainer};
use walker_core::rewards::TaskId;
use walker_core::scheduler::SchedulerKind;

#[derive(Parser)]
#[command(name = "walker", version, about = "Multi-task locomotion learning for modular legged robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; flags override the config file.
    Train(TrainArgs),
    /// Evaluate a training output directory.
    Eval {
        #[arg(long)]
        logs: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write an episode log as a columnar trajectory file.
    ExportTraj {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// TOML file with any of the experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled robot name or path to a robot file.
    #[arg(long)]
    robot: Option<String>,
    /// Comma-separated task names, e.g. `walk_forward,stand`.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<TaskId>>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    main_task: Option<TaskId>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `flat` or `pedestals:<h_max>`.
    #[arg(long)]
    terrain: Option<TerrainSpec>,
    /// Output directory; relative paths resolve against `$WALKER_OUT`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episode_steps: Option<usize>,
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    random_episodes: Option<usize>,
    #[arg(long)]
    learner_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    trajectory_every: Option<usize>,
}

fn build_config(a: TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident).+ = $value:expr) => {
            if let Some(v) = $value {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(robot = a.robot);
    set!(tasks = a.tasks);
    set!(scheduler = a.scheduler);
    set!(episodes = a.episodes);
    set!(seed = a.seed);
    set!(terrain = a.terrain);
    set!(episode_steps = a.episode_steps);
    set!(sequences = a.sequences);
    set!(random_episodes = a.random_episodes);
    set!(agent.learner_steps_per_episode = a.learner_steps);
    set!(agent.batch_size = a.batch_size);
    set!(checkpoint_every = a.checkpoint_every);
    set!(trajectory_every = a.trajectory_every);
    if a.main_task.is_some() {
        cfg.main_task = a.main_task;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = build_config(a)?;
    if cfg.out.is_none() {
        bail!("--out (or `out` in the config file) is required");
    }
    let episodes = cfg.episodes;
    let mut trainer = Trainer::new(cfg)?;
    eprintln!("writing to {}", trainer.output_dir().expect("output set").display());
    for _ in 0..episodes {
        let m = trainer.step()?;
        let sched: Vec<String> = m.schedule.iter().map(TaskId::to_string).collect();
        let returns: Vec<String> = m.sequence_returns.iter().map(|r| format!("{r:.2}")).collect();
        eprintln!(
            "episode {:>5}  [{}]  returns [{}]  critic {:.4}{}",
            m.episode,
            sched.join(", "),
            returns.join(", "),
            m.learner.critic_loss,
            m.truncated.as_deref().map(|t| format!("  truncated: {t}")).unwrap_or_default()
        );
    }
    print_evaluation(&trainer.finish()?, false)
}

fn print_evaluation(ev: &[walker_core::harness::TaskEvaluation], json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(ev)?);
        return Ok(());
    }
    println!("{:<16} {:>10} {:>10} {:>12} {:>12} {:>12}", "task", "episodes", "threshold", "crossed at", "measure", "reward");
    for e in ev {
        let crossed = match (e.insufficient_data, e.episodes_to_threshold) {
            (true, _) => "insufficient data".to_string(),
            (false, Some(ep)) => ep.to_string(),
            (false, None) => "-".to_string(),
        };
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "{:<16} {:>10} {:>10} {:>12} {:>12} {:>12}",
            e.task.to_string(),
            e.qualifying,
            e.threshold,
            crossed,
            fmt(e.final_measure),
            fmt(e.final_reward)
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => run_train(a),
        Command::Eval { logs, json } => print_evaluation(&evaluate_dir(&logs, &SuccessCriteria::default())?, json),
        Command::ExportTraj { log, out } => {
            let log = EpisodeLog::load(&log).with_context(|| format!("reading {}", log.display()))?;
            export_trajectory(&log, &out)?;
            Ok(())
        }
    }
}
