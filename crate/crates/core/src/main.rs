use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mher::envs::EnvKind;
use mher::harness::metrics::{read_relabel_dump, RelabelDump};
use mher::harness::{aggregate_files, run, Algo, AggregateStats, RunConfig};
use mher::replay::RelabelMode;
use mher::{Error, Result};

#[derive(Parser)]
#[command(name = "mher", version, about = "Multi-goal RL with model-based hindsight relabeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write metrics, relabel dumps and a checkpoint.
    Train(TrainArgs),
    /// Median and quartiles of success rate across runs.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an aggregate CSV as an SVG learning curve.
    Plot {
        #[arg(long)]
        aggregate: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a run's relabeled goals.
    DumpGoals {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "n-steps")]
    n_steps: Option<usize>,
    #[arg(long)]
    relabel: Option<RelabelMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "no-target-clip")]
    no_target_clip: bool,
    #[arg(long = "no-obs-norm")]
    no_obs_norm: bool,
    /// JSON file mirroring the run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::new(
                self.env.unwrap_or(EnvKind::Point2DLarge),
                self.algo.unwrap_or(Algo::Mher),
            ),
        };
        if let Some(env) = self.env {
            cfg.env = env;
        }
        if let Some(algo) = self.algo {
            if algo != cfg.algo || self.config.is_none() {
                let defaults = algo.agent_defaults();
                cfg.agent.relabel_mode = defaults.relabel_mode;
                cfg.agent.alpha = defaults.alpha;
                cfg.agent.p_relabel = defaults.p_relabel;
            }
            cfg.algo = algo;
        }
        if let Some(alpha) = self.alpha {
            cfg.agent.alpha = alpha;
        }
        if let Some(n) = self.n_steps {
            cfg.agent.n_mbr_steps = n;
        }
        if let Some(mode) = self.relabel {
            cfg.agent.relabel_mode = mode;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if self.no_target_clip {
            cfg.agent.target_clip = false;
        }
        if self.no_obs_norm {
            cfg.agent.normalize_obs = false;
        }
        cfg.out = Some(self.out);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let output = run(&cfg)?;
            if let Some(last) = output.metrics.last() {
                println!(
                    "{} {} seed {}: epoch {} success {:.2} final distance {:.3}",
                    cfg.algo, cfg.env, cfg.seed, last.epoch, last.success_rate, last.mean_final_distance
                );
            }
        }
        Command::Aggregate { runs, out } => {
            let stats = aggregate_files(&runs)?;
            stats.write_csv(&out)?;
            println!("aggregated {} runs into {}", runs.len(), out.display());
        }
        Command::Plot { aggregate, out } => {
            let stats = AggregateStats::read_csv(&aggregate)?;
            let title = aggregate
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            fs::write(&out, stats.to_svg(&title)).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        }
        Command::DumpGoals { run, out } => {
            let source = if run.is_dir() { run.join("relabel_goals.csv") } else { run };
            let (goal_dim, records) = read_relabel_dump(&source)?;
            let mut dump = RelabelDump::create(&out, goal_dim)?;
            dump.append(&records)?;
            println!("{} relabeled goals written to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
