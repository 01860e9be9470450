use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use strider_core::ablation::{self, critic_ablation, rnd_ablation};
use strider_core::config::RunConfig;
use strider_core::motion::generate_walk;
use strider_core::nn::Checkpoint;
use strider_core::runtime::{evaluate, sweep, sweep_csv, ActionWeights, Disturbance, SweepKind};
use strider_core::sim::RobotModel;
use strider_core::train::{load_assets, policy_from_checkpoint, train, MetricsRow, CONFIG_FILE};

#[derive(Parser)]
#[command(name = "strider", version, about = "Train and evaluate residual walking policies for a planar biped")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, checkpoints and a config snapshot.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print progress every this many updates (0 = silent).
        #[arg(long, default_value_t = 10)]
        log_every: usize,
    },
    /// Evaluate a checkpoint, optionally across a perturbation sweep.
    Eval(EvalArgs),
    /// Run an ablation experiment over several seeds.
    Ablate(AblateArgs),
    /// Write a synthetic walking reference motion.
    GenMotion {
        #[command(flatten)]
        config: ConfigArgs,
        /// Destination file.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the fully resolved configuration.
    PrintConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// `key=value` override, e.g. `train.lr=3e-4` or `critic=scalar`. Repeatable.
    #[arg(long = "override", short = 'O', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "open_loop")]
    checkpoint: Option<PathBuf>,
    /// Replay the reference with zero residual instead of a policy.
    #[arg(long, conflicts_with = "checkpoint")]
    open_loop: bool,
    #[command(flatten)]
    config: ConfigArgs,
    /// Action weights: a preset (normal, left-shift, right-shift, arm-swing) or `w1,w2,w3`.
    #[arg(short, long)]
    weights: Option<String>,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbation sweep: gain, mass, offset or push.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated sweep values; the sweep's default grid when omitted.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    values: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    /// Distributional versus scalar critic.
    Critic,
    /// Simple randomization versus none, followed by robustness sweeps.
    Rnd,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Sweeps evaluated by the rnd experiment.
    #[arg(long, value_delimiter = ',', default_values_t = ["gain".to_string(), "offset".to_string(), "mass".to_string(), "push".to_string()])]
    sweeps: Vec<String>,
    /// Evaluation episodes per sweep point.
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

/// Problems with arguments or configuration, reported with exit code 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<Usage>() {
        return 1;
    }
    match err.downcast_ref::<strider_core::Error>() {
        Some(strider_core::Error::Config { .. } | strider_core::Error::Parse { .. }) => 1,
        _ => 2,
    }
}

fn load_config(args: &ConfigArgs, fallback: Option<&Path>) -> Result<RunConfig> {
    let base = match args.config.as_deref().or(fallback) {
        Some(path) => {
            if !path.exists() {
                return Err(usage(format!("config file not found: {}", path.display())));
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    Ok(base.apply_overrides(&args.overrides)?)
}

fn output_dir(cfg: &mut RunConfig, flag: &Option<PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        cfg.output_dir = dir.clone();
    }
    cfg.resolved_output_dir()
}

fn log_row(every: usize, label: &str, row: &MetricsRow) {
    if every > 0 && row.update % every == 0 {
        eprintln!(
            "{label}update {:5}  steps {:9}  ep_len {:7.1}  reward {:8.3}  mimic {:.3}  kl {:.4}",
            row.update, row.steps, row.mean_episode_length, row.reward.total, row.reward.mimic, row.stats.approx_kl
        );
    }
}

fn cmd_train(config: &ConfigArgs, output: &Option<PathBuf>, log_every: usize) -> Result<()> {
    let mut cfg = load_config(config, None)?;
    let dir = output_dir(&mut cfg, output);
    let out = train(&cfg, Some(&dir), |row| log_row(log_every, "", row))?;
    let last = out.rows.last();
    println!(
        "trained {} updates, {} steps; final mean episode length {:.1}; output in {}",
        out.rows.len(),
        last.map_or(0, |r| r.steps),
        last.map_or(0.0, |r| r.mean_episode_length),
        dir.display()
    );
    Ok(())
}

/// Config snapshot written by `train` next to a checkpoint, if any.
fn snapshot_near(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint
        .ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join(CONFIG_FILE))
        .find(|p| p.exists())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let policy = match &args.checkpoint {
        Some(path) => {
            if !path.exists() {
                return Err(usage(format!("checkpoint not found: {}", path.display())));
            }
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Some(policy_from_checkpoint(&ck)?)
        }
        None => None,
    };
    let fallback = args.checkpoint.as_deref().and_then(snapshot_near);
    let mut cfg = load_config(&args.config, fallback.as_deref())?;
    if let Some(w) = &args.weights {
        cfg.env.weights = ActionWeights::parse(w)?;
    }
    let (model, motion) = load_assets(&cfg)?;
    let motion = Arc::new(motion);

    let text = match &args.sweep {
        Some(name) => {
            let kind: SweepKind = name.parse()?;
            let values = if args.values.is_empty() { kind.default_values() } else { args.values.clone() };
            let points = sweep(policy.as_ref(), &model, &motion, &cfg.env, kind, &values, args.episodes, args.seed)?;
            match args.format {
                Format::Csv => sweep_csv(&points),
                Format::Json => serde_json::to_string_pretty(&points)? + "\n",
            }
        }
        None => {
            let report = evaluate(policy.as_ref(), &model, &motion, &cfg.env, Disturbance::default(), args.episodes, args.seed)?;
            match args.format {
                Format::Csv => format!(
                    "weights,episodes,success_rate,mean_length,mean_mimic,mean_tracking_error\n\"{}\",{},{},{},{},{}\n",
                    cfg.env.weights.0.map(|w| w.to_string()).join(","),
                    report.episodes,
                    report.success_rate,
                    report.mean_length,
                    report.mean_mimic,
                    report.mean_tracking_error
                ),
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
            }
        }
    };
    match &args.output {
        Some(path) => ablation::write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    if args.seeds.is_empty() {
        return Err(usage("at least one seed is required"));
    }
    let mut cfg = load_config(&args.config, None)?;
    let dir = output_dir(&mut cfg, &args.output);
    let log = |variant: &str, seed: u64, row: &MetricsRow| log_row(args.log_every, &format!("[{variant} seed {seed}] "), row);
    match args.experiment {
        Experiment::Critic => {
            let curves = critic_ablation(&cfg, &args.seeds, Some(&dir), log)?;
            ablation::write_file(&dir.join("curves.csv"), &ablation::curves_csv(&curves))?;
            ablation::write_file(&dir.join("summary.csv"), &ablation::summary_csv(&curves))?;
            let threshold = 0.5 * cfg.env.max_steps as f64;
            for c in &curves {
                match c.samples_to_threshold(threshold, 1) {
                    Some(s) => println!("{} seed {}: episode length {threshold} reached after {s} steps", c.variant, c.seed),
                    None => println!("{} seed {}: episode length {threshold} not reached", c.variant, c.seed),
                }
            }
        }
        Experiment::Rnd => {
            let sweeps = args
                .sweeps
                .iter()
                .map(|s| s.parse::<SweepKind>().map(|k| (k, k.default_values())))
                .collect::<strider_core::Result<Vec<_>>>()?;
            let results = rnd_ablation(&cfg, &args.seeds, &sweeps, args.episodes, Some(&dir), log)?;
            ablation::write_file(&dir.join("robustness.csv"), &ablation::robustness_csv(&results))?;
        }
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn cmd_gen_motion(config: &ConfigArgs, output: &Path) -> Result<()> {
    let cfg = load_config(config, None)?;
    let model = match &cfg.model {
        Some(p) => RobotModel::load(p)?,
        None => RobotModel::planar_walker(),
    };
    let motion = generate_walk(&model, &cfg.gait)?;
    motion.validate_against(&model)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    motion.save(output)?;
    println!(
        "{} frames at {} fps, cycle [{}, {}) written to {}",
        motion.len(),
        motion.fps,
        motion.cycle_start,
        motion.cycle_end,
        output.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config, output, log_every } => cmd_train(config, output, *log_every),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::GenMotion { config, output } => cmd_gen_motion(config, output),
        Command::PrintConfig { config } => {
            print!("{}", load_config(config, None)?.to_toml_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
