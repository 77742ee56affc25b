use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nomamec_core::bla::{convergence_check, maq_rollout, run_bla_maq, write_arms_csv, write_convergence_csv, MaqHyper};
use nomamec_core::env::{stream_rng, CachePolicy, Scenario, ScenarioOptions};
use nomamec_core::harness::{default_forecast_hyper, run_plan, Algorithm, ExperimentPlan, Sweep};
use nomamec_core::lstm::{random_walk_series, train, write_loss_curve, Optimizer, TrainHyper, TrainMode};
use nomamec_core::{Error, FormulaMode, SystemConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ENV_PREFIX: &str = "NOMAMEC_";

#[derive(Parser)]
#[command(name = "nomamec", version, about = "Cache-aided NOMA-MEC simulator and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run algorithms over a sweep and seeds, writing results and aggregate CSVs.
    Simulate(SimulateArgs),
    /// Train the popularity forecaster on a random-walk series.
    Lstm(LstmArgs),
    /// Run the multi-agent BLA learner once and write its arm tables.
    Maq(MaqArgs),
    /// Two-armed bandit run of a single automaton.
    Convergence(ConvergenceArgs),
    /// Print the effective configuration.
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulaArg {
    Consistent,
    Printed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CacheArg {
    Energy,
    Popularity,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated: saq, bla-maq, full-local, full-offload, conventional-mec.
    #[arg(long, default_value = "saq", value_delimiter = ',')]
    algorithm: Vec<String>,
    /// `var=v1,v2,...` over task_input_bits, c_mec_hz, c_cache_slots, learning_rate; or `none`.
    #[arg(long, default_value = "none")]
    sweep: String,
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "consistent")]
    formula_mode: FormulaArg,
    /// Require offloaders' shares to cover every slice.
    #[arg(long)]
    strict_c4: bool,
    /// Keep cache flags out of the Q-learning state.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    table2_strict: bool,
    #[arg(long, value_enum, default_value = "energy")]
    cache_policy: CacheArg,
    /// Decide with one-step LSTM forecasts instead of true popularity.
    #[arg(long)]
    lstm: bool,
    /// Training episodes for the learners.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value = "default")]
    scenario: String,
    /// Write zero wall times so reruns are byte-identical.
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bptt,
    Rtrl,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
struct LstmArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    length: usize,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, value_enum, default_value = "bptt")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "sgd")]
    optimizer: OptimizerArg,
    /// Gradient norm clip for SGD.
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
    #[arg(long, conflicts_with = "clip")]
    no_clip: bool,
    /// Stop once the training loss falls below this value.
    #[arg(long)]
    goal: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MaqArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    /// Reward every agent by the drop in total energy.
    #[arg(long)]
    team_reward: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    r1: f64,
    #[arg(long)]
    r2: f64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &ConfigArgs) -> Result<SystemConfig> {
    let mut cfg = match &args.config {
        Some(path) => SystemConfig::from_file(path)?,
        None => SystemConfig::default(),
    };
    cfg.apply_env_overrides(ENV_PREFIX, std::env::vars())?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let mut plan = ExperimentPlan::new(args.scenario, &args.out);
    plan.base = cfg;
    plan.algorithms = args.algorithm.iter().map(|a| a.trim().parse()).collect::<Result<Vec<Algorithm>, Error>>()?;
    plan.sweep = Sweep::parse(&args.sweep)?;
    plan.seeds = args.seeds;
    plan.options = ScenarioOptions {
        cache_policy: match args.cache_policy {
            CacheArg::Energy => CachePolicy::ExpectedEnergy,
            CacheArg::Popularity => CachePolicy::Popularity,
        },
        ..ScenarioOptions::default()
    };
    plan.options.eval.formula = match args.formula_mode {
        FormulaArg::Consistent => FormulaMode::Consistent,
        FormulaArg::Printed => FormulaMode::AsPrinted,
    };
    plan.options.eval.strict_c4 = args.strict_c4;
    plan.saq.table2_strict = args.table2_strict;
    if let Some(n) = args.episodes {
        plan.saq.episodes = n;
        plan.maq.episodes = n;
    }
    if args.lstm {
        plan.lstm = Some(default_forecast_hyper());
    }
    plan.record_wall_time = !args.no_wall_time;
    let out = run_plan(&plan)?;
    for f in &out.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn lstm(args: LstmArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let data = random_walk_series(&cfg, args.length, args.step, &mut stream_rng(args.seed, 3))?;
    let hyper = TrainHyper {
        hidden_size: args.hidden,
        epochs: args.epochs,
        learning_rate: args.lr,
        mode: match args.mode {
            ModeArg::Bptt => TrainMode::Bptt,
            ModeArg::Rtrl => TrainMode::Rtrl,
            ModeArg::Hybrid => TrainMode::Hybrid,
        },
        optimizer: match args.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        },
        clip_norm: (!args.no_clip).then_some(args.clip),
        goal: args.goal,
        ..TrainHyper::default()
    };
    let (params, curve) = train(&data, &hyper, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    create_dir(&args.out)?;
    let loss_path = args.out.join("lstm_loss.csv");
    write_loss_curve(fs::File::create(&loss_path)?, &curve)?;
    let weights_path = args.out.join("lstm_weights.bin");
    params.save(&weights_path)?;
    println!("{}", loss_path.display());
    println!("{}", weights_path.display());
    Ok(())
}

fn maq(args: MaqArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = cfg.rng_seed;
    let scenario = Scenario::new(cfg)?;
    let hyper = MaqHyper { episodes: args.episodes, team_reward: args.team_reward, ..MaqHyper::default() };
    let out = run_bla_maq(&scenario, &hyper, &mut stream_rng(seed, 16 + args.seed))?;
    let rollout = maq_rollout(&scenario, &out)?;
    create_dir(&args.out)?;
    let arms = args.out.join("arms.csv");
    write_arms_csv(fs::File::create(&arms)?, &out.agents)?;
    println!("{}", arms.display());
    println!("mean energy per slot: {:.6} J", rollout.iter().sum::<f64>() / rollout.len() as f64);
    Ok(())
}

fn convergence(args: ConvergenceArgs) -> Result<()> {
    let (traj, _) = convergence_check(args.r1, args.r2, args.steps, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_convergence_csv(fs::File::create(&args.out)?, &traj)?;
    println!("{}", args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_config() => 2,
        Some(e) if e.is_numeric() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Lstm(a) => lstm(a),
        Command::Maq(a) => maq(a),
        Command::Convergence(a) => convergence(a),
        Command::Config(a) => load_config(&a).map(|c| print!("{}", c.to_kv_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
