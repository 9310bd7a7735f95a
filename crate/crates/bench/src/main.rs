use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lmdp::checkpoint::default_budget;
use lmdp::coverage::{lmdp_coverage_with, mdp_coverage, EventMode, LmdpCoverageOptions};
use lmdp::exact::{checkpoint_marginal, trajectory_distribution, Guards, Scope};
use lmdp::io::{load_model, ClassDocument, ModelDocument};
use lmdp::lemmas::counter_example;
use lmdp::model::{LmdpModel, Shape};
use lmdp::omle::run_rng;
use lmdp::omle::theory::{theory_report, TheoryInputs};
use lmdp::policy::{MemorylessPolicy, Policy};
use lmdp::sample::sample_trajectory;
use lmdp_bench::experiment::output_dir;
use lmdp_bench::{
    emit_plot_data, gen_class, run_experiment, Algorithm, ExperimentConfig, GeneratorSpec, InstanceSource, RunOptions,
};
use serde_json::json;

/// Writes to standard output. A closed pipe ends the process quietly.
fn emit(args: std::fmt::Arguments) {
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("writing to standard output: {e}");
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

#[derive(Parser)]
#[command(name = "lmdp-bench", version, about = "Exact tools and experiments for latent MDPs")]
struct Cli {
    /// Maximum number of enumerated support entries.
    #[arg(long, global = true)]
    guard: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model or class file.
    Validate { path: PathBuf },
    /// Generate a model, or a class when `class_size > 1`.
    Gen(GenArgs),
    /// Sample episodes as JSON lines.
    Sample {
        model: PathBuf,
        #[arg(long, default_value = "uniform")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print an exact trajectory distribution or checkpoint marginal.
    Dist {
        model: PathBuf,
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// 1-based checkpoint times, comma-separated; whole trajectories when absent.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
    },
    /// Coverage of a target by a behavior (MDP) or by segmented bases (LMDP).
    Coverage {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        behavior: Option<String>,
        /// Base policies `ψ_0, …, ψ_d`, comma-separated.
        #[arg(long, value_delimiter = ',')]
        bases: Vec<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_enum, default_value_t = Events::Literal)]
        events: Events,
    },
    /// Run MDP-OMLE repetitions.
    OmleMdp(RunArgs),
    /// Run LMDP-OMLE repetitions.
    OmleLmdp(RunArgs),
    /// Run the inequality checks on seeded pairs.
    Lemmas(RunArgs),
    /// Build the single-latent coverage counter-example and print its record.
    Counterexample {
        /// Also write the model here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot tables for a results directory.
    Plotdata {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Theoretical sample sizes and thresholds for given problem sizes.
    ParamsCalculator {
        #[arg(long)]
        contexts: usize,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long)]
        class_size: f64,
        #[arg(long)]
        d: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Events {
    Literal,
    Reduced,
}

#[derive(Args)]
struct GenArgs {
    /// Take the generator from a config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    contexts: usize,
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long, default_value_t = 2)]
    rewards: usize,
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    #[arg(long, default_value_t = 1)]
    class_size: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record wall-clock times in run logs.
    #[arg(long)]
    timing: bool,
}

fn guards(cli_guard: Option<f64>) -> Guards {
    let mut g = Guards::default();
    if let Some(v) = cli_guard {
        g.support = v;
    }
    g
}

/// `uniform`, `det:a,a,…` for a deterministic `(t, s)` table, or a policy file.
fn parse_policy(arg: &str, shape: &Shape) -> Result<Policy> {
    let policy: Policy = if arg == "uniform" {
        MemorylessPolicy::uniform(shape.horizon, shape.states, shape.actions).into()
    } else if let Some(table) = arg.strip_prefix("det:") {
        let table: Vec<usize> = table
            .split(',')
            .map(|x| x.trim().parse().with_context(|| format!("bad action {x:?}")))
            .collect::<Result<_>>()?;
        MemorylessPolicy::deterministic(shape.horizon, shape.states, shape.actions, &table)?.into()
    } else {
        let text = std::fs::read_to_string(arg).with_context(|| format!("reading policy {arg}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing policy {arg}"))?
    };
    policy.check(shape)?;
    Ok(policy)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            out!("{text}");
            Ok(())
        }
    }
}

fn validate(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let results: Vec<(String, lmdp::error::Result<LmdpModel>)> = if text.contains("\"models\"") {
        let doc = ClassDocument::parse(&text)?;
        if doc.truth >= doc.models.len() {
            bail!("truth index {} outside a class of {}", doc.truth, doc.models.len());
        }
        doc.models
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("model {i}"), d.to_model()))
            .collect()
    } else {
        vec![("model".into(), ModelDocument::parse(&text)?.to_model())]
    };
    let mut ok = true;
    for (name, result) in results {
        match result {
            Ok(m) => {
                let s = m.shape();
                outln!(
                    "{name}: ok (M={}, S={}, A={}, H={}, |R|={})",
                    s.contexts,
                    s.states,
                    s.actions,
                    s.horizon,
                    s.rewards
                );
            }
            Err(e) => {
                ok = false;
                outln!("{name}: {e}");
            }
        }
    }
    Ok(ok)
}

fn generate(args: &GenArgs) -> Result<()> {
    let (spec, seed) = match &args.config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            let InstanceSource::Generate(spec) = config.instance else {
                bail!("{} does not describe a generator", path.display());
            };
            (spec, config.seed)
        }
        None => (
            GeneratorSpec {
                contexts: args.contexts,
                states: args.states,
                actions: args.actions,
                horizon: args.horizon,
                rewards: args.rewards,
                concentration: args.concentration,
                class_size: args.class_size,
                decoy_fraction: 0.25,
                decoy_mix: 1.0,
            },
            0,
        ),
    };
    let seed = args.seed.unwrap_or(seed);
    let class = gen_class(&spec, seed)?;
    let text = if class.len() == 1 {
        ModelDocument::from_model(class.true_model())?.to_text()
    } else {
        ClassDocument::from_models(class.models(), class.truth())?.to_text()
    };
    write_or_print(args.out.as_deref(), &text)
}

fn run(args: &RunArgs, algorithm: Algorithm, cli_guard: Option<f64>) -> Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.algorithm = algorithm;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(g) = cli_guard {
        config.guards.support = g;
    }
    let out = output_dir(args.out.as_deref(), &config);
    let summary = run_experiment(
        &config,
        Some(&out),
        RunOptions {
            jobs: args.jobs,
            timing: args.timing,
        },
    )?;
    outln!(
        "{}: {}/{} repetitions completed, results in {}",
        summary.algorithm,
        summary.completed,
        summary.reps,
        out.display()
    );
    if let Some(o) = &summary.omle {
        outln!(
            "mean gap {:.6}, max gap {:.6}, {} within {}, mean episodes {:.1}",
            o.mean_gap,
            o.max_gap,
            o.within_tolerance,
            o.gap_tolerance,
            o.mean_episodes
        );
    }
    for l in &summary.lemmas {
        outln!(
            "{}: {} checks, {} hold, {} vacuous, {} violations",
            l.lemma,
            l.tally.total,
            l.tally.holds,
            l.tally.vacuous,
            l.tally.violations
        );
    }
    Ok(summary.all_completed())
}

fn main_inner(cli: Cli) -> Result<bool> {
    let g = guards(cli.guard);
    match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Gen(args) => generate(&args).map(|_| true),
        Command::Sample {
            model,
            policy,
            episodes,
            seed,
        } => {
            let model = load_model(&model)?;
            let policy = parse_policy(&policy, &model.shape())?;
            let mut rng = run_rng(seed, 0);
            let support = model.reward_support();
            for _ in 0..episodes {
                let (traj, context) = sample_trajectory(&model, &policy, &mut rng)?;
                let steps: Vec<[u16; 3]> = traj.steps.iter().map(|s| [s.state, s.action, s.reward]).collect();
                outln!(
                    "{}",
                    json!({"context": context, "steps": steps, "return": traj.total_reward(support)})
                );
            }
            Ok(true)
        }
        Command::Dist {
            model,
            policy,
            checkpoints,
        } => {
            let model = load_model(&model)?;
            let policy = parse_policy(&policy, &model.shape())?;
            let dist = if checkpoints.is_empty() {
                trajectory_distribution(&model, &policy, &g)?
            } else {
                checkpoint_marginal(&model, &policy, &Scope::full_events(&checkpoints), &g)?
            };
            out!("{}", dist.to_text());
            Ok(true)
        }
        Command::Coverage {
            model,
            target,
            behavior,
            bases,
            d,
            events,
        } => {
            let model = load_model(&model)?;
            let shape = model.shape();
            let target = parse_policy(&target, &shape)?;
            let report = if bases.is_empty() {
                let Some(behavior) = behavior else {
                    bail!("give --behavior for MDP coverage or --bases for LMDP coverage");
                };
                mdp_coverage(&model, &parse_policy(&behavior, &shape)?, &target, &g)?
            } else {
                let bases: Vec<Policy> = bases.iter().map(|b| parse_policy(b, &shape)).collect::<Result<_>>()?;
                let d = d.unwrap_or_else(|| default_budget(shape.contexts));
                let options = LmdpCoverageOptions {
                    events: match events {
                        Events::Literal => EventMode::Literal,
                        Events::Reduced => EventMode::Reduced,
                    },
                    keep_table: false,
                };
                lmdp_coverage_with(&model, &bases, &target, d, options, &g)?
            };
            outln!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
        Command::OmleMdp(args) => run(&args, Algorithm::MdpOmle, cli.guard),
        Command::OmleLmdp(args) => run(&args, Algorithm::LmdpOmle, cli.guard),
        Command::Lemmas(args) => run(&args, Algorithm::LemmaSuite, cli.guard),
        Command::Counterexample { out } => {
            let (model, record) = counter_example()?;
            if let Some(path) = out {
                lmdp::io::save_model(&path, &model)?;
            }
            outln!("{}", serde_json::to_string_pretty(&record)?);
            Ok(record.passed)
        }
        Command::Plotdata { results, out } => {
            let out = out.unwrap_or_else(|| results.join("plots"));
            emit_plot_data(&results, &out)?;
            outln!("tables written to {}", out.display());
            Ok(true)
        }
        Command::ParamsCalculator {
            contexts,
            states,
            actions,
            horizon,
            epsilon,
            eta,
            class_size,
            d,
        } => {
            let report = theory_report(&TheoryInputs {
                contexts,
                states,
                actions,
                horizon,
                epsilon,
                eta,
                class_size,
                d,
            })?;
            outln!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
