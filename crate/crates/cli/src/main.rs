//! `nes`: train, evaluate and sweep the energy-saving controller.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nes_core::dqn::checkpoint;
use nes_core::env::{evaluate_state, Env, EnvAction};
use nes_core::harness::{
    self, evaluate_all, rng_stream, run_sweep, run_training, write_outputs, write_training,
    ExperimentConfig, Output, SweepSpec,
};
use nes_core::radio::PathlossMode;
use nes_core::Error;

#[derive(Parser)]
#[command(name = "nes", version, about = "Network energy-saving tilt/power controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training iterations per run.
    #[arg(long)]
    iterations: Option<usize>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    #[arg(long, value_name = "literal|single")]
    pathloss_mode: Option<PathlossMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller; writes training.csv and checkpoint.bin.
    Train(Common),
    /// Evaluate a checkpoint against the random and max baselines.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate across MU counts; writes sweep.csv.
    SweepMus(Common),
    /// Train and evaluate across GBS-MU distance bands; writes sweep.csv.
    SweepDistance(Common),
    /// Compare the greedy action on a frozen single-step instance with the
    /// exhaustive best action.
    OracleCheck(Common),
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Json(_) | Error::InvalidScenario(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", p.display())),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(n) = c.iterations {
        cfg.iterations = n;
    }
    if let Some(m) = c.pathloss_mode {
        cfg.channel.pathloss_mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let run = run_training(&cfg)?;
    let dir = &cfg.output_dir;
    write_training(&run.log, dir, c.svg)?;
    checkpoint::save(&run.agent.online, dir.join("checkpoint.bin"))?;
    let tail = run.log.rows.len().min(1000);
    let mean = run.log.rewards().skip(run.log.rows.len() - tail).sum::<f64>() / tail.max(1) as f64;
    println!(
        "trained {} iterations; mean reward over last {tail}: {mean:.4}; outputs in {}",
        cfg.iterations,
        dir.display()
    );
    Ok(())
}

fn eval(c: &Common, ckpt: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let path = ckpt.map_or_else(|| cfg.output_dir.join("checkpoint.bin"), Path::to_path_buf);
    let net = checkpoint::load(&path)?;
    let scn = harness::generate_scenario(&cfg, &mut rng_stream(cfg.seed, 1))?;
    let expected = [2 * scn.sector_count(), scn.action_count()];
    if [net.input_size(), net.output_size()] != expected {
        return Err(Failure::Config(format!(
            "checkpoint shape {:?} does not fit the scenario ({expected:?})",
            [net.input_size(), net.output_size()]
        )));
    }
    let summaries = evaluate_all(&net, &scn, cfg.eval_episodes, cfg.seed)?;
    for s in &summaries {
        println!(
            "{:>6}: mean reward {:.4}, per MU {:.4}, served {:.3}",
            s.policy, s.mean_reward, s.mean_reward_per_mu, s.served_fraction
        );
    }
    write_outputs(Output::Eval(&summaries), &cfg.output_dir, "eval", false)?;
    Ok(())
}

fn sweep(c: &Common, distance: bool) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let spec = if distance {
        SweepSpec::distance(&cfg.distance_grid)
    } else {
        SweepSpec::mu_count(&cfg.mu_grid)
    };
    let rows = run_sweep(&spec, &cfg)?;
    for r in &rows {
        println!(
            "{}={} {:>6}: mean reward {:.4}",
            r.kind.label(),
            r.value,
            r.summary.policy,
            r.summary.mean_reward
        );
    }
    write_outputs(Output::Sweep(&rows), &cfg.output_dir, "sweep", c.svg)?;
    Ok(())
}

/// Frozen single-step instance: the learner sees one fixed state, so the
/// exhaustive maximum over all actions bounds what it can reach.
fn oracle_check(c: &Common) -> Result<(), Failure> {
    let mut cfg = load_config(c)?;
    cfg.freeze_users = true;
    cfg.horizon = 1;
    let run = run_training(&cfg)?;
    let mut env = Env::new(run.scenario.clone())?;
    let state = env.reset(&mut rng_stream(cfg.seed, 9))?.clone();
    let scn = &env.scenario;
    let mut best = (0usize, f64::NEG_INFINITY);
    for a in 0..scn.action_count() {
        let r = nes_core::env::step(&state, EnvAction(a), scn)?.reward;
        if r > best.1 {
            best = (a, r);
        }
    }
    let chosen = run.agent.greedy(&env.features())?;
    let got = nes_core::env::step(&state, EnvAction(chosen), scn)?.reward;
    let (initial, _, _) = evaluate_state(&state, scn);
    let ratio = if best.1 > 0.0 { got / best.1 } else { 1.0 };
    println!("initial reward {initial:.4}");
    println!("exhaustive best action {} reward {:.4}", best.0, best.1);
    println!("greedy action {chosen} reward {got:.4} ({:.2}% of best)", 100.0 * ratio);
    if ratio >= 0.95 {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Runtime("greedy action is more than 5% below the exhaustive optimum".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::Eval { common, checkpoint } => eval(common, checkpoint.as_deref()),
        Command::SweepMus(c) => sweep(c, false),
        Command::SweepDistance(c) => sweep(c, true),
        Command::OracleCheck(c) => oracle_check(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
