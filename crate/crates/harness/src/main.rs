use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shieldnav_harness::checkpoint::Checkpoint;
use shieldnav_harness::config::{parse_variants, RunConfig};
use shieldnav_harness::eval::{evaluate, ActionMode};
use shieldnav_harness::pipeline::{self, resolve_seeds};
use shieldnav_harness::report::{self, LabelledRecords};
use shieldnav_harness::HarnessError;

#[derive(Parser)]
#[command(name = "shieldnav", version, about = "Safe graph-based exploration: train, evaluate, ablate, render")]
struct Cli {
    /// Suppress per-update progress lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one reward variant.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `[reward] variant`.
        #[arg(long)]
        variant: Option<String>,
        /// Override `[training] timesteps`.
        #[arg(long)]
        timesteps: Option<usize>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or a random policy) on held-out environments.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        envs: usize,
        #[arg(long)]
        steps: usize,
        /// First seed N (seeds N..N+envs) or a file with one seed per line.
        #[arg(long)]
        seeds: String,
        /// Environment geometry; defaults to the standard 50x50 arena.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        /// Sample actions instead of taking the argmax.
        #[arg(long)]
        sample: bool,
        /// Step at which the coverage distribution is reported.
        #[arg(long, default_value_t = 1000)]
        coverage_at: usize,
    },
    /// Train and evaluate several reward variants with shared seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. SGA,SGPE,SGD,SGE,FE.
        #[arg(long)]
        variants: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one policy across map sizes and obstacle counts.
    Sweep {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated HxW list; defaults to the configured size.
        #[arg(long)]
        sizes: Option<String>,
        /// Comma-separated obstacle counts; defaults to the configured count.
        #[arg(long)]
        obstacles: Option<String>,
        #[arg(long)]
        envs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Write ASCII frames and PGM maps of one episode.
    Render {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2500)]
        steps: usize,
        #[arg(long, default_value = "render")]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PolicyArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Uniform random proposals instead of a trained policy.
    #[arg(long)]
    random: bool,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, HarnessError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_policy(args: &PolicyArgs) -> Result<(Option<Checkpoint>, &'static str), HarnessError> {
    match &args.ckpt {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            let label = ckpt.variant.map_or("policy", |v| v.name());
            Ok((Some(ckpt), label))
        }
        None => Ok((None, "random")),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let quiet = cli.quiet;
    let mut log = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            variant,
            timesteps,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(v) = variant {
                cfg.reward.variant = v;
            }
            if let Some(t) = timesteps {
                cfg.training.timesteps = t;
            }
            cfg.validate().map_err(HarnessError::Config)?;
            let out = out.unwrap_or_else(|| cfg.run.out_dir.clone());
            let outcome = pipeline::train(&cfg, cfg.variant(), &out, resume.as_deref(), &mut log)?;
            let last = outcome.records.last();
            println!(
                "trained {} for {} steps ({} updates this run); final mean_reward {}; checkpoint {}",
                cfg.variant(),
                outcome.final_steps,
                outcome.records.len(),
                last.map_or("n/a".to_string(), |r| format!("{:.4}", r.mean_reward)),
                outcome.final_checkpoint.display()
            );
        }
        Command::Eval {
            policy,
            envs,
            steps,
            seeds,
            config,
            out,
            sample,
            coverage_at,
        } => {
            let cfg = load_config(config.as_deref())?;
            let seeds = resolve_seeds(&seeds, envs)?;
            if steps == 0 {
                return Err(HarnessError::Config("--steps must be positive".into()));
            }
            let (ckpt, label) = load_policy(&policy)?;
            let net = ckpt.as_ref().map(Checkpoint::policy_net);
            let mode = match (&net, sample) {
                (None, _) => ActionMode::Random,
                (Some(_), true) => ActionMode::Sample,
                (Some(_), false) => ActionMode::Greedy,
            };
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
            let records = evaluate(net.as_ref(), &cfg.env.to_env_config(), &seeds, steps, mode)?;
            let sets = [LabelledRecords {
                label,
                records: &records,
            }];
            report::write_eval_bundle(&out, &sets, coverage_at)?;
            let s = report::summarize(&records, coverage_at);
            println!(
                "{label}: {} envs, median coverage at {} = {:.4} (std {:.4}), median intervention proportion {:.4}, median steps to 95% {:.1}",
                s.envs, s.coverage_step, s.median_cov_at, s.std_cov_at, s.median_intervention, s.median_steps_to_95
            );
        }
        Command::Ablate { config, variants, out } => {
            let cfg = RunConfig::load(&config)?;
            let variants = parse_variants(&variants)?;
            let out = out.unwrap_or_else(|| cfg.run.out_dir.clone());
            let results = pipeline::ablate(&cfg, &variants, &out, &mut log)?;
            println!("variant  median_cov@{}  median_intervention", cfg.eval.coverage_at);
            for r in &results {
                let s = report::summarize(&r.records, cfg.eval.coverage_at);
                println!("{:<8} {:>14.4} {:>20.4}", r.variant.name(), s.median_cov_at, s.median_intervention);
            }
        }
        Command::Sweep {
            policy,
            config,
            sizes,
            obstacles,
            envs,
            steps,
            seeds,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let base = cfg.env.to_env_config();
            let sizes = match sizes {
                Some(s) => pipeline::parse_sizes(&s)?,
                None => vec![(base.height, base.width)],
            };
            let obstacles = match obstacles {
                Some(s) => pipeline::parse_counts(&s)?,
                None => vec![base.n_obstacles],
            };
            let envs = envs.unwrap_or(cfg.eval.envs);
            let steps = steps.unwrap_or(cfg.eval.steps);
            let seeds = match seeds {
                Some(s) => resolve_seeds(&s, envs)?,
                None => pipeline::eval_seeds(&RunConfig {
                    eval: shieldnav_harness::config::EvalSection { envs, ..cfg.eval.clone() },
                    ..cfg.clone()
                }),
            };
            let (ckpt, label) = load_policy(&policy)?;
            let net = ckpt.as_ref().map(Checkpoint::policy_net);
            let mode = if net.is_some() {
                pipeline::eval_mode(&cfg)
            } else {
                ActionMode::Random
            };
            let points = pipeline::sweep(
                net.as_ref(),
                &base,
                &sizes,
                &obstacles,
                &seeds,
                steps,
                mode,
                cfg.eval.coverage_at,
            )?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
            let csv = pipeline::sweep_csv(label, &points);
            report::write_file(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Render {
            seed,
            ckpt,
            config,
            steps,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let net = match ckpt {
                Some(p) => Some(Checkpoint::load(&p)?.policy_net()),
                None => None,
            };
            let s = pipeline::render_episode(net.as_ref(), &cfg.env.to_env_config(), seed, steps, &out)?;
            println!(
                "rendered {} frames to {}; final exploration ratio {:.4}{}",
                s.frames,
                out.display(),
                s.final_rho,
                if s.solved { " (solved)" } else { "" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
