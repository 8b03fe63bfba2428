//! The commands behind the CLI, usable as a library.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use shieldnav::env::{Action, EnvConfig, EpisodeState};
use shieldnav::gnn::PolicyNet;
use shieldnav::graph::build_graph;
use shieldnav::ppo::{Trainer, UpdateRecord};
use shieldnav::reward::RewardVariant;
use shieldnav::safety::shielded_move;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::RunConfig;
use crate::eval::{evaluate, ActionMode, EvalRecord};
use crate::render::{ascii_frame, pgm};
use crate::report::{self, LabelledRecords, Summary, TRAIN_LOG_HEADER};
use crate::HarnessError;

/// Window and sampling cadence of the smoothed reward curve, in steps.
pub const REWARD_SMA_WINDOW: usize = 1000;

pub type Log<'a> = &'a mut dyn FnMut(&str);

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<UpdateRecord>,
    /// Per-step rewards collected by this invocation.
    pub step_rewards: Vec<f32>,
    pub final_checkpoint: PathBuf,
    pub final_steps: usize,
}

/// Trains `variant` under `cfg`, writing `train_log.csv`,
/// `reward_curve.csv`, periodic `ckpt_NNNNN.bin` and `final.bin` to
/// `out_dir`. With `resume` the counters, parameters and optimiser state are
/// restored and the log is appended to.
pub fn train(
    cfg: &RunConfig,
    variant: RewardVariant,
    out_dir: &Path,
    resume: Option<&Path>,
    log: Log,
) -> Result<TrainOutcome, HarnessError> {
    create_dir(out_dir)?;
    let network = cfg.network.to_network_config();
    let mut trainer = Trainer::new(
        &cfg.env.to_env_config(),
        &network,
        variant,
        cfg.reward.params(),
        &cfg.training.to_ppo_config(),
        cfg.run.seed,
    )?;
    if let Some(path) = resume {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.network != network {
            return Err(CheckpointError::Malformed(format!(
                "checkpoint network {:?} differs from configured {:?}",
                ckpt.network, network
            ))
            .into());
        }
        trainer.restore(ckpt.trainer_state()?)?;
        log(&format!("resumed at update {} ({} steps)", ckpt.update, ckpt.steps));
    }
    let start_steps = trainer.steps_done();

    let log_path = out_dir.join("train_log.csv");
    let append = resume.is_some() && log_path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .map_err(|e| io_err(&log_path, e))?;
    if !append {
        writeln!(file, "{TRAIN_LOG_HEADER}").map_err(|e| io_err(&log_path, e))?;
    }

    let every = cfg.run.checkpoint_every;
    let total = trainer.config().update_count();
    let mut records = Vec::new();
    while !trainer.is_finished() {
        let rec = trainer.train_update()?;
        writeln!(file, "{}", report::train_log_row(&rec))
            .and_then(|_| file.flush())
            .map_err(|e| io_err(&log_path, e))?;
        if every > 0 && rec.update % every == 0 {
            let path = out_dir.join(format!("ckpt_{:05}.bin", rec.update));
            Checkpoint::from_trainer(&trainer, network, variant).save(&path)?;
        }
        log(&format!(
            "[{}] update {}/{} steps {} mean_reward {:.4} policy_loss {:.4} value_loss {:.4}",
            variant, rec.update, total, rec.steps, rec.mean_reward, rec.policy_loss, rec.value_loss
        ));
        records.push(rec);
    }

    let final_checkpoint = out_dir.join("final.bin");
    Checkpoint::from_trainer(&trainer, network, variant).save(&final_checkpoint)?;
    let step_rewards = trainer.step_rewards().to_vec();
    report::write_file(
        &out_dir.join("reward_curve.csv"),
        &report::reward_curve_csv(&step_rewards, REWARD_SMA_WINDOW, REWARD_SMA_WINDOW, start_steps),
    )?;
    Ok(TrainOutcome {
        records,
        step_rewards,
        final_checkpoint,
        final_steps: trainer.steps_done(),
    })
}

/// `N` expands to seeds `N, N+1, …`; anything else is read as a file with
/// one seed per line (blank lines and `#` comments ignored).
pub fn resolve_seeds(spec: &str, envs: usize) -> Result<Vec<u64>, HarnessError> {
    if let Ok(base) = spec.trim().parse::<u64>() {
        return Ok((0..envs as u64).map(|i| base.wrapping_add(i)).collect());
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("--seeds {spec}: {e}")))?;
    let mut seeds = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let s = line
            .parse::<u64>()
            .map_err(|e| HarnessError::Config(format!("{spec}:{}: {e}", no + 1)))?;
        seeds.push(s);
    }
    if seeds.len() < envs {
        return Err(HarnessError::Config(format!(
            "{spec}: {} seeds listed, {envs} environments requested",
            seeds.len()
        )));
    }
    seeds.truncate(envs);
    Ok(seeds)
}

pub fn eval_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.eval.envs as u64).map(|i| cfg.eval.seed + i).collect()
}

pub fn eval_mode(cfg: &RunConfig) -> ActionMode {
    if cfg.eval.sample {
        ActionMode::Sample
    } else {
        ActionMode::Greedy
    }
}

/// Evaluates a checkpoint and writes the evaluation bundle to `out_dir`.
pub fn eval_checkpoint(
    ckpt: &Checkpoint,
    env: &EnvConfig,
    seeds: &[u64],
    n_steps: usize,
    mode: ActionMode,
    coverage_step: usize,
    out_dir: &Path,
) -> Result<Vec<EvalRecord>, HarnessError> {
    create_dir(out_dir)?;
    let policy = ckpt.policy_net();
    let records = evaluate(Some(&policy), env, seeds, n_steps, mode)?;
    let label = ckpt.variant.map_or("policy", |v| v.name());
    report::write_eval_bundle(
        out_dir,
        &[LabelledRecords {
            label,
            records: &records,
        }],
        coverage_step,
    )?;
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: RewardVariant,
    pub train: TrainOutcome,
    pub records: Vec<EvalRecord>,
}

/// Trains every variant with the same seed, evaluates each on the same
/// held-out environments and writes per-variant training output to
/// `out_dir/<VARIANT>/` and the comparison bundle to `out_dir`.
pub fn ablate(
    cfg: &RunConfig,
    variants: &[RewardVariant],
    out_dir: &Path,
    log: Log,
) -> Result<Vec<VariantResult>, HarnessError> {
    create_dir(out_dir)?;
    let seeds = eval_seeds(cfg);
    let env = cfg.env.to_env_config();
    let mut results = Vec::with_capacity(variants.len());
    for &variant in variants {
        let dir = out_dir.join(variant.name());
        let train = train(cfg, variant, &dir, None, log)?;
        let ckpt = Checkpoint::load(&train.final_checkpoint)?;
        let records = evaluate(Some(&ckpt.policy_net()), &env, &seeds, cfg.eval.steps, eval_mode(cfg))?;
        let s = report::summarize(&records, cfg.eval.coverage_at);
        log(&format!(
            "[{}] median coverage at {}: {:.4}, median intervention proportion {:.4}",
            variant, s.coverage_step, s.median_cov_at, s.median_intervention
        ));
        results.push(VariantResult {
            variant,
            train,
            records,
        });
    }
    let sets: Vec<LabelledRecords> = results
        .iter()
        .map(|r| LabelledRecords {
            label: r.variant.name(),
            records: &r.records,
        })
        .collect();
    report::write_eval_bundle(out_dir, &sets, cfg.eval.coverage_at)?;
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub height: usize,
    pub width: usize,
    pub n_obstacles: usize,
    pub summary: Summary,
}

/// Evaluates one policy over every (size, obstacle count) combination.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    policy: Option<&PolicyNet>,
    base: &EnvConfig,
    sizes: &[(usize, usize)],
    obstacles: &[usize],
    seeds: &[u64],
    n_steps: usize,
    mode: ActionMode,
    coverage_step: usize,
) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut out = Vec::new();
    for &(h, w) in sizes {
        for &n_o in obstacles {
            let env = EnvConfig {
                height: h,
                width: w,
                n_obstacles: n_o,
                ..base.clone()
            };
            env.validate()?;
            let records = evaluate(policy, &env, seeds, n_steps, mode)?;
            out.push(SweepPoint {
                height: h,
                width: w,
                n_obstacles: n_o,
                summary: report::summarize(&records, coverage_step),
            });
        }
    }
    Ok(out)
}

pub fn sweep_csv(label: &str, points: &[SweepPoint]) -> String {
    let mut s = String::from("label,h,w,n_o,envs,steps,median_cov_at,std_cov_at,median_intervention\n");
    for p in points {
        let m = &p.summary;
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6}\n",
            label, p.height, p.width, p.n_obstacles, m.envs, m.steps, m.median_cov_at, m.std_cov_at, m.median_intervention
        ));
    }
    s
}

/// Parses `30x30,50x50`.
pub fn parse_sizes(list: &str) -> Result<Vec<(usize, usize)>, HarnessError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (h, w) = item
                .split_once(['x', 'X'])
                .ok_or_else(|| HarnessError::Config(format!("--sizes: expected HxW, got {item}")))?;
            let p = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| HarnessError::Config(format!("--sizes {item}: {e}")))
            };
            Ok((p(h)?, p(w)?))
        })
        .collect()
}

pub fn parse_counts(list: &str) -> Result<Vec<usize>, HarnessError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| {
            v.parse::<usize>()
                .map_err(|e| HarnessError::Config(format!("--obstacles {v}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub frames: usize,
    pub final_rho: f64,
    pub solved: bool,
}

/// Steps one episode (greedy policy, or uniform random proposals without
/// one) until it is solved or `max_steps` is reached, writing
/// `frames.txt`, `map_initial.pgm` and `map_final.pgm`.
pub fn render_episode(
    policy: Option<&PolicyNet>,
    env: &EnvConfig,
    seed: u64,
    max_steps: usize,
    out_dir: &Path,
) -> Result<RenderSummary, HarnessError> {
    use rand::{Rng, SeedableRng};
    create_dir(out_dir)?;
    let cfg = EnvConfig {
        max_steps: max_steps.max(1),
        ..env.clone()
    };
    let mut episode = EpisodeState::new(&cfg, seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut frames = String::new();
    let push_frame = |ep: &EpisodeState, frames: &mut String| {
        frames.push_str(&format!("step {} rho {:.4}\n", ep.step_count(), ep.exploration_ratio()));
        frames.push_str(&ascii_frame(ep.agent_map(), ep.pos()));
        frames.push('\n');
    };
    push_frame(&episode, &mut frames);
    let initial = pgm(episode.agent_map(), episode.pos());
    let mut count = 1;
    while !episode.done() && episode.step_count() < max_steps {
        let proposal = match policy {
            Some(p) => {
                let dist = p.distribution(&build_graph(episode.agent_map(), episode.pos(), cfg.k));
                (0..Action::COUNT).fold(0, |b, i| if dist[i] > dist[b] { i } else { b })
            }
            None => rng.gen_range(0..Action::COUNT),
        };
        shielded_move(&mut episode, Action::ALL[proposal])?;
        push_frame(&episode, &mut frames);
        count += 1;
    }
    report::write_file(&out_dir.join("frames.txt"), &frames)?;
    let write_bin = |name: &str, bytes: &[u8]| {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    };
    write_bin("map_initial.pgm", &initial)?;
    write_bin("map_final.pgm", &pgm(episode.agent_map(), episode.pos()))?;
    Ok(RenderSummary {
        frames: count,
        final_rho: episode.exploration_ratio(),
        solved: episode.done(),
    })
}
