//! Acceptance suite. Each criterion is one test that prints a single
//! `PASS`/`FAIL` line to stderr before asserting.
//!
//! Criteria 9 to 11 share one desk-scale ablation (30x30 arenas, 15
//! obstacles, 1e5 timesteps per variant), which takes tens of minutes on
//! one core. Its output is kept under the cargo target tmp directory.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldnav::autodiff::{NdArray, ParamStore, Tape};
use shieldnav::env::{Action, EnvConfig, EpisodeState};
use shieldnav::gnn::{bind_params, init_params, GatLayer, NetworkConfig};
use shieldnav::graph::{build_graph, count_cells, detect_frontiers, neighborhood_stats, CellKind};
use shieldnav::ppo::{compute_gae, moving_average, RolloutBuffer, Transition};
use shieldnav::reward::{compute_reward, RewardParams, RewardVariant, StepContext};
use shieldnav::safety::{filter_action, shielded_move, FeasibleActionSet};
use shieldnav_harness::checkpoint::Checkpoint;
use shieldnav_harness::config::RunConfig;
use shieldnav_harness::eval::{evaluate, median, ActionMode, EvalRecord};
use shieldnav_harness::pipeline::{self, SweepPoint, VariantResult};
use shieldnav_harness::report::summarize;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {criterion:>2}: {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn info(criterion: u32, detail: &str) {
    let _ = writeln!(std::io::stderr(), "     criterion {criterion:>2}: {detail}");
}

fn out_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

#[test]
fn criterion_01_zero_collisions_under_random_proposals() {
    let start = Instant::now();
    let config = EnvConfig::default();
    let mut errors = 0usize;
    let mut steps = 0usize;
    let mut interventions = 0usize;
    for env in 0..100u64 {
        let mut ep = EpisodeState::new(&config, 50_000 + env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(env);
        for _ in 0..1000 {
            match shielded_move(&mut ep, Action::ALL[rng.gen_range(0..Action::COUNT)]) {
                Ok(s) => interventions += usize::from(s.intervened),
                Err(_) => errors += 1,
            }
            steps += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        errors == 0 && secs < 120.0,
        &format!("{steps} filtered steps, {errors} tripwire errors, {interventions} interventions, {secs:.1} s"),
    );
}

#[test]
fn criterion_02_filter_matches_exhaustive_oracle() {
    let mut agree = 0;
    let mut total = 0;
    for proposed in Action::ALL {
        for bits in 0u16..256 {
            let mut mask = 0u16;
            for (b, i) in (0..9).filter(|i| *i != Action::NULL_INDEX).enumerate() {
                if bits & (1 << b) != 0 {
                    mask |= 1 << i;
                }
            }
            let set = FeasibleActionSet::from_mask(mask);
            let (executed, intervened) = filter_action(proposed, set);
            let expected = oracles::filter(proposed, &oracles::mask_to_flags(set));
            total += 1;
            if executed == expected && intervened == (expected != proposed) {
                agree += 1;
            }
        }
    }
    verdict(2, agree == total && total == 9 * 256, &format!("{agree}/{total} cases agree"));
}

fn partial_maps(n: u64) -> impl Iterator<Item = (u64, shieldnav::env::OccupancyGrid, shieldnav::env::Cell)> {
    let config = EnvConfig::default();
    (0..n).map(move |i| {
        let (map, pos) = oracles::random_partial_map(&config, 70_000 + i, (i * 13 % 400) as usize);
        (i, map, pos)
    })
}

#[test]
fn criterion_03_frontiers_match_definition() {
    let mut agree = 0;
    let mut frontiers = 0;
    for (_, map, _) in partial_maps(200) {
        let expected = oracles::frontiers(&map);
        frontiers += expected.len();
        if detect_frontiers(&map) == expected {
            agree += 1;
        }
    }
    verdict(3, agree == 200, &format!("{agree}/200 maps agree ({frontiers} frontier cells in total)"));
}

#[test]
fn criterion_04_window_statistics_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kinds = [CellKind::Traversable, CellKind::Unknown, CellKind::NonTraversable, CellKind::Frontier];
    let mut agree = 0;
    let mut in_unit = true;
    for (i, map, pos) in partial_maps(200) {
        let k = rng.gen_range(0..=3usize);
        let cell = if i % 3 == 0 {
            pos
        } else {
            shieldnav::env::Cell::new(rng.gen_range(-3..53), rng.gen_range(-3..53))
        };
        let expected = oracles::gamma(&map, cell, k);
        let area = ((2 * k + 1) * (2 * k + 1)) as f32;
        let counts_ok = kinds.iter().zip(expected).all(|(kind, e)| count_cells(&map, cell, k, *kind) == e);
        let h = neighborhood_stats(&map, cell, k);
        let h_ok = h.iter().zip(expected).all(|(v, e)| *v == e as f32 / area);
        in_unit &= h.iter().all(|v| (0.0..=1.0).contains(v));
        if counts_ok && h_ok {
            agree += 1;
        }
    }
    verdict(
        4,
        agree == 200 && in_unit,
        &format!("{agree}/200 (map, cell, k) triples agree; all h in [0, 1]: {in_unit}"),
    );
}

#[test]
fn criterion_05_gatv2_forward_gradients_and_attention() {
    use oracles::gat::*;

    // Hand-worked two-node case: scores 5 and 6 at node 1.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let layer = GatLayer::new(&mut store, "t", 1, 1, 1, false, &mut rng);
    set_scalar_params(&mut store, &[1.0, 2.0, 1.0, 1.0]);
    let batch = manual_batch(vec![vec![1.0], vec![2.0]], &[(0, 1, 1.0)]);
    let (out, alpha) = run_layer(&store, &layer, &batch);
    let a0 = 1.0 / (1.0 + std::f64::consts::E);
    let hand = [
        (out[0] as f64 - 2.0).abs(),
        (out[1] as f64 - (2.0 * a0 + 4.0 * (1.0 - a0))).abs(),
        (alpha[0] as f64 - a0).abs(),
        (alpha[2] as f64 - (1.0 - a0)).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    // Five-node graph through a two-layer stack against central differences.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let l1 = GatLayer::new(&mut store, "l1", 8, 16, 4, true, &mut rng);
    let l2 = GatLayer::new(&mut store, "l2", 64, 3, 1, false, &mut rng);
    let batch = five_node_batch();
    let coef: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, &store, true);
    let x = tape.constant(batch.features.clone());
    let w = tape.constant(batch.edge_weight.clone());
    let h1 = l1.forward(&mut tape, &bound, x, &batch, w).unwrap();
    let h2 = l2.forward(&mut tape, &bound, h1.embeddings, &batch, w).unwrap();
    let c = tape.constant(NdArray::from_vec(5, 3, coef.iter().map(|v| *v as f32).collect()).unwrap());
    let prod = tape.mul(h2.embeddings, c).unwrap();
    let loss = tape.sum(prod);
    let mut grads = tape.backward(loss).unwrap();
    let g = RefGraph::from_batch(&batch);
    let p = to_f64(&store);
    let numeric = finite_differences(&p, |p| {
        let a = ref_layer(p, "l1", &g, &g.x, true);
        let b = ref_layer(p, "l2", &g, &a, false);
        b.iter().flatten().zip(&coef).map(|(u, v)| u * v).sum::<f64>()
    });
    let mut worst_rel = 0.0f64;
    let mut checked = 0;
    for (k, var) in bound.iter().enumerate() {
        let analytic = grads.take_or_zeros(*var);
        for (i, n) in numeric[k].iter().enumerate() {
            worst_rel = worst_rel.max(rel_error(analytic.data()[i], *n));
            checked += 1;
        }
    }
    let mut worst_sum = 0.0f32;
    for att in h1.attention.iter().chain(&h2.attention) {
        let alpha = tape.value(*att);
        let mut sums = [0.0f32; 5];
        for (e, d) in batch.dst.iter().enumerate() {
            sums[*d] += alpha.at(e, 0);
        }
        for s in sums {
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    verdict(
        5,
        hand < 1e-6 && worst_rel < 1e-3 && worst_sum < 1e-6,
        &format!(
            "hand-worked error {hand:.2e}; {checked} gradients, worst relative error {worst_rel:.2e}; \
             worst attention row-sum error {worst_sum:.2e}"
        ),
    );
}

#[test]
fn criterion_06_distribution_and_permutation_invariance() {
    let (policy, critic) = init_params(6, &NetworkConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_sum, mut worst_p, mut worst_v) = (0.0f32, 0.0f32, 0.0f32);
    let mut graphs = 0;
    for (_, map, pos) in partial_maps(40) {
        let g = build_graph(&map, pos, 3);
        let shuffled = oracles::permute_frontiers(&g, &mut rng);
        let p: [f32; Action::COUNT] = policy.distribution(&g);
        let q = policy.distribution(&shuffled);
        worst_sum = worst_sum.max((p.iter().sum::<f32>() - 1.0).abs());
        for (a, b) in p.iter().zip(&q) {
            worst_p = worst_p.max((a - b).abs());
        }
        worst_v = worst_v.max((critic.value(&g) - critic.value(&shuffled)).abs());
        graphs += 1;
    }
    verdict(
        6,
        worst_sum <= 1e-6 && worst_p <= 1e-6 && worst_v <= 1e-6,
        &format!(
            "{graphs} graphs: |sum p - 1| <= {worst_sum:.1e}, policy drift {worst_p:.1e}, critic drift {worst_v:.1e}"
        ),
    );
}

#[test]
fn criterion_07_gae_matches_backward_recursion() {
    let empty = shieldnav::graph::ExplorationGraph {
        nodes: vec![],
        edges: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut boundaries = 0;
    for _ in 0..200 {
        let steps: Vec<Transition> = (0..64)
            .map(|_| {
                let terminated = rng.gen_bool(0.05);
                let truncated = !terminated && rng.gen_bool(0.05);
                Transition {
                    graph: empty.clone(),
                    action: 0,
                    log_prob: 0.0,
                    value: rng.gen_range(-1.0..1.0),
                    reward: rng.gen_range(-1.0..1.0),
                    terminated,
                    truncated,
                    truncation_value: if truncated { rng.gen_range(-1.0..1.0) } else { 0.0 },
                }
            })
            .collect();
        boundaries += steps.iter().filter(|s| s.terminated || s.truncated).count();
        let buffer = RolloutBuffer {
            steps,
            bootstrap_value: rng.gen_range(-1.0..1.0),
        };
        let (adv, _) = compute_gae(&buffer, 0.99, 0.95);
        let f = |g: fn(&Transition) -> f64| buffer.steps.iter().map(g).collect::<Vec<f64>>();
        let expected = oracles::gae(
            &f(|s| s.reward as f64),
            &f(|s| s.value as f64),
            &buffer.steps.iter().map(|s| s.terminated).collect::<Vec<_>>(),
            &buffer.steps.iter().map(|s| s.truncated).collect::<Vec<_>>(),
            &f(|s| s.truncation_value as f64),
            buffer.bootstrap_value as f64,
            0.99f32 as f64,
            0.95f32 as f64,
        );
        for (a, e) in adv.iter().zip(&expected) {
            worst = worst.max((*a as f64 - e).abs());
        }
    }
    verdict(
        7,
        worst <= 1e-6,
        &format!("200 buffers x 64 steps, {boundaries} episode boundaries, worst |error| {worst:.2e}"),
    );
}

#[test]
fn criterion_08_reward_table() {
    let p = RewardParams::default();
    let base = StepContext {
        rho: 0.5,
        rho_star: 0.98,
        frontiers_prev: 4,
        frontiers_curr: 4,
        ..StepContext::default()
    };
    let examples: [(&str, StepContext); 5] = [
        ("intervened", StepContext { intervened: true, ..base }),
        ("rho 0.985", StepContext { rho: 0.985, ..base }),
        ("n_d 5", StepContext { discovered: 5, ..base }),
        (
            "phi 2.5 -> 2.0",
            StepContext {
                phi_prev: Some(2.5),
                phi_curr: Some(2.0),
                ..base
            },
        ),
        (
            "intervened, n_d 3",
            StepContext {
                intervened: true,
                discovered: 3,
                ..base
            },
        ),
    ];
    // Rows follow the order above; r_0 = -0.5.
    let table: [(RewardVariant, [f64; 5]); 8] = [
        (RewardVariant::Sge, [-1.0, 100.0, 0.0, 0.0, -1.0]),
        (RewardVariant::Sgd, [-1.0, 100.0, 5.0, 0.0, -1.0]),
        (RewardVariant::Sgpe, [-1.0, 100.0, 5.0, -0.5, -1.0]),
        (RewardVariant::Sga, [-1.0, 100.0, 5.0, 0.5, -1.0]),
        (RewardVariant::Fe, [0.0, 100.0, 0.0, 0.0, 0.0]),
        (RewardVariant::Fd, [0.0, 100.0, 5.0, 0.0, 3.0]),
        (RewardVariant::Fpe, [-0.5, 100.0, 5.0, -0.5, 3.0]),
        (RewardVariant::Fa, [-0.5, 100.0, 5.0, 0.5, 3.0]),
    ];
    let mut mismatches = Vec::new();
    for (variant, expected) in table {
        for ((name, ctx), want) in examples.iter().zip(expected) {
            let got = compute_reward(variant, &p, ctx);
            if got != want {
                mismatches.push(format!("{variant} {name}: {got} != {want}"));
            }
        }
    }
    verdict(
        8,
        mismatches.is_empty(),
        &format!("40 (variant, example) cells; mismatches: {mismatches:?}"),
    );
}

const DESK_CONFIG: &str = r#"
[env]
h = 30
w = 30
n_o = 15

[training]
timesteps = 100000

[eval]
envs = 20
steps = 1000
seed = 1000000
sample = true
coverage_at = 1000

[run]
seed = 7
checkpoint_every = 0
"#;

const ABLATION: [RewardVariant; 5] = [
    RewardVariant::Sga,
    RewardVariant::Sgpe,
    RewardVariant::Sgd,
    RewardVariant::Sge,
    RewardVariant::Fe,
];

const SWEEP_ENVS: u64 = 100;

struct Desk {
    cfg: RunConfig,
    results: Vec<VariantResult>,
    /// The same checkpoints evaluated with argmax actions, for reference.
    greedy: Vec<Vec<EvalRecord>>,
    sweep: Vec<SweepPoint>,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let cfg = RunConfig::parse(DESK_CONFIG, "acceptance desk config").unwrap();
        let dir = out_root().join("desk");
        let mut log = |line: &str| {
            if !line.contains("update") {
                let _ = writeln!(std::io::stderr(), "     {line}");
            }
        };
        let results = pipeline::ablate(&cfg, &ABLATION, &dir, &mut log).unwrap();
        let env = cfg.env.to_env_config();
        let seeds = pipeline::eval_seeds(&cfg);
        let greedy = results
            .iter()
            .map(|r| {
                let ckpt = Checkpoint::load(&r.train.final_checkpoint).unwrap();
                evaluate(Some(&ckpt.policy_net()), &env, &seeds, cfg.eval.steps, ActionMode::Greedy).unwrap()
            })
            .collect();
        // Intervention proportions sit near 1%, so the obstacle sweep uses
        // 100 environments rather than 20.
        let sga = Checkpoint::load(&results[0].train.final_checkpoint).unwrap().policy_net();
        let sweep_seeds: Vec<u64> = (0..SWEEP_ENVS).map(|i| cfg.eval.seed + i).collect();
        let sweep = pipeline::sweep(
            Some(&sga),
            &env,
            &[(30, 30)],
            &[10, 15, 20],
            &sweep_seeds,
            cfg.eval.steps,
            pipeline::eval_mode(&cfg),
            cfg.eval.coverage_at,
        )
        .unwrap();
        std::fs::write(dir.join("obstacle_sweep.csv"), pipeline::sweep_csv("SGA", &sweep)).unwrap();
        Desk {
            cfg,
            results,
            greedy,
            sweep,
        }
    })
}

fn coverage_median(records: &[EvalRecord], step: usize) -> f64 {
    summarize(records, step).median_cov_at
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_09_sga_learns_and_covers_the_desk_arena() {
    let d = desk();
    let sga = &d.results[0];
    assert_eq!(sga.variant, RewardVariant::Sga);
    let step = d.cfg.eval.coverage_at;

    // Smoothed reward sampled every 1000 steps.
    let sma: Vec<f64> = moving_average(&sga.train.step_rewards, pipeline::REWARD_SMA_WINDOW)
        .iter()
        .skip(pipeline::REWARD_SMA_WINDOW - 1)
        .step_by(pipeline::REWARD_SMA_WINDOW)
        .map(|v| *v as f64)
        .collect();
    let n = sma.len();
    let first_decile = mean(&sma[..n / 10]);
    let last_quintile = mean(&sma[n - n / 5..]);
    let last_decile = mean(&sma[n - n / 10..]);
    let prev_decile = mean(&sma[n - 2 * (n / 10)..n - n / 10]);
    let rise = last_quintile - first_decile;
    let rises = rise > 0.0;
    let plateaus = (last_decile - prev_decile).abs() <= 0.25 * rise.abs();

    let cov = coverage_median(&sga.records, step);
    let greedy = coverage_median(&d.greedy[0], step);
    info(
        9,
        &format!(
            "SMA reward: first decile {first_decile:.3}, last quintile {last_quintile:.3}, \
             previous/last decile {prev_decile:.3}/{last_decile:.3}"
        ),
    );
    info(9, &format!("greedy-action median coverage at {step}: {greedy:.4}"));
    verdict(
        9,
        rises && plateaus && cov >= 0.90,
        &format!(
            "reward rises {rises} (by {rise:.3}), plateaus {plateaus}; median coverage at {step} over {} envs = {cov:.4} (>= 0.90)",
            sga.records.len()
        ),
    );
}

#[test]
fn criterion_10_ablation_ordering() {
    let d = desk();
    let step = d.cfg.eval.coverage_at;
    let cov: Vec<f64> = d.results.iter().map(|r| coverage_median(&r.records, step)).collect();
    let greedy: Vec<f64> = d.greedy.iter().map(|r| coverage_median(r, step)).collect();
    let names: Vec<&str> = d.results.iter().map(|r| r.variant.name()).collect();
    let (sga, sgpe, sge, fe) = (cov[0], cov[1], cov[3], cov[4]);
    let table = |v: &[f64]| {
        names
            .iter()
            .zip(v)
            .map(|(n, c)| format!("{n} {c:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    info(10, &format!("greedy-action medians: {}", table(&greedy)));
    verdict(
        10,
        sga >= sgpe && sgpe >= sge && sga - fe >= 0.30,
        &format!(
            "median coverage at {step}: {}; SGA - FE = {:.1} points",
            table(&cov),
            100.0 * (sga - fe)
        ),
    );
}

#[test]
fn criterion_11_intervention_trends() {
    let d = desk();
    let rate = |records: &[EvalRecord]| median(&records.iter().map(EvalRecord::intervention_proportion).collect::<Vec<_>>());
    let sge = rate(&d.results[3].records);
    let fe = rate(&d.results[4].records);
    assert_eq!(d.results[3].variant, RewardVariant::Sge);
    assert_eq!(d.results[4].variant, RewardVariant::Fe);
    let sweep: Vec<f64> = d.sweep.iter().map(|p| p.summary.median_intervention).collect();
    let monotone = sweep.windows(2).all(|w| w[0] <= w[1]) && sweep[0] < sweep[2];
    let others: Vec<String> = d
        .results
        .iter()
        .map(|r| format!("{} {:.4}", r.variant.name(), rate(&r.records)))
        .collect();
    info(11, &format!("median intervention proportions: {}", others.join(", ")));
    verdict(
        11,
        sge < fe && monotone,
        &format!(
            "SGE {sge:.4} < FE {fe:.4}; SGA over n_o = 10/15/20 ({SWEEP_ENVS} envs): {:.4}/{:.4}/{:.4}",
            sweep[0], sweep[1], sweep[2]
        ),
    );
}

const DETERMINISM_CONFIG: &str = r#"
[env]
h = 16
w = 16
n_o = 4
n_s_star = 200

[training]
rollouts = 128
mini_batches = 8
learning_epochs = 2
timesteps = 384

[eval]
envs = 4
steps = 100
coverage_at = 100

[run]
seed = 12
checkpoint_every = 1
"#;

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_12_ablate_is_byte_deterministic() {
    let cfg = RunConfig::parse(DETERMINISM_CONFIG, "determinism config").unwrap();
    let variants = [RewardVariant::Sga, RewardVariant::Sge, RewardVariant::Fe];
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let mut quiet = |_: &str| {};
    pipeline::ablate(&cfg, &variants, &a, &mut quiet).unwrap();
    pipeline::ablate(&cfg, &variants, &b, &mut quiet).unwrap();
    let fa = files(&a);
    let fb = files(&b);
    let rel = |root: &Path, v: &[PathBuf]| v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect::<Vec<_>>();
    let same_names = rel(&a, &fa) == rel(&b, &fb);
    let csvs: Vec<&PathBuf> = fa.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    let mut differing = Vec::new();
    for (x, y) in fa.iter().zip(&fb) {
        if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
            differing.push(x.strip_prefix(&a).unwrap().display().to_string());
        }
    }
    verdict(
        12,
        same_names && differing.is_empty() && !csvs.is_empty(),
        &format!(
            "{} files ({} CSVs) compared across two runs; differing: {differing:?}",
            fa.len(),
            csvs.len()
        ),
    );
}
