use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = r#"
[env]
h = 14
w = 14
n_o = 3
n_s_star = 120

[training]
rollouts = 64
mini_batches = 4
learning_epochs = 1
timesteps = 192

[eval]
envs = 3
steps = 50
coverage_at = 50

[run]
seed = 5
checkpoint_every = 1
"#;

fn shieldnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shieldnav"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[env]\nh = 20\nbogus = 1\n");
    let out = shieldnav(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn invalid_values_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[env]\nh = 1\n",
        "[training]\nrollouts = 100\nmini_batches = 64\n",
        "[reward]\nvariant = \"XYZ\"\n",
        "[env\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let out = shieldnav(&["train", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = shieldnav(&["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_checkpoint_exits_with_checkpoint_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"SNCK\x01\x00").unwrap();
    let out = shieldnav(&[
        "eval",
        "--ckpt",
        bad.to_str().unwrap(),
        "--envs",
        "1",
        "--steps",
        "5",
        "--seeds",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let missing = shieldnav(&["render", "--seed", "1", "--ckpt", "/nonexistent.bin"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn train_eval_render_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let run = dir.path().join("run");
    let out = shieldnav(&["train", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let log = lines(&run.join("train_log.csv"));
    assert_eq!(log[0], "update,steps,mean_reward,policy_loss,value_loss");
    assert_eq!(log.len(), 1 + 3);
    for (i, row) in log[1..].iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0], (i + 1).to_string());
        assert_eq!(cols[1], (64 * (i + 1)).to_string());
        assert!(cols[2..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
    for name in ["ckpt_00001.bin", "ckpt_00003.bin", "final.bin", "reward_curve.csv"] {
        assert!(run.join(name).exists(), "{name}");
    }

    let ckpt = run.join("final.bin");
    let eval_dir = dir.path().join("eval");
    let seeds = dir.path().join("seeds.txt");
    std::fs::write(&seeds, "# held out\n11\n12\n\n13\n").unwrap();
    let out = shieldnav(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--config",
        &cfg,
        "--envs",
        "3",
        "--steps",
        "40",
        "--seeds",
        seeds.to_str().unwrap(),
        "--coverage-at",
        "20",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&eval_dir.join("coverage_curve.csv")).len(), 1 + 40);
    let at = lines(&eval_dir.join("coverage_at.csv"));
    assert_eq!(at.len(), 1 + 3);
    assert!(at[1].starts_with("SGA,11,20,"));
    assert_eq!(lines(&eval_dir.join("interventions.csv")).len(), 1 + 3);
    assert_eq!(lines(&eval_dir.join("episodes.csv")).len(), 1 + 3);
    assert_eq!(lines(&eval_dir.join("summary.csv")).len(), 1 + 1);

    let render_dir = dir.path().join("render");
    let out = shieldnav(&[
        "render",
        "--seed",
        "4",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--config",
        &cfg,
        "--steps",
        "30",
        "--out",
        render_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for name in ["frames.txt", "map_initial.pgm", "map_final.pgm"] {
        assert!(render_dir.join(name).exists(), "{name}");
    }
    let pgm = std::fs::read(render_dir.join("map_final.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n14 14\n255\n"));
    assert_eq!(pgm.len(), b"P5\n14 14\n255\n".len() + 14 * 14);
}

#[test]
fn resume_continues_step_counter_and_appends_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let out = shieldnav(&["train", "--config", &cfg, "--out", run_s, "--timesteps", "128"]);
    assert!(out.status.success());
    assert_eq!(lines(&run.join("train_log.csv")).len(), 1 + 2);
    let ckpt = run.join("ckpt_00002.bin");
    let out = shieldnav(&[
        "train",
        "--config",
        &cfg,
        "--out",
        run_s,
        "--timesteps",
        "256",
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = lines(&run.join("train_log.csv"));
    assert_eq!(log.len(), 1 + 4);
    assert!(log[3].starts_with("3,192,"));
    assert!(log[4].starts_with("4,256,"));
}

#[test]
fn random_policy_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let eval_dir = dir.path().join("eval");
    let out = shieldnav(&[
        "eval",
        "--random",
        "--config",
        &cfg,
        "--envs",
        "2",
        "--steps",
        "30",
        "--seeds",
        "100",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(lines(&eval_dir.join("summary.csv"))[1].starts_with("random,2,30,"));

    let sweep_dir = dir.path().join("sweep");
    let out = shieldnav(&[
        "sweep",
        "--random",
        "--config",
        &cfg,
        "--sizes",
        "12x12,16x16",
        "--obstacles",
        "2,4",
        "--envs",
        "2",
        "--steps",
        "20",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(lines(&sweep_dir.join("sweep.csv")).len(), 1 + 4);
}
