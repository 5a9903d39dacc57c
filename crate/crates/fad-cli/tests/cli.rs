//! End-to-end tests driving the `fad` binary as a child process.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fad() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fad"));
    // The parent environment must not leak a global seed into the tests.
    cmd.env_remove("FAD_SEED");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn fad");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_data(dir: &Path, sequences: usize, frames: usize, seed: Option<u64>) -> Output {
    let mut cmd = fad();
    cmd.arg("gen-data")
        .arg("--out")
        .arg(dir)
        .arg("--sequences")
        .arg(sequences.to_string())
        .arg("--frames")
        .arg(frames.to_string());
    if let Some(s) = seed {
        cmd.arg("--seed").arg(s.to_string());
    }
    run_ok(&mut cmd)
}

#[test]
fn gen_data_is_deterministic_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen_data(&a, 3, 16, Some(7));
    gen_data(&b, 3, 16, Some(7));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sequences"], 3);
    assert_eq!(manifest["frames"], 16);
    assert_eq!(manifest["seed"], 7);

    for name in [
        "manifest.json",
        "speaker_frames.f32",
        "speaker_audio.f32",
        "speaker_motion.f32",
        "listener_motion.f32",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn the_seed_env_var_is_a_fallback_for_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let via_flag = tmp.path().join("flag");
    let via_env = tmp.path().join("env");
    gen_data(&via_flag, 2, 16, Some(5));
    let mut cmd = fad();
    cmd.env("FAD_SEED", "5")
        .arg("gen-data")
        .arg("--out")
        .arg(&via_env)
        .arg("--sequences")
        .arg("2")
        .arg("--frames")
        .arg("16");
    run_ok(&mut cmd);
    assert_eq!(
        fs::read(via_flag.join("listener_motion.f32")).unwrap(),
        fs::read(via_env.join("listener_motion.f32")).unwrap()
    );
}

#[test]
fn errors_exit_nonzero_with_a_single_line_prefix() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fad()
        .arg("train")
        .arg("--data")
        .arg(tmp.path().join("missing"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .expect("spawn fad");
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

/// Tiny model: enough to exercise every stage of the pipeline in seconds.
const TINY_CONFIG: &str = r#"
steps = 2

[model]
clip_len = 8
k_steps = 100

[model.visual]
widths = [4, 8]
head_channels = 4

[model.mel]
n_mels = 16

[model.elnet]
cond_channels = 24
base_width = 8
depth = 1
res_blocks = 1
groups = 2
time_embed_dim = 16

[train]
epochs = 1
batch_size = 4
seed = 3
"#;

#[test]
fn the_full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_data(&data, 6, 16, Some(11));

    let config = tmp.path().join("tiny.toml");
    fs::write(&config, TINY_CONFIG).unwrap();

    let run_dir = tmp.path().join("run");
    let out = run_ok(
        fad()
            .arg("train")
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir),
    );
    let ckpt = run_dir.join("checkpoint.ckpt");
    assert!(ckpt.exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("checkpoint.ckpt"));
    let trace = fs::read_to_string(run_dir.join("loss_trace.csv")).unwrap();
    assert!(trace.starts_with("step,loss,wall_ms\n"));
    assert!(trace.lines().count() >= 2, "trace: {trace}");
    assert!(run_dir.join("config.toml").exists());

    let pred_dir = tmp.path().join("pred");
    run_ok(
        fad()
            .arg("generate")
            .arg("--checkpoint")
            .arg(&ckpt)
            .arg("--input-manifest")
            .arg(&data)
            .arg("--steps")
            .arg("2")
            .arg("--out")
            .arg(&pred_dir)
            .arg("--seed")
            .arg("1"),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pred_dir.join("predictions.json")).unwrap())
            .unwrap();
    // 16 frames at clip length 8 leave exactly one generated clip.
    assert_eq!(manifest["sequences"], 6);
    assert_eq!(manifest["frames"], 8);
    assert_eq!(manifest["offset"], 8);
    assert_eq!(manifest["steps"], 2);
    let latency = fs::read_to_string(pred_dir.join("latency.csv")).unwrap();
    assert!(latency.starts_with("sequence,clip,millis\n"));
    assert_eq!(latency.lines().count(), 1 + 6);

    let eval_dir = tmp.path().join("eval");
    run_ok(
        fad()
            .arg("eval")
            .arg("--pred")
            .arg(&pred_dir)
            .arg("--gt")
            .arg(&data)
            .arg("--train-data")
            .arg(&data)
            .arg("--out")
            .arg(&eval_dir),
    );
    let report = fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,view,l2,fd,si,tlcc_corr,tlcc_lag");
    assert_eq!(lines.len(), 1 + 12, "report: {report}");
    assert!(lines[1].starts_with("ours,expression,"));
    for method in ["nn_motion", "nn_audio", "random", "mirror", "median"] {
        assert!(
            lines.iter().any(|l| l.starts_with(&format!("{method},"))),
            "missing {method} in report: {report}"
        );
    }
    assert!(eval_dir.join("report.json").exists());

    let bench_out = run_ok(
        fad()
            .arg("bench")
            .arg("--checkpoint")
            .arg(&ckpt)
            .arg("--steps-list")
            .arg("1,2")
            .arg("--repeats")
            .arg("3"),
    );
    let csv = String::from_utf8_lossy(&bench_out.stdout);
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("steps,median_ms,p95_ms,flops_total"));
    assert_eq!(rows.len(), 1 + 2, "bench csv: {csv}");
    assert!(rows[1].starts_with("1,"));
    assert!(rows[2].starts_with("2,"));
}

#[test]
fn generation_is_deterministic_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_data(&data, 2, 16, Some(4));
    let config = tmp.path().join("tiny.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let run_dir = tmp.path().join("run");
    run_ok(
        fad()
            .arg("train")
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir),
    );
    let ckpt = run_dir.join("checkpoint.ckpt");

    let gen = |dir: &Path| {
        run_ok(
            fad()
                .arg("generate")
                .arg("--checkpoint")
                .arg(&ckpt)
                .arg("--input-manifest")
                .arg(&data)
                .arg("--steps")
                .arg("1")
                .arg("--out")
                .arg(dir)
                .arg("--seed")
                .arg("9"),
        );
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen(&a);
    gen(&b);
    assert_eq!(
        fs::read(a.join("pred_motion.f32")).unwrap(),
        fs::read(b.join("pred_motion.f32")).unwrap()
    );
}
