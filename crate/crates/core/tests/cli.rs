use std::path::Path;
use std::process::{Command, Output};

fn dsalgan(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsalgan"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("DSALGAN_DATA")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[data]\nsize = 32\ntrain_count = 8\ntest_count = 4\n\n[net]\ndepth_pairs = 2\nbase_channels = 4\ng3_base_channels = 4\n\n[train]\nbatch_size = 2\nsteps_denoise = 2\nsteps_sod = 2\nsteps_joint = 2\n",
    )
    .unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn corrupt_writes_four_variants_per_image() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = dsalgan(&["shapes", "--out", "raw", "--count", "3", "--size", "32"], d);
    assert!(o.status.success(), "{o:?}");
    let o = dsalgan(&["corrupt", "--input", "raw", "--out", "noisy", "--sigma", "10,30,50,80"], d);
    assert!(o.status.success(), "{o:?}");
    let rows = dsalgan::data::read_manifest(&d.join("noisy/manifest.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(d.join("noisy").join(dsalgan::config::RESOLVED_CONFIG).exists());

    // same seed, same manifest and images
    let first = std::fs::read(d.join("noisy/noisy/shapes_00001_s50.png")).unwrap();
    let o = dsalgan(&["corrupt", "--input", "raw", "--out", "noisy", "--sigma", "10,30,50,80"], d);
    assert!(o.status.success());
    assert_eq!(std::fs::read(d.join("noisy/noisy/shapes_00001_s50.png")).unwrap(), first);
}

#[test]
fn zero_sigma_keeps_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(dsalgan(&["shapes", "--out", "raw", "--count", "2", "--size", "32"], d).status.success());
    let o = dsalgan(&["corrupt", "--input", "raw", "--out", "zero", "--sigma", "0"], d);
    assert!(o.status.success(), "{o:?}");
    for row in dsalgan::data::read_manifest(&d.join("zero/manifest.csv")).unwrap() {
        let a = image::open(d.join(&row.clean_path)).unwrap().to_rgb8();
        let b = image::open(d.join(&row.noisy_path)).unwrap().to_rgb8();
        assert_eq!(a, b);
    }
}

#[test]
fn corrupt_without_input_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dsalgan(&["corrupt", "--out", "x", "--sigma", "10"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn joint_needs_pretrained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = dsalgan(&["--config", &cfg, "train", "--phase", "joint", "--out", "run"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("joint"));
}

#[test]
fn unknown_checkpoint_and_phase_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dsalgan(&["eval", "--checkpoint", "missing.ckpt", "--out", "ev"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    std::fs::write(tmp.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = dsalgan(&["eval", "--checkpoint", "junk.ckpt", "--out", "ev"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    let o = dsalgan(&["train", "--phase", "warmup", "--out", "run"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn train_all_then_eval_and_demo() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    let o = dsalgan(&["--config", &cfg, "train", "--phase", "all", "--out", "run"], d);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    let last = out.lines().last().unwrap();
    assert!(last.ends_with("joint.ckpt"), "{out}");
    for phase in ["pretrain_denoise", "pretrain_sod", "joint"] {
        let log = dsalgan::train::read_loss_log(&d.join(format!("run/loss_{phase}.csv"))).unwrap();
        assert_eq!(log.len(), 2);
    }
    assert!(d.join("run/resolved_config.toml").exists());

    let o = dsalgan(&["--config", &cfg, "eval", "--checkpoint", "run/joint.ckpt", "--sigma", "10,50", "--out", "ev"], d);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(d.join("ev/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(d.join("ev/metrics.md").exists() && d.join("ev/resolved_config.toml").exists());

    // 40x40 is resized to 48x48 before inference
    let img = image::RgbImage::from_fn(40, 40, |x, y| image::Rgb([(x * 6) as u8, (y * 6) as u8, 90]));
    img.save(d.join("in.png")).unwrap();
    let o = dsalgan(&["demo", "--image", "in.png", "--checkpoint", "run/joint.ckpt", "--sigma", "30", "--out", "panel.png"], d);
    assert!(o.status.success(), "{o:?}");
    let panel = image::open(d.join("panel.png")).unwrap();
    assert_eq!((panel.width(), panel.height()), (4 * 48 + 3 * dsalgan::eval::PANEL_GAP, 48));
}

#[test]
fn zero_steps_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    let o = dsalgan(&["--config", &cfg, "train", "--phase", "pretrain_denoise", "--steps", "0", "--out", "a"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(d.join("a/pretrain_denoise.ckpt").exists());

    for (phase, from) in [("pretrain_denoise", None), ("pretrain_sod", Some("b/pretrain_denoise.ckpt")), ("joint", Some("b/pretrain_sod.ckpt"))] {
        let mut args = vec!["--config", cfg.as_str(), "train", "--phase", phase, "--out", "b"];
        if let Some(f) = from {
            args.extend(["--resume", f]);
        }
        let o = dsalgan(&args, d);
        assert!(o.status.success(), "{phase}: {o:?}");
    }
    let state = dsalgan::train::load_checkpoint(&d.join("b/joint.ckpt")).unwrap();
    assert_eq!(state.completed.len(), 3);
}
