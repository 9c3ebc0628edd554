use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsalgan::config::RunConfig;
use dsalgan::data::{
    image_from_dynamic, list_dataset, load_mask, make_shapes_dataset, save_image, save_mask, write_manifest,
    LabeledImage, ManifestRow, NoiseModel, SaliencyMap,
};
use dsalgan::eval::{emit_report, evaluate_model, render_panel, write_panels, DsalganModel, ReportFormat, SaliencyPredictor};
use dsalgan::train::{
    load_checkpoint, read_loss_log, run_phase, write_loss_log, CheckpointSink, NetSpecs, Phase, TrainState,
};
use dsalgan::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "dsalgan", version, about = "Denoise-then-detect saliency GAN toolkit")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides data.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural shapes dataset (images/ and masks/).
    Shapes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Corrupt a dataset directory at each noise level and write a manifest.
    Corrupt {
        /// Dataset directory; falls back to $DSALGAN_DATA.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated noise levels on the 0-255 scale.
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
    },
    /// Train one phase, or `all` three in order.
    Train {
        #[arg(long)]
        phase: String,
        #[arg(long)]
        steps: Option<usize>,
        /// Checkpoint to continue from (mid-phase) or to start the phase from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one or more datasets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directories; the held-out shapes split when none.
        #[arg(long)]
        data: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Denoise and predict one image; writes a four-panel PNG.
    Demo {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.data.seed = seed;
    }
    if cfg.data.dir.is_none() {
        cfg.data.dir = std::env::var_os("DSALGAN_DATA").map(PathBuf::from);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Shapes { out, count, size } => {
            let size = size.unwrap_or(cfg.data.size);
            let d = make_shapes_dataset("shapes", count, size, cfg.data.seed)?;
            for (id, item) in d.ids.iter().zip(&d.items) {
                save_image(&out.join("images").join(format!("{id}.png")), &item.clean)?;
                save_mask(&out.join("masks").join(format!("{id}.png")), &item.mask)?;
            }
            cfg.write_resolved(&out)?;
            println!("wrote {count} images to {}", out.display());
            Ok(())
        }
        Command::Corrupt { input, out, sigma } => {
            let input = input.or_else(|| cfg.data.dir.clone()).ok_or_else(|| {
                Error::Config("no input directory: pass --input or set DSALGAN_DATA".into())
            })?;
            let sigmas = if sigma.is_empty() { cfg.data.sigmas.clone() } else { sigma };
            let path = cmd_corrupt(&input, &out, &sigmas, cfg.data.seed)?;
            cfg.write_resolved(&out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Train { phase, steps, resume, out } => {
            let phases: Vec<Phase> = if phase == "all" { Phase::ALL.to_vec() } else { vec![phase.parse()?] };
            if let Some(s) = steps {
                for p in &phases {
                    match p {
                        Phase::PretrainDenoise => cfg.train.steps_denoise = s,
                        Phase::PretrainSod => cfg.train.steps_sod = s,
                        Phase::Joint => cfg.train.steps_joint = s,
                    }
                }
            }
            cmd_train(&cfg, &phases, resume.as_deref(), &out)
        }
        Command::Eval { checkpoint, data, sigma, out } => {
            if !data.is_empty() {
                cfg.eval.dirs = data;
            }
            if !sigma.is_empty() {
                cfg.eval.sigmas = sigma;
            }
            cfg.validate()?;
            cmd_eval(&cfg, &checkpoint, &out)
        }
        Command::Demo { image, checkpoint, mask, sigma, out } => cmd_demo(&image, mask.as_deref(), &checkpoint, sigma, cfg.data.seed, &out),
    }
}

fn cmd_corrupt(input: &Path, out: &Path, sigmas: &[f64], seed: u64) -> Result<PathBuf> {
    let pairs = list_dataset(input)?;
    let mut rows = Vec::new();
    for (i, (img_path, mask_path)) in pairs.iter().enumerate() {
        let img = image::open(img_path).map_err(|source| Error::Image { path: img_path.clone(), source })?;
        let clean = image_from_dynamic(&img);
        let mask = load_mask(mask_path, Some((clean.height(), clean.width())))?;
        let item = LabeledImage::new(clean, mask)?;
        let stem = img_path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let clean_path = out.join("clean").join(format!("{stem}.png"));
        let out_mask = out.join("masks").join(format!("{stem}.png"));
        save_image(&clean_path, &item.clean)?;
        save_mask(&out_mask, &item.mask)?;
        for &s in sigmas {
            let noise = NoiseModel::new(s, dsalgan::data::derive_seed(seed, &[i as u64]))?;
            let t = item.corrupt(&noise)?;
            let noisy_path = out.join("noisy").join(format!("{stem}_s{s}.png"));
            save_image(&noisy_path, &t.noisy)?;
            rows.push(ManifestRow {
                clean_path: clean_path.display().to_string(),
                noisy_path: noisy_path.display().to_string(),
                mask_path: out_mask.display().to_string(),
                sigma: s,
            });
        }
    }
    let manifest = out.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}

fn cmd_train(cfg: &RunConfig, phases: &[Phase], resume: Option<&Path>, out: &Path) -> Result<()> {
    let specs = NetSpecs::build(&cfg.net, cfg.data.size)?;
    let mut state = match resume {
        Some(p) => {
            let s = load_checkpoint(p)?;
            s.check_specs(&specs)?;
            s
        }
        None => TrainState::new(&specs, cfg.data.seed)?,
    };
    if phases.contains(&Phase::Joint) && phases.len() == 1 {
        // refuse before loading any data
        for p in [Phase::PretrainDenoise, Phase::PretrainSod] {
            if !state.is_completed(p) {
                return Err(Error::Config(format!("joint phase needs a completed {p} checkpoint (use --resume)")));
            }
        }
    }
    cfg.write_resolved(out)?;
    let data = cfg.training_set()?;
    log::info!("{} training samples", data.len());
    for &phase in phases {
        let pcfg = cfg.phase_config(phase);
        let log_path = out.join(format!("loss_{phase}.csv"));
        let mut rows = Vec::new();
        if state.phase == Some(phase) && !state.phase_done && log_path.exists() {
            rows = read_loss_log(&log_path)?.into_iter().filter(|r| r.step <= state.step).collect();
        }
        run_phase(&mut state, &data, &pcfg, CheckpointSink { dir: Some(out) }, &mut rows)?;
        write_loss_log(&log_path, &rows)?;
        if let Some(last) = rows.last() {
            let r = &last.report;
            println!(
                "{phase} step {}: content {:.4} adv_denoise {:.4} total_denoise {:.4} bce {:.4} adv_sod {:.4} cyclic {:.4} total_sod {:.4} d1 {:.4} d2 {:.4}",
                last.step, r.content, r.adv_denoise, r.total_denoise, r.bce, r.adv_sod, r.cyclic, r.total_sod, r.d1, r.d2
            );
        }
        println!("{}", CheckpointSink::path_for(out, phase, None).display());
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint)?;
    let model = DsalganModel::from_state(&state);
    let mut reports = Vec::new();
    for d in cfg.eval_datasets()? {
        reports.extend(evaluate_model(&model, &d, &cfg.eval.sigmas, cfg.eval.seed)?);
        if cfg.eval.panels > 0 {
            for &s in &cfg.eval.sigmas {
                write_panels(&model, &d, s, cfg.eval.seed, &out.join("panels").join(&d.name), cfg.eval.panels)?;
            }
        }
    }
    cfg.write_resolved(out)?;
    for path in emit_report(&reports, out, &[ReportFormat::Csv, ReportFormat::Markdown])? {
        println!("{}", path.display());
    }
    Ok(())
}

/// Resizes to the nearest multiple of 16 per side (at least 16).
fn to_multiple_of_16(img: image::DynamicImage) -> image::DynamicImage {
    let fix = |v: u32| (((v + 8) / 16) * 16).max(16);
    let (w, h) = (fix(img.width()), fix(img.height()));
    if (w, h) == (img.width(), img.height()) {
        return img;
    }
    log::warn!("resizing {}x{} to {w}x{h} (sides must be multiples of 16)", img.width(), img.height());
    img.resize_exact(w, h, image::imageops::FilterType::Triangle)
}

fn cmd_demo(image_path: &Path, mask: Option<&Path>, checkpoint: &Path, sigma: f64, seed: u64, out: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint)?;
    let model = DsalganModel::from_state(&state);
    let img = image::open(image_path).map_err(|source| Error::Image { path: image_path.to_path_buf(), source })?;
    let clean = image_from_dynamic(&to_multiple_of_16(img));
    let (h, w) = (clean.height(), clean.width());
    let gt = match mask {
        Some(p) => load_mask(p, Some((h, w)))?,
        None => SaliencyMap::new(Tensor::zeros(1, h, w))?,
    };
    let sample = LabeledImage::new(clean, gt)?.corrupt(&NoiseModel::new(sigma, seed)?)?;
    let pred = model.predict(&sample)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    render_panel(&sample, &pred).save(out).map_err(|source| Error::Image { path: out.to_path_buf(), source })?;
    println!("{}", out.display());
    Ok(())
}
