//! Runs the three training phases from a config file, then evaluates the
//! joint model on the held-out split.
//!
//! cargo run --release --example train_desk -- [config.toml] [out_dir]

use std::path::PathBuf;

use dsalgan::config::RunConfig;
use dsalgan::eval::{emit_report, evaluate_model, DsalganModel, ReportFormat};
use dsalgan::train::{run_phase, save_checkpoint, write_loss_log, CheckpointSink, NetSpecs, Phase, TrainState};

fn main() -> dsalgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("configs/desk.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/train_desk"));

    let cfg = RunConfig::load(&config)?;
    cfg.write_resolved(&out)?;
    let specs = NetSpecs::build(&cfg.net, cfg.data.size)?;
    let data = cfg.training_set()?;
    let mut state = TrainState::new(&specs, cfg.data.seed)?;

    for phase in Phase::ALL {
        let mut rows = Vec::new();
        let start = std::time::Instant::now();
        run_phase(&mut state, &data, &cfg.phase_config(phase), CheckpointSink { dir: Some(&out) }, &mut rows)?;
        write_loss_log(&out.join(format!("loss_{phase}.csv")), &rows)?;
        if let Some(last) = rows.last() {
            println!(
                "{phase}: {} steps in {:.0}s, total_denoise {:.4}, total_sod {:.4}",
                rows.len(),
                start.elapsed().as_secs_f64(),
                last.report.total_denoise,
                last.report.total_sod
            );
        }
    }
    save_checkpoint(&out.join("final.ckpt"), &state)?;

    let model = DsalganModel::from_state(&state);
    let mut reports = Vec::new();
    for dataset in cfg.eval_datasets()? {
        reports.extend(evaluate_model(&model, &dataset, &cfg.eval.sigmas, cfg.eval.seed)?);
    }
    for r in &reports {
        println!(
            "sigma {:>4}: AUC {:.4} MAE {:.4} maxF {:.4} aveF {:.4} PSNR {:.2} -> {:.2} dB",
            r.sigma, r.auc, r.mae, r.max_f, r.ave_f, r.psnr_noisy, r.psnr_denoised
        );
    }
    emit_report(&reports, &out, &[ReportFormat::Csv, ReportFormat::Markdown])?;
    println!("wrote {}", out.display());
    Ok(())
}
