//! Corrupts one image, runs it through a checkpoint and saves the
//! noisy | denoised | map | mask panel.
//!
//! cargo run --release --example denoise_and_detect -- <checkpoint> [sigma] [out.png]

use std::path::PathBuf;

use dsalgan::data::{make_shapes_dataset, psnr, NoiseModel};
use dsalgan::eval::{auc, mae, render_panel, DsalganModel, SaliencyPredictor};
use dsalgan::train::load_checkpoint;
use dsalgan::Error;

fn main() -> dsalgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let checkpoint = PathBuf::from(args.next().expect("usage: denoise_and_detect <checkpoint> [sigma] [out.png]"));
    let sigma: f64 = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(50.0);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/panel.png"));

    let state = load_checkpoint(&checkpoint)?;
    let size = state.d1.spec.input_size.map_or(64, |s| s.0);
    let item = make_shapes_dataset("shapes", 1, size, 2718)?.items.remove(0);
    let sample = item.corrupt(&NoiseModel::new(sigma, 7)?)?;
    let pred = DsalganModel::from_state(&state).predict(&sample)?;

    println!(
        "PSNR {:.2} -> {:.2} dB, AUC {:.4}, MAE {:.4}",
        psnr(&sample.clean, &sample.noisy),
        psnr(&sample.clean, &pred.denoised),
        auc(&pred.map, &sample.mask)?,
        mae(&pred.map, &sample.mask)?
    );
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    render_panel(&sample, &pred).save(&out).map_err(|source| Error::Image { path: out.clone(), source })?;
    println!("wrote {}", out.display());
    Ok(())
}
