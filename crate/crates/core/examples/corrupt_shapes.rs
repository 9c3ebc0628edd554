//! Renders a few shapes images, corrupts each at the benchmark noise levels
//! and writes the results as PNGs.
//!
//! cargo run --release --example corrupt_shapes -- [out_dir]

use std::path::PathBuf;

use dsalgan::data::{make_shapes_dataset, psnr, save_image, save_mask, NoiseModel, BENCHMARK_SIGMAS};

fn main() -> dsalgan::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/corrupt_shapes"));
    let dataset = make_shapes_dataset("shapes", 4, 64, 11)?;

    for (i, (id, item)) in dataset.ids.iter().zip(&dataset.items).enumerate() {
        save_image(&out.join(format!("{id}_clean.png")), &item.clean)?;
        save_mask(&out.join(format!("{id}_mask.png")), &item.mask)?;
        let mut line = format!("{id}: {} salient pixels", item.mask.positives());
        for sigma in BENCHMARK_SIGMAS {
            // one seed per image: every noise level scales the same pattern
            let sample = item.corrupt(&NoiseModel::new(sigma, i as u64)?)?;
            save_image(&out.join(format!("{id}_s{sigma}.png")), &sample.noisy)?;
            line += &format!(", sigma {sigma}: {:.2} dB", psnr(&sample.clean, &sample.noisy));
        }
        println!("{line}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
