//! Evaluates a checkpoint at several noise levels and writes metrics.csv,
//! metrics.md and a few panels.
//!
//! cargo run --release --example evaluate_checkpoint -- <checkpoint> [out_dir] [data_dir]

use std::path::PathBuf;

use dsalgan::data::{load_dataset_dir, make_shapes_dataset, BENCHMARK_SIGMAS};
use dsalgan::eval::{emit_report, evaluate_model, report_markdown, write_panels, DsalganModel, ReportFormat};
use dsalgan::train::load_checkpoint;

fn main() -> dsalgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let checkpoint = PathBuf::from(args.next().expect("usage: evaluate_checkpoint <checkpoint> [out_dir] [data_dir]"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/evaluate"));

    let state = load_checkpoint(&checkpoint)?;
    let size = state.d1.spec.input_size.map_or(64, |s| s.0);
    let dataset = match args.next() {
        Some(dir) => load_dataset_dir(dir.as_ref(), size)?,
        None => make_shapes_dataset("shapes", 50, size, 99)?,
    };
    let model = DsalganModel::from_state(&state);
    let reports = evaluate_model(&model, &dataset, &BENCHMARK_SIGMAS, 1)?;
    for sigma in BENCHMARK_SIGMAS {
        write_panels(&model, &dataset, sigma, 1, &out.join("panels"), 3)?;
    }
    emit_report(&reports, &out, &[ReportFormat::Csv, ReportFormat::Markdown])?;
    print!("{}", report_markdown(&reports));
    Ok(())
}
