use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, f_measures, mae};
use crate::data::{
    derive_seed, image_to_rgb, map_to_gray, psnr, side_by_side, Dataset, ImageTensor, NoiseModel, SaliencyMap,
    SampleTriplet,
};
use crate::error::{Error, Result};
use crate::nets::{forward, NetworkParams, NetworkSpec};
use crate::train::TrainState;

/// White separator between panel columns.
pub const PANEL_GAP: u32 = 4;

/// Output of the denoise-then-predict pipeline for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub denoised: ImageTensor,
    pub map: SaliencyMap,
}

/// Anything that maps a corrupted sample to a denoised image and a map.
/// Implementations only see `sample.noisy`, except test stubs.
pub trait SaliencyPredictor {
    fn predict(&self, sample: &SampleTriplet) -> Result<Prediction>;
}

/// G1 followed by G2.
#[derive(Clone, Debug)]
pub struct DsalganModel {
    pub g1_spec: NetworkSpec,
    pub g1: NetworkParams<f32>,
    pub g2_spec: NetworkSpec,
    pub g2: NetworkParams<f32>,
}

impl DsalganModel {
    pub fn from_state(state: &TrainState) -> Self {
        Self {
            g1_spec: state.g1.spec.clone(),
            g1: state.g1.params.clone(),
            g2_spec: state.g2.spec.clone(),
            g2: state.g2.params.clone(),
        }
    }

    pub fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        ImageTensor::from_clamped(forward(&self.g1_spec, &self.g1, noisy.tensor())?)
    }

    pub fn saliency(&self, image: &ImageTensor) -> Result<SaliencyMap> {
        SaliencyMap::new(forward(&self.g2_spec, &self.g2, image.tensor())?.clamp(0.0, 1.0))
    }
}

impl SaliencyPredictor for DsalganModel {
    fn predict(&self, sample: &SampleTriplet) -> Result<Prediction> {
        let denoised = self.denoise(&sample.noisy)?;
        let map = self.saliency(&denoised)?;
        Ok(Prediction { denoised, map })
    }
}

/// Dataset-level averages at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub sigma: f64,
    /// Images that entered the averages.
    pub n_images: usize,
    pub ave_f: f64,
    pub max_f: f64,
    pub auc: f64,
    pub mae: f64,
    /// Images whose ground truth holds a single class.
    pub skipped: usize,
    pub psnr_noisy: f64,
    pub psnr_denoised: f64,
}

/// Corruption seed of image `index`; shared across noise levels so every
/// level sees the same noise pattern at a different scale.
pub fn eval_noise_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[0x6576_616c, index as u64])
}

/// The corrupted evaluation sample for image `index` of `dataset`.
pub fn eval_sample(dataset: &Dataset, index: usize, sigma: f64, seed: u64) -> Result<SampleTriplet> {
    dataset.items[index].corrupt(&NoiseModel::new(sigma, eval_noise_seed(seed, index))?)
}

/// Corrupts every image at each `sigma`, runs `predictor` and averages the
/// four metrics. Rows come back in `sigmas` order.
pub fn evaluate_model(
    predictor: &dyn SaliencyPredictor,
    dataset: &Dataset,
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    if dataset.is_empty() {
        return Err(Error::Validation(format!("dataset {} is empty", dataset.name)));
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let (mut sum_ave, mut sum_max, mut sum_auc, mut sum_mae) = (0.0, 0.0, 0.0, 0.0);
            let (mut psnr_noisy, mut psnr_denoised) = (0.0, 0.0);
            let mut skipped = 0;
            for i in 0..dataset.len() {
                let sample = eval_sample(dataset, i, sigma, seed)?;
                let pred = predictor.predict(&sample)?;
                psnr_noisy += psnr(&sample.noisy, &sample.clean).min(100.0);
                psnr_denoised += psnr(&pred.denoised, &sample.clean).min(100.0);
                let positives = sample.mask.positives();
                if positives == 0 || positives == sample.mask.values().len() {
                    skipped += 1;
                    continue;
                }
                let f = f_measures(&pred.map, &sample.mask)?;
                sum_ave += f.ave_f;
                sum_max += f.max_f;
                sum_auc += auc(&pred.map, &sample.mask)?;
                sum_mae += mae(&pred.map, &sample.mask)?;
            }
            let n = dataset.len() - skipped;
            if n == 0 {
                return Err(Error::Validation(format!(
                    "every ground truth in {} holds a single class",
                    dataset.name
                )));
            }
            let k = n as f64;
            let all = dataset.len() as f64;
            Ok(MetricsReport {
                dataset: dataset.name.clone(),
                sigma,
                n_images: n,
                ave_f: sum_ave / k,
                max_f: sum_max / k,
                auc: sum_auc / k,
                mae: sum_mae / k,
                skipped,
                psnr_noisy: psnr_noisy / all,
                psnr_denoised: psnr_denoised / all,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    dataset: &'a str,
    sigma: f64,
    n_images: usize,
    #[serde(rename = "aveF")]
    ave_f: f64,
    #[serde(rename = "maxF")]
    max_f: f64,
    auc: f64,
    mae: f64,
}

pub const CSV_HEADER: [&str; 7] = ["dataset", "sigma", "n_images", "aveF", "maxF", "auc", "mae"];

pub fn write_report_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if reports.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in reports {
        w.serialize(CsvRow {
            dataset: &r.dataset,
            sigma: r.sigma,
            n_images: r.n_images,
            ave_f: r.ave_f,
            max_f: r.max_f,
            auc: r.auc,
            mae: r.mae,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn sigma_label(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{s:.0}")
    } else {
        format!("{s}")
    }
}

/// Two markdown tables: all four metrics per (dataset, sigma), and AUC
/// with one row per dataset and one column per sigma.
pub fn report_markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str("| dataset | sigma | n_images | aveF | maxF | AUC | MAE |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.dataset,
            sigma_label(r.sigma),
            r.n_images,
            r.ave_f,
            r.max_f,
            r.auc,
            r.mae
        );
    }

    let mut sigmas: Vec<f64> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !sigmas.contains(&r.sigma) {
            sigmas.push(r.sigma);
        }
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    out.push_str("\nAUC by noise level\n\n| dataset |");
    for s in &sigmas {
        let _ = write!(out, " sigma={} |", sigma_label(*s));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(sigmas.len()));
    out.push('\n');
    for d in datasets {
        let _ = write!(out, "| {d} |");
        for s in &sigmas {
            match reports.iter().find(|r| r.dataset == d && r.sigma == *s) {
                Some(r) => {
                    let _ = write!(out, " {:.4} |", r.auc);
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `metrics.csv` and/or `metrics.md` into `dir`.
pub fn emit_report(reports: &[MetricsReport], dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            ReportFormat::Csv => {
                let p = dir.join("metrics.csv");
                write_report_csv(&p, reports)?;
                p
            }
            ReportFormat::Markdown => {
                let p = dir.join("metrics.md");
                std::fs::write(&p, report_markdown(reports)).map_err(|e| Error::io(&p, e))?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

fn map_to_rgb(map: &SaliencyMap) -> RgbImage {
    image::DynamicImage::ImageLuma8(map_to_gray(map)).to_rgb8()
}

/// noisy | denoised | predicted map | ground truth.
pub fn render_panel(sample: &SampleTriplet, pred: &Prediction) -> RgbImage {
    side_by_side(
        &[image_to_rgb(&sample.noisy), image_to_rgb(&pred.denoised), map_to_rgb(&pred.map), map_to_rgb(&sample.mask)],
        PANEL_GAP,
    )
}

/// Saves the panels of the first `limit` images at `sigma` as
/// `<dir>/<id>_s<sigma>.png`.
pub fn write_panels(
    predictor: &dyn SaliencyPredictor,
    dataset: &Dataset,
    sigma: f64,
    seed: u64,
    dir: &Path,
    limit: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..dataset.len().min(limit))
        .map(|i| {
            let sample = eval_sample(dataset, i, sigma, seed)?;
            let pred = predictor.predict(&sample)?;
            let path = dir.join(format!("{}_s{}.png", dataset.ids[i], sigma_label(sigma)));
            render_panel(&sample, &pred)
                .save(&path)
                .map_err(|source| Error::Image { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_shapes_dataset;

    struct Oracle;

    impl SaliencyPredictor for Oracle {
        fn predict(&self, sample: &SampleTriplet) -> Result<Prediction> {
            Ok(Prediction { denoised: sample.clean.clone(), map: sample.mask.clone() })
        }
    }

    #[test]
    fn oracle_predictor_scores_perfectly() {
        let d = make_shapes_dataset("toy", 4, 32, 2).unwrap();
        let reports = evaluate_model(&Oracle, &d, &[10.0, 50.0], 1).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert_eq!((r.ave_f, r.max_f, r.auc, r.mae), (1.0, 1.0, 1.0, 0.0));
            assert_eq!((r.n_images, r.skipped), (4, 0));
        }
        assert!(reports[0].psnr_noisy > reports[1].psnr_noisy);
        assert_eq!(reports, evaluate_model(&Oracle, &d, &[10.0, 50.0], 1).unwrap());
    }

    #[test]
    fn empty_report_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&[], dir.path(), &[ReportFormat::Csv, ReportFormat::Markdown]).unwrap();
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.trim_end(), "dataset,sigma,n_images,aveF,maxF,auc,mae");
    }

    #[test]
    fn markdown_has_one_column_per_sigma() {
        let row = |d: &str, s: f64, auc: f64| MetricsReport {
            dataset: d.into(),
            sigma: s,
            n_images: 1,
            ave_f: 0.5,
            max_f: 0.6,
            auc,
            mae: 0.1,
            skipped: 0,
            psnr_noisy: 0.0,
            psnr_denoised: 0.0,
        };
        let reports: Vec<_> = ["a", "b"]
            .iter()
            .flat_map(|d| [10.0, 30.0, 50.0, 80.0].map(|s| row(d, s, 0.9 - s / 1000.0)))
            .collect();
        let md = report_markdown(&reports);
        let table4: Vec<&str> = md.lines().skip_while(|l| !l.starts_with("AUC by")).skip(2).collect();
        assert_eq!(table4[0], "| dataset | sigma=10 | sigma=30 | sigma=50 | sigma=80 |");
        assert_eq!(table4[2], "| a | 0.8900 | 0.8700 | 0.8500 | 0.8200 |");
        assert_eq!(table4.len(), 4);
    }

    #[test]
    fn panel_width_is_four_images_plus_gaps() {
        let d = make_shapes_dataset("toy", 1, 32, 2).unwrap();
        let sample = eval_sample(&d, 0, 30.0, 0).unwrap();
        let pred = Oracle.predict(&sample).unwrap();
        let panel = render_panel(&sample, &pred);
        assert_eq!(panel.width(), 4 * 32 + 3 * PANEL_GAP);
        assert_eq!(panel.height(), 32);
    }
}
