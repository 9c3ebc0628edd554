//! Per-image saliency metrics against a binary ground-truth mask.

use crate::data::SaliencyMap;
use crate::error::{Error, Result};

/// Weight of precision relative to recall in the F-measure.
pub const BETA_SQ: f64 = 0.3;
/// Number of uniform thresholds `k / 255` swept for maxF.
pub const THRESHOLDS: usize = 256;

fn check_pair(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Validation(format!(
            "prediction {}x{} and ground truth {}x{} differ",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    if !gt.is_binary() {
        return Err(Error::Validation("ground truth must be binary".into()));
    }
    Ok(())
}

/// Mean absolute per-pixel difference.
pub fn mae(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_pair(pred, gt)?;
    let n = pred.values().len() as f64;
    Ok(pred.values().iter().zip(gt.values()).map(|(&p, &g)| (p as f64 - g as f64).abs()).sum::<f64>() / n)
}

/// F-measure from counts; zero when nothing is predicted positive or no
/// predicted pixel is correct.
pub fn f_beta(true_pos: usize, predicted_pos: usize, actual_pos: usize) -> f64 {
    if true_pos == 0 || predicted_pos == 0 || actual_pos == 0 {
        return 0.0;
    }
    let p = true_pos as f64 / predicted_pos as f64;
    let r = true_pos as f64 / actual_pos as f64;
    (1.0 + BETA_SQ) * p * r / (BETA_SQ * p + r)
}

/// Largest grid index `k` with `value >= k / 255`.
fn grid_bin(value: f32) -> usize {
    let v = value as f64;
    let mut k = ((v * 255.0).floor().max(0.0) as usize).min(THRESHOLDS - 1);
    while k + 1 < THRESHOLDS && v >= (k + 1) as f64 / 255.0 {
        k += 1;
    }
    while k > 0 && v < k as f64 / 255.0 {
        k -= 1;
    }
    k
}

/// Smallest grid index `k` with `k / 255 >= threshold`.
fn grid_ceil(threshold: f64) -> usize {
    let mut k = ((threshold * 255.0).ceil().max(0.0) as usize).min(THRESHOLDS - 1);
    while k > 0 && (k - 1) as f64 / 255.0 >= threshold {
        k -= 1;
    }
    while k + 1 < THRESHOLDS && (k as f64 / 255.0) < threshold {
        k += 1;
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FMeasures {
    /// F at the adaptive threshold `min(1, 2 * mean(pred))`, rounded up to
    /// the 8-bit threshold grid.
    pub ave_f: f64,
    /// Maximum F over thresholds `0, 1/255, ..., 1`.
    pub max_f: f64,
}

/// Both F-measures from one cumulative histogram pass. Pixels count as
/// predicted positive when `pred >= threshold`.
pub fn f_measures(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<FMeasures> {
    check_pair(pred, gt)?;
    let actual_pos = gt.positives();
    if actual_pos == 0 {
        return Err(Error::Validation("ground truth has no positive pixels".into()));
    }
    let mut all = [0usize; THRESHOLDS];
    let mut pos = [0usize; THRESHOLDS];
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let k = grid_bin(p);
        all[k] += 1;
        if g == 1.0 {
            pos[k] += 1;
        }
    }
    // cumulative counts from the top threshold down
    let mut f = [0.0; THRESHOLDS];
    let (mut pp, mut tp) = (0, 0);
    for k in (0..THRESHOLDS).rev() {
        pp += all[k];
        tp += pos[k];
        f[k] = f_beta(tp, pp, actual_pos);
    }
    let max_f = f.iter().copied().fold(0.0, f64::max);
    let mean = pred.values().iter().map(|&v| v as f64).sum::<f64>() / pred.values().len() as f64;
    let ave_f = f[grid_ceil((2.0 * mean).min(1.0))];
    Ok(FMeasures { ave_f, max_f })
}

/// Pixel-level ROC AUC via the Mann-Whitney rank statistic, ties at their
/// mid-rank.
pub fn auc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_pair(pred, gt)?;
    let n_pos = gt.positives();
    let n = gt.values().len();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation("ground truth contains a single class".into()));
    }
    let mut order: Vec<(f32, bool)> = pred.values().iter().zip(gt.values()).map(|(&p, &g)| (p, g == 1.0)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && order[j + 1].0 == order[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
