//! Procedural stand-in for natural-image saliency datasets: bright
//! geometric objects on a dim textured background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{corrupt_dataset, derive_seed, Dataset, ImageTensor, LabeledImage, SaliencyMap, SampleTriplet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc { cy: f32, cx: f32, r: f32 },
    Rect { cy: f32, cx: f32, hh: f32, hw: f32 },
    Ellipse { cy: f32, cx: f32, ry: f32, rx: f32, angle: f32 },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, size: f32) -> Self {
        let r = rng.gen_range(0.08..0.2) * size;
        let cy = rng.gen_range(0.2..0.8) * size;
        let cx = rng.gen_range(0.2..0.8) * size;
        match rng.gen_range(0..3) {
            0 => Shape::Disc { cy, cx, r },
            1 => Shape::Rect { cy, cx, hh: r * rng.gen_range(0.6..1.0), hw: r * rng.gen_range(0.6..1.0) },
            _ => Shape::Ellipse {
                cy,
                cx,
                ry: r,
                rx: r * rng.gen_range(0.45..0.9),
                angle: rng.gen_range(0.0..std::f32::consts::PI),
            },
        }
    }

    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { cy, cx, hh, hw } => (y - cy).abs() <= hh && (x - cx).abs() <= hw,
            Shape::Ellipse { cy, cx, ry, rx, angle } => {
                let (s, c) = angle.sin_cos();
                let (dy, dx) = (y - cy, x - cx);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
        }
    }
}

/// One clean image and its mask, fully determined by `seed`.
fn render(size: usize, seed: u64) -> LabeledImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f32;
    let base: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.12..0.42));
    let tilt: [f32; 2] = [rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)];
    let freq: [f32; 2] = [rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0)];
    let phase: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f32::consts::TAU));
    let count = rng.gen_range(1..=3);
    let shapes: Vec<(Shape, [f32; 3])> = (0..count)
        .map(|_| {
            let shape = Shape::random(&mut rng, s);
            let colour = std::array::from_fn(|_| rng.gen_range(0.68..0.98));
            (shape, colour)
        })
        .collect();

    let mut mask = Tensor::zeros(1, size, size);
    let mut img = Tensor::zeros(3, size, size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = ((y as f32 + 0.5) / s, (x as f32 + 0.5) / s);
            // last drawn shape wins where shapes overlap
            let hit = shapes.iter().rev().find(|(sh, _)| sh.contains(y as f32 + 0.5, x as f32 + 0.5));
            if hit.is_some() {
                mask.set(0, y, x, 1.0);
            }
            for c in 0..3 {
                let texture = 0.06
                    * (std::f32::consts::TAU * (freq[0] * fx + freq[1] * fy) + phase[c]).sin();
                let v = match hit {
                    Some((_, colour)) => colour[c] - 0.04 * (fx - 0.5),
                    None => base[c] + tilt[0] * (fx - 0.5) + tilt[1] * (fy - 0.5) + texture,
                };
                img.set(c, y, x, v);
            }
        }
    }
    LabeledImage {
        clean: ImageTensor::from_clamped(img).expect("rgb"),
        mask: SaliencyMap::new(mask).expect("binary mask"),
    }
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 || size % 16 != 0 {
        return Err(Error::Validation(format!("corpus size {size} is not a positive multiple of 16")));
    }
    Ok(())
}

/// Clean shapes images with masks, no corruption applied.
pub fn make_shapes_dataset(name: &str, n: usize, size: usize, seed: u64) -> Result<Dataset> {
    check_size(size)?;
    if n == 0 {
        return Err(Error::Validation("corpus needs at least one sample".into()));
    }
    let items: Vec<LabeledImage> = (0..n).map(|i| render(size, derive_seed(seed, &[i as u64, 0]))).collect();
    let ids = (0..n).map(|i| format!("{name}_{i:05}")).collect();
    Ok(Dataset { name: name.to_string(), ids, items })
}

/// `n` triplets; each sample's noise level is drawn from `sigmas`.
pub fn make_shapes_corpus(n: usize, size: usize, sigmas: &[f64], seed: u64) -> Result<Vec<SampleTriplet>> {
    if sigmas.is_empty() {
        return Err(Error::Validation("noise level list is empty".into()));
    }
    corrupt_dataset(&make_shapes_dataset("shapes", n, size, seed)?, sigmas, seed)
}
