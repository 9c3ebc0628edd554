//! Images, masks, Gaussian corruption and the procedural shapes corpus.

mod io;
mod shapes;

pub use io::{
    image_from_dynamic, image_to_rgb, list_dataset, load_dataset_dir, load_image, load_mask, load_pair,
    map_to_gray, read_manifest, save_image, save_mask, side_by_side, write_manifest, Dataset, ManifestRow,
};
pub use shapes::{make_shapes_corpus, make_shapes_dataset};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default square preprocessing size.
pub const DEFAULT_SIZE: usize = 96;
/// Benchmark noise levels, as standard deviations on the 0-255 scale.
pub const BENCHMARK_SIGMAS: [f64; 4] = [10.0, 30.0, 50.0, 80.0];
/// Ground-truth masks are binarized at this unit-scale threshold.
pub const MASK_THRESHOLD: f32 = 0.5;

/// An RGB or grayscale image with unit-interval intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Tensor<f32>);

impl ImageTensor {
    pub fn new(tensor: Tensor<f32>) -> Result<Self> {
        if !matches!(tensor.channels(), 1 | 3) {
            return Err(Error::Validation(format!("images have 1 or 3 channels, got {}", tensor.channels())));
        }
        if !tensor.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Validation("image values must be finite and within [0, 1]".into()));
        }
        Ok(Self(tensor))
    }

    /// Clamps into [0, 1] first; non-finite values become 0.
    pub fn from_clamped(tensor: Tensor<f32>) -> Result<Self> {
        Self::new(tensor.map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

/// A single-channel map in [0, 1]; ground truth maps are binary.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    map: Tensor<f32>,
    is_binary: bool,
}

impl SaliencyMap {
    pub fn new(map: Tensor<f32>) -> Result<Self> {
        if map.channels() != 1 {
            return Err(Error::Validation(format!("saliency maps have 1 channel, got {}", map.channels())));
        }
        if !map.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Validation("saliency values must be finite and within [0, 1]".into()));
        }
        let is_binary = map.data().iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self { map, is_binary })
    }

    /// Thresholds `map` into a {0, 1} mask: values at or above `threshold`
    /// become 1.
    pub fn binarize(map: &Tensor<f32>, threshold: f32) -> Result<Self> {
        Self::new(map.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.map
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.map
    }

    pub fn values(&self) -> &[f32] {
        self.map.data()
    }

    pub fn is_binary(&self) -> bool {
        self.is_binary
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn positives(&self) -> usize {
        self.values().iter().filter(|&&v| v >= MASK_THRESHOLD).count()
    }
}

/// Additive Gaussian noise; `sigma` is on the 0-255 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let m = Self { sigma, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Validation(format!("noise sigma {} must be finite and >= 0", self.sigma)));
        }
        Ok(())
    }
}

/// Clean image, its corrupted counterpart and the binary object mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriplet {
    pub clean: ImageTensor,
    pub noisy: ImageTensor,
    pub mask: SaliencyMap,
    pub sigma: f64,
}

/// A clean image and its mask before any corruption.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub clean: ImageTensor,
    pub mask: SaliencyMap,
}

impl LabeledImage {
    pub fn new(clean: ImageTensor, mask: SaliencyMap) -> Result<Self> {
        if (clean.height(), clean.width()) != (mask.height(), mask.width()) {
            return Err(Error::Validation(format!(
                "image {}x{} and mask {}x{} differ in size",
                clean.height(),
                clean.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(Self { clean, mask })
    }

    pub fn corrupt(&self, noise: &NoiseModel) -> Result<SampleTriplet> {
        Ok(SampleTriplet {
            clean: self.clean.clone(),
            noisy: corrupt_gaussian(&self.clean, noise)?,
            mask: self.mask.clone(),
            sigma: noise.sigma,
        })
    }
}

/// Mixes a base seed with a sequence of tags (splitmix64 finalizer), so
/// per-sample seeds are independent of iteration order.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// The unclamped noise field `corrupt_gaussian` adds for `noise`, drawn
/// independently per channel and pixel.
pub fn gaussian_noise_field(shape: (usize, usize, usize), noise: &NoiseModel) -> Result<Tensor<f32>> {
    noise.validate()?;
    let (c, h, w) = shape;
    if noise.sigma == 0.0 {
        return Ok(Tensor::zeros(c, h, w));
    }
    let normal = Normal::new(0.0, noise.sigma / 255.0).expect("validated sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(Tensor::from_fn(c, h, w, |_, _, _| normal.sample(&mut rng) as f32))
}

/// `clamp(image + n, 0, 1)` with `n ~ N(0, (sigma/255)^2)` i.i.d. per
/// channel. Zero sigma returns the input unchanged.
pub fn corrupt_gaussian(image: &ImageTensor, noise: &NoiseModel) -> Result<ImageTensor> {
    noise.validate()?;
    if noise.sigma == 0.0 {
        return Ok(image.clone());
    }
    let field = gaussian_noise_field(image.tensor().shape(), noise)?;
    let mut out = image.tensor().clone();
    for (v, n) in out.data_mut().iter_mut().zip(field.data()) {
        *v = (*v + n).clamp(0.0, 1.0);
    }
    ImageTensor::new(out)
}

/// Corrupts every image of `dataset` once, at a noise level drawn per
/// sample from `sigmas`.
pub fn corrupt_dataset(dataset: &Dataset, sigmas: &[f64], seed: u64) -> Result<Vec<SampleTriplet>> {
    if sigmas.is_empty() {
        return Err(Error::Validation("noise level list is empty".into()));
    }
    dataset
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64, 1]));
            let sigma = sigmas[rng.gen_range(0..sigmas.len())];
            item.corrupt(&NoiseModel::new(sigma, derive_seed(seed, &[i as u64, 2]))?)
        })
        .collect()
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let mse = a
        .tensor()
        .data()
        .iter()
        .zip(b.tensor().data())
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.tensor().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: f32, size: usize) -> ImageTensor {
        ImageTensor::new(Tensor::filled(3, size, size, v)).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImageTensor::new(Tensor::from_fn(3, 8, 8, |c, y, x| ((c + y + x) % 5) as f32 / 4.0)).unwrap();
        assert_eq!(corrupt_gaussian(&img, &NoiseModel::new(0.0, 3).unwrap()).unwrap(), img);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(NoiseModel::new(-1.0, 0).is_err());
        assert!(corrupt_gaussian(&gray(0.5, 4), &NoiseModel { sigma: -2.0, seed: 0 }).is_err());
    }

    #[test]
    fn noise_std_matches_sigma() {
        let noise = NoiseModel::new(50.0, 12345).unwrap();
        let field = gaussian_noise_field((3, 256, 256), &noise).unwrap();
        let n = field.len() as f64;
        let mean = field.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (field.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = 50.0 / 255.0;
        assert!((std / target - 1.0).abs() < 0.1, "std {std}");
        // the corrupted image is exactly the clamped sum
        let img = gray(0.5, 256);
        let out = corrupt_gaussian(&img, &noise).unwrap();
        for (o, f) in out.tensor().data().iter().zip(field.data()) {
            assert_eq!(*o, (0.5 + f).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn corruption_is_deterministic_and_seed_sensitive() {
        let img = gray(0.3, 16);
        let a = corrupt_gaussian(&img, &NoiseModel::new(30.0, 1).unwrap()).unwrap();
        let b = corrupt_gaussian(&img, &NoiseModel::new(30.0, 1).unwrap()).unwrap();
        let c = corrupt_gaussian(&img, &NoiseModel::new(30.0, 2).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deviation_grows_with_sigma() {
        let img = ImageTensor::new(Tensor::from_fn(3, 32, 32, |c, y, x| ((c * 7 + y * 3 + x) % 10) as f32 / 10.0)).unwrap();
        let mad: Vec<f64> = BENCHMARK_SIGMAS
            .iter()
            .map(|&s| {
                let out = corrupt_gaussian(&img, &NoiseModel::new(s, 99).unwrap()).unwrap();
                out.tensor().data().iter().zip(img.tensor().data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
            })
            .collect();
        assert!(mad.windows(2).all(|w| w[0] < w[1]), "{mad:?}");
    }

    #[test]
    fn mask_binarization_uses_half_threshold() {
        let raw = Tensor::from_vec(1, 1, 3, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        let m = SaliencyMap::binarize(&raw, MASK_THRESHOLD).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0, 1.0]);
        assert!(m.is_binary());
        assert!(SaliencyMap::new(Tensor::zeros(3, 2, 2)).is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(ImageTensor::new(Tensor::filled(3, 2, 2, 1.5)).is_err());
        assert!(ImageTensor::new(Tensor::filled(2, 2, 2, 0.5)).is_err());
        assert!(ImageTensor::from_clamped(Tensor::filled(3, 2, 2, 1.5)).is_ok());
    }

    #[test]
    fn derived_seeds_differ_per_tag() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[2, 3]), derive_seed(5, &[2, 3]));
    }
}
